#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace harmonize {

struct PairwiseVote {
    std::string item_a;
    std::string item_b;
    std::string winner;  // must equal item_a or item_b
};

struct BtResult {
    std::vector<std::string> items;     // input order
    std::vector<double> strengths;      // w_i, normalized so sum = item count
    std::vector<double> log_scores;     // log w_i shifted to geometric mean 1
    std::vector<double> ll_trace;       // log-likelihood after each sweep
    std::size_t iterations = 0;
    double final_grad_norm = 0.0;
};

namespace detail {

struct DisjointSet {
    std::vector<std::size_t> parent;
    explicit DisjointSet(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }
    std::size_t find(std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace detail

// Maximum-likelihood Bradley-Terry strengths under P(i beats j) =
// w_i/(w_i+w_j), fitted by minorization-maximization:
//   w_i <- wins_i / sum_j comparisons_ij / (w_i + w_j).
// Each sweep is guaranteed not to decrease the likelihood.
inline BtResult bt_fit(const std::vector<PairwiseVote>& votes,
                       const std::vector<std::string>& items, std::size_t max_iter = 10000,
                       double tol = 1e-10, bool pseudo_count = false) {
    const std::size_t n = items.size();
    if (n < 2) throw std::invalid_argument("bt_fit: need at least two items");
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i)
        if (!index.emplace(items[i], i).second)
            throw std::invalid_argument("bt_fit: duplicate item '" + items[i] + "'");
    if (votes.empty()) throw std::invalid_argument("bt_fit: no votes");

    // wins[i][j] = times i beat j (dense; item counts are small)
    std::vector<std::vector<double>> wins(n, std::vector<double>(n, 0.0));
    detail::DisjointSet components(n);
    for (const auto& v : votes) {
        const auto ia = index.find(v.item_a), ib = index.find(v.item_b);
        if (ia == index.end()) throw std::invalid_argument("bt_fit: unknown item '" + v.item_a + "'");
        if (ib == index.end()) throw std::invalid_argument("bt_fit: unknown item '" + v.item_b + "'");
        if (v.item_a == v.item_b)
            throw std::invalid_argument("bt_fit: vote compares '" + v.item_a + "' with itself");
        if (v.winner != v.item_a && v.winner != v.item_b)
            throw std::invalid_argument("bt_fit: winner '" + v.winner + "' is neither side of (" +
                                        v.item_a + ", " + v.item_b + ")");
        if (v.winner == v.item_a)
            wins[ia->second][ib->second] += 1.0;
        else
            wins[ib->second][ia->second] += 1.0;
        components.unite(ia->second, ib->second);
    }

    // Connectivity: strengths are only identifiable within one component.
    {
        std::map<std::size_t, std::vector<std::string>> groups;
        for (std::size_t i = 0; i < n; ++i) groups[components.find(i)].push_back(items[i]);
        if (groups.size() > 1) {
            std::string msg = "bt_fit: comparison graph is disconnected; components:";
            for (const auto& [root, members] : groups) {
                msg += " {";
                for (std::size_t i = 0; i < members.size(); ++i)
                    msg += (i ? "," : "") + members[i];
                msg += "}";
            }
            throw std::invalid_argument(msg);
        }
    }

    if (pseudo_count)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (wins[i][j] + wins[j][i] > 0.0) {
                    wins[i][j] += 0.5;
                    wins[j][i] += 0.5;
                }

    std::vector<double> win_totals(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) win_totals[i] += wins[i][j];

    auto log_likelihood = [&](const std::vector<double>& w) {
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (wins[i][j] > 0.0) ll += wins[i][j] * std::log(w[i] / (w[i] + w[j]));
        return ll;
    };
    // Gradient of the log-likelihood in log-strength coordinates.
    auto grad_norm = [&](const std::vector<double>& w) {
        double norm_sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double g = win_totals[i];
            for (std::size_t j = 0; j < n; ++j) {
                const double nij = wins[i][j] + wins[j][i];
                if (nij > 0.0) g -= nij * w[i] / (w[i] + w[j]);
            }
            norm_sq += g * g;
        }
        return std::sqrt(norm_sq);
    };

    BtResult result;
    result.items = items;
    std::vector<double> w(n, 1.0);
    for (result.iterations = 0; result.iterations < max_iter; ++result.iterations) {
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (win_totals[i] == 0.0) {
                // An item that never won pins its MLE strength at 0; hold it
                // at a floor so ratios stay finite (pseudo-counts avoid this).
                next[i] = 1e-300;
                continue;
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double nij = wins[i][j] + wins[j][i];
                if (nij > 0.0) denom += nij / (w[i] + w[j]);
            }
            next[i] = win_totals[i] / denom;
        }
        const double scale = static_cast<double>(n) / std::accumulate(next.begin(), next.end(), 0.0);
        for (auto& v : next) v *= scale;
        w = std::move(next);
        result.ll_trace.push_back(log_likelihood(w));
        result.final_grad_norm = grad_norm(w);
        if (result.final_grad_norm < tol) {
            ++result.iterations;
            break;
        }
    }

    result.strengths = w;
    double log_mean = 0.0;
    for (double v : w) log_mean += std::log(v);
    log_mean /= static_cast<double>(n);
    for (double v : w) result.log_scores.push_back(std::log(v) - log_mean);
    return result;
}

}  // namespace harmonize
