#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "harmonize/tensor.hpp"

namespace harmonize {

template <typename T>
struct AdamConfig {
    T lr = T(2e-4);
    T beta1 = T(0.5);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

/// Adam with per-parameter first/second moment estimates and bias correction.
template <typename T>
class Adam {
  public:
    Adam() = default;

    explicit Adam(std::vector<std::pair<std::string, Tensor<T>>> params, AdamConfig<T> config = {})
        : params_(std::move(params)), config_(config) {
        slots_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            slots_[i].m.assign(params_[i].second.numel(), T(0));
            slots_[i].v.assign(params_[i].second.numel(), T(0));
        }
    }

    void zero_grad() {
        for (auto& [name, p] : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        const T bc1 = T(1) - std::pow(config_.beta1, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(config_.beta2, static_cast<T>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i].second;
            if (!p.has_grad()) continue;
            const std::vector<T>& g = p.grad();
            auto& m = slots_[i].m;
            auto& v = slots_[i].v;
            for (std::size_t j = 0; j < g.size(); ++j) {
                m[j] = config_.beta1 * m[j] + (T(1) - config_.beta1) * g[j];
                v[j] = config_.beta2 * v[j] + (T(1) - config_.beta2) * g[j] * g[j];
                const T mhat = m[j] / bc1;
                const T vhat = v[j] / bc2;
                p[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
            }
        }
    }

    std::uint64_t steps_taken() const { return t_; }
    void set_steps_taken(std::uint64_t t) { t_ = t; }

    const std::vector<std::pair<std::string, Tensor<T>>>& params() const { return params_; }

    std::vector<T>& moment1(std::size_t i) { return slots_[i].m; }
    std::vector<T>& moment2(std::size_t i) { return slots_[i].v; }

  private:
    struct Slot {
        std::vector<T> m, v;
    };
    std::vector<std::pair<std::string, Tensor<T>>> params_;
    std::vector<Slot> slots_;
    AdamConfig<T> config_;
    std::uint64_t t_ = 0;
};

}  // namespace harmonize
