// Evaluation metrics: MSE/fMSE/PSNR, foreground-ratio binning, the six
// domain-code distance requirements, and the inharmony score.
#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "harmonize/extractor.hpp"
#include "harmonize/metrics.hpp"

#include "helpers.hpp"

using harmonize::CodeQuad;
using harmonize::MetricRecord;
using harmonize::Shape;
using harmonize::Tensor;

namespace {

harmonize::ExtractorNet<float> tiny_extractor(harmonize::Rng& rng) {
    harmonize::ExtractorConfig cfg;
    cfg.code_dim = 6;
    cfg.widths = {6, 8};
    harmonize::ExtractorNet<float> net(cfg);
    net.init(rng, 0.05f);
    return net;
}

// Independent recomputation that walks pixels in the opposite nesting order.
MetricRecord loop_metrics(const Tensor<float>& pred, const Tensor<float>& target,
                          const Tensor<float>& mask) {
    const std::size_t c = pred.dim(0), hw = pred.dim(1) * pred.dim(2);
    double total = 0.0, fg_total = 0.0;
    std::size_t fg = 0;
    for (std::size_t p = 0; p < hw; ++p) {
        const bool inside = mask[p] != 0.0f;
        fg += inside;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double d = 255.0 * (double(pred[ch * hw + p]) - double(target[ch * hw + p]));
            total += d * d;
            if (inside) fg_total += d * d;
        }
    }
    MetricRecord rec;
    rec.mse = total / double(c * hw);
    rec.fmse = fg_total / double(c * fg);
    rec.psnr = rec.mse < 255.0 * 255.0 * 1e-10 ? 100.0 : 10.0 * std::log10(255.0 * 255.0 / rec.mse);
    rec.fg_ratio = double(fg) / double(hw);
    return rec;
}

double flat_distance(const std::vector<float>& a, const std::vector<float>& b) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("a perfect prediction scores zero error and the capped psnr") {
    harmonize::Rng rng(1200);
    auto img = test_util::random_tensor<float>(rng, Shape{3, 8, 8}, 0.0f, 1.0f);
    auto mask = test_util::random_mask<float>(rng, Shape{1, 8, 8}, 0.4);
    std::size_t fg = 0;
    for (float v : mask.values()) fg += v != 0.0f;

    auto rec = harmonize::compute_metrics(img, img, mask, "self");
    REQUIRE(rec.id == "self");
    REQUIRE(rec.mse == 0.0);
    REQUIRE(rec.fmse == 0.0);
    REQUIRE(rec.psnr == 100.0);
    REQUIRE(rec.fg_ratio == double(fg) / 64.0);
}

TEST_CASE("with a full-coverage mask fmse collapses to mse") {
    harmonize::Rng rng(1201);
    Tensor<float> full(Shape{1, 6, 7}, std::vector<float>(42, 1.0f));
    for (int i = 0; i < 100; ++i) {
        auto pred = test_util::random_tensor<float>(rng, Shape{3, 6, 7}, 0.0f, 1.0f);
        auto target = test_util::random_tensor<float>(rng, Shape{3, 6, 7}, 0.0f, 1.0f);
        auto rec = harmonize::compute_metrics(pred, target, full);
        REQUIRE(rec.fmse == rec.mse);
        REQUIRE(rec.fg_ratio == 1.0);
    }
}

TEST_CASE("metrics agree with a straightforward recomputation") {
    harmonize::Rng rng(1202);
    for (int i = 0; i < 20; ++i) {
        auto pred = test_util::random_tensor<float>(rng, Shape{3, 9, 11}, 0.0f, 1.0f);
        auto target = test_util::random_tensor<float>(rng, Shape{3, 9, 11}, 0.0f, 1.0f);
        auto mask = test_util::random_mask<float>(rng, Shape{1, 9, 11}, 0.3);
        auto got = harmonize::compute_metrics(pred, target, mask);
        auto want = loop_metrics(pred, target, mask);
        REQUIRE_THAT(got.mse, Catch::Matchers::WithinRel(want.mse, 1e-12));
        REQUIRE_THAT(got.fmse, Catch::Matchers::WithinRel(want.fmse, 1e-12));
        REQUIRE_THAT(got.psnr, Catch::Matchers::WithinRel(want.psnr, 1e-12));
        REQUIRE(got.fg_ratio == want.fg_ratio);
    }
}

TEST_CASE("a constant offset of ten intensity levels pins mse and psnr") {
    harmonize::Rng rng(1203);
    auto target = test_util::random_tensor<float>(rng, Shape{3, 12, 12}, 0.2f, 0.6f);
    std::vector<float> shifted = target.values();
    for (float& v : shifted) v += 10.0f / 255.0f;
    Tensor<float> pred(target.shape(), std::move(shifted));
    Tensor<float> mask(Shape{1, 12, 12}, std::vector<float>(144, 1.0f));

    auto rec = harmonize::compute_metrics(pred, target, mask);
    REQUIRE_THAT(rec.mse, Catch::Matchers::WithinAbs(100.0, 1e-2));
    REQUIRE_THAT(rec.fmse, Catch::Matchers::WithinAbs(100.0, 1e-2));
    REQUIRE_THAT(rec.psnr, Catch::Matchers::WithinAbs(10.0 * std::log10(65025.0 / 100.0), 1e-3));
    REQUIRE_THAT(rec.psnr, Catch::Matchers::WithinAbs(28.1308, 1e-3));
}

TEST_CASE("psnr falls strictly as mse grows and saturates near zero error") {
    REQUIRE(harmonize::psnr_from_mse(0.0) == 100.0);
    REQUIRE(harmonize::psnr_from_mse(65025.0 * 1e-10 * 0.99) == 100.0);
    double prev = harmonize::psnr_from_mse(0.5);
    for (double mse : {1.0, 10.0, 100.0, 1000.0, 65025.0}) {
        const double cur = harmonize::psnr_from_mse(mse);
        REQUIRE(cur < prev);
        prev = cur;
    }
    REQUIRE(harmonize::psnr_from_mse(65025.0) == 0.0);
}

TEST_CASE("ratio bins cover exactly the advertised half-open intervals") {
    auto counts = [](double ratio) {
        MetricRecord r;
        r.fg_ratio = ratio;
        auto summary = harmonize::bin_by_fg_ratio({r});
        std::array<std::size_t, 4> c{};
        for (std::size_t i = 0; i < 4; ++i) c[i] = summary.bins[i].count;
        return c;
    };
    REQUIRE(counts(0.10) == std::array<std::size_t, 4>{0, 1, 0, 1});
    REQUIRE(counts(0.03) == std::array<std::size_t, 4>{1, 0, 0, 1});
    REQUIRE(counts(0.05) == std::array<std::size_t, 4>{1, 0, 0, 1});  // upper edge inclusive
    REQUIRE(counts(0.15) == std::array<std::size_t, 4>{0, 1, 0, 1});
    REQUIRE(counts(0.50) == std::array<std::size_t, 4>{0, 0, 1, 1});
    REQUIRE(counts(1.00) == std::array<std::size_t, 4>{0, 0, 1, 1});
    REQUIRE(counts(0.00) == std::array<std::size_t, 4>{1, 0, 0, 1});  // overall bin keeps zero
}

TEST_CASE("bin means aggregate exactly the member records") {
    MetricRecord a{"a", 10.0, 40.0, 0.0, 0.03};
    MetricRecord b{"b", 20.0, 50.0, 0.0, 0.10};
    MetricRecord c{"c", 60.0, 90.0, 0.0, 0.50};
    auto summary = harmonize::bin_by_fg_ratio({a, b, c});

    REQUIRE(summary.bins[0].count == 1);
    REQUIRE(summary.bins[0].mean_mse == a.mse);
    REQUIRE(summary.bins[0].mean_fmse == a.fmse);
    REQUIRE(summary.bins[1].count == 1);
    REQUIRE(summary.bins[1].mean_mse == b.mse);
    REQUIRE(summary.bins[2].count == 1);
    REQUIRE(summary.bins[2].mean_fmse == c.fmse);
    REQUIRE(summary.bins[3].count == 3);
    REQUIRE(summary.bins[3].mean_mse == (a.mse + b.mse + c.mse) / 3.0);
    REQUIRE(summary.bins[3].mean_fmse == (a.fmse + b.fmse + c.fmse) / 3.0);

    // Duplicated records leave every populated mean at the record's own value.
    auto same = harmonize::bin_by_fg_ratio({b, b, b});
    REQUIRE(same.bins[1].count == 3);
    REQUIRE(same.bins[1].mean_mse == b.mse);
    REQUIRE(same.bins[3].mean_fmse == b.fmse);
    REQUIRE(same.bins[0].count == 0);
    REQUIRE(same.bins[0].mean_mse == 0.0);
}

TEST_CASE("metric validation rejects bad shapes and empty foregrounds") {
    harmonize::Rng rng(1204);
    auto img = test_util::random_tensor<float>(rng, Shape{3, 8, 8}, 0.0f, 1.0f);
    auto small = test_util::random_tensor<float>(rng, Shape{3, 4, 4}, 0.0f, 1.0f);
    Tensor<float> mask(Shape{1, 8, 8}, std::vector<float>(64, 1.0f));
    Tensor<float> empty(Shape{1, 8, 8}, std::vector<float>(64, 0.0f));

    REQUIRE_THROWS_AS(harmonize::compute_metrics(img, small, mask), harmonize::ShapeError);
    REQUIRE_THROWS_AS(harmonize::compute_metrics(small, small, mask), harmonize::ShapeError);
    REQUIRE_THROWS_WITH(harmonize::compute_metrics(img, img, empty),
                        Catch::Matchers::ContainsSubstring("fmse undefined"));
    REQUIRE_THROWS_AS(harmonize::bin_by_fg_ratio({}), std::invalid_argument);
}

TEST_CASE("distance requirements treat ties as failures") {
    CodeQuad q;
    q.zf_tilde = {1.0f, 2.0f, 3.0f};
    q.z_b = q.zf_tilde;
    q.z_f = q.zf_tilde;
    q.zf_hat = q.zf_tilde;
    auto report = harmonize::requirement_ratios({q, q});
    REQUIRE(report.count == 2);
    for (double r : report.ratios) REQUIRE(r == 0.0);
    REQUIRE(report.all_six == 0.0);
}

TEST_CASE("a clearly displaced composite code satisfies all six requirements") {
    CodeQuad q;
    q.z_b = {0.0f, 0.0f, 0.0f};
    q.z_f = {0.0f, 0.0f, 0.0f};
    q.zf_hat = {0.0f, 0.0f, 0.0f};
    q.zf_tilde = {10.0f, 0.0f, 0.0f};
    auto report = harmonize::requirement_ratios({q});
    for (double r : report.ratios) REQUIRE(r == 1.0);
    REQUIRE(report.all_six == 1.0);

    // Harmonization that moved most of the way back: codes near z_f.
    CodeQuad partial;
    partial.z_b = {0.0f, 0.0f, 0.0f};
    partial.z_f = {1.0f, 0.0f, 0.0f};
    partial.zf_hat = {1.5f, 0.0f, 0.0f};
    partial.zf_tilde = {10.0f, 0.0f, 0.0f};
    auto rep2 = harmonize::requirement_ratios({partial});
    for (double r : rep2.ratios) REQUIRE(r == 1.0);
}

TEST_CASE("requirement ratios match a per-quadruple recomputation") {
    harmonize::Rng rng(1205);
    std::vector<CodeQuad> quads(100);
    for (auto& q : quads) {
        auto draw = [&rng] {
            std::vector<float> v(8);
            for (float& x : v) x = float(rng.uniform(-1.0, 1.0));
            return v;
        };
        q.zf_tilde = draw();
        q.z_b = draw();
        q.z_f = draw();
        q.zf_hat = draw();
    }
    auto report = harmonize::requirement_ratios(quads);
    REQUIRE(report.count == 100);

    std::array<double, 6> want{};
    double want_all = 0.0;
    for (const auto& q : quads) {
        const double d_bf = flat_distance(q.z_b, q.z_f);
        const double d_bft = flat_distance(q.z_b, q.zf_tilde);
        const double d_bfh = flat_distance(q.z_b, q.zf_hat);
        const double d_ffh = flat_distance(q.z_f, q.zf_hat);
        const double d_fft = flat_distance(q.z_f, q.zf_tilde);
        const double d_fhft = flat_distance(q.zf_hat, q.zf_tilde);
        const std::array<bool, 6> ok = {d_bf < d_bft,  d_bfh < d_bft,  d_ffh < d_fft,
                                        d_ffh < d_fhft, d_bfh < d_fhft, d_bf < d_fft};
        bool every = true;
        for (std::size_t i = 0; i < 6; ++i) {
            want[i] += ok[i];
            every = every && ok[i];
        }
        want_all += every;
    }
    for (std::size_t i = 0; i < 6; ++i) REQUIRE(report.ratios[i] == want[i] / 100.0);
    REQUIRE(report.all_six == want_all / 100.0);
    for (double r : report.ratios) REQUIRE(report.all_six <= r);

    REQUIRE_THROWS_AS(harmonize::requirement_ratios({}), std::invalid_argument);
}

TEST_CASE("inharmony score is the distance between the two region codes") {
    harmonize::Rng rng(1206);
    auto net = tiny_extractor(rng);
    auto image = test_util::random_tensor<float>(rng, Shape{3, 16, 16}, 0.0f, 1.0f);
    Tensor<float> mask(Shape{1, 16, 16});
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) mask[y * 16 + x] = x < 8 ? 1.0f : 0.0f;

    const double score = harmonize::inharmony_score(image, mask, net);

    harmonize::NoGradGuard no_grad;
    Tensor<float> batched(Shape{1, 3, 16, 16}, std::vector<float>(image.values()));
    Tensor<float> m(Shape{1, 1, 16, 16}, std::vector<float>(mask.values()));
    Tensor<float> mbar(m.shape());
    for (std::size_t i = 0; i < m.numel(); ++i) mbar[i] = 1.0f - m[i];
    auto z_b = net.forward(batched, mbar, false);
    auto z_f = net.forward(batched, m, false);
    REQUIRE(score == harmonize::code_distance_flat(z_b.values(), z_f.values()));
    REQUIRE(score > 0.0);

    // Scoring twice is deterministic.
    REQUIRE(harmonize::inharmony_score(image, mask, net) == score);
}

TEST_CASE("inharmony score rejects one-region masks") {
    harmonize::Rng rng(1207);
    auto net = tiny_extractor(rng);
    auto image = test_util::random_tensor<float>(rng, Shape{3, 16, 16}, 0.0f, 1.0f);
    Tensor<float> ones(Shape{1, 16, 16}, std::vector<float>(256, 1.0f));
    Tensor<float> zeros(Shape{1, 16, 16}, std::vector<float>(256, 0.0f));
    REQUIRE_THROWS_WITH(harmonize::inharmony_score(image, ones, net),
                        Catch::Matchers::ContainsSubstring("empty background"));
    REQUIRE_THROWS_WITH(harmonize::inharmony_score(image, zeros, net),
                        Catch::Matchers::ContainsSubstring("empty foreground"));
}

TEST_CASE("strongly shifted composites score as more inharmonious") {
    // An extractor with uniform positive kernels encodes the mean intensity of
    // the pooled region, so the score must react directly to a brightness gap
    // between foreground and background.
    harmonize::ExtractorConfig cfg;
    cfg.code_dim = 3;
    cfg.widths = {4, 4};
    harmonize::ExtractorNet<float> net(cfg);
    harmonize::ParamList<float> params;
    net.collect("e", params);
    for (auto& [name, p] : params)
        if (name.size() > 7 && name.compare(name.size() - 7, 7, ".weight") == 0)
            for (std::size_t i = 0; i < p.numel(); ++i) p[i] = 0.05f;

    harmonize::Rng rng(1208);
    for (int trial = 0; trial < 8; ++trial) {
        auto image = test_util::random_tensor<float>(rng, Shape{3, 16, 16}, 0.2f, 0.5f);
        Tensor<float> mask(Shape{1, 16, 16});
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 16; ++x)
                mask[y * 16 + x] = (y >= 4 && y < 12 && x >= 4 && x < 12) ? 1.0f : 0.0f;
        std::vector<float> comp = image.values();
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < 256; ++p)
                if (mask[p] != 0.0f) comp[c * 256 + p] += 0.5f;
        Tensor<float> composite(image.shape(), std::move(comp));

        const double real_score = harmonize::inharmony_score(image, mask, net);
        const double comp_score = harmonize::inharmony_score(composite, mask, net);
        REQUIRE(comp_score > real_score);
    }
}
