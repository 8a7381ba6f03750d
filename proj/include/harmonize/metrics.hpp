#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "harmonize/errors.hpp"
#include "harmonize/extractor.hpp"
#include "harmonize/tensor.hpp"

namespace harmonize {

struct MetricRecord {
    std::string id;
    double mse = 0.0;      // on the [0,255] scale, all pixels and channels
    double fmse = 0.0;     // same, foreground pixels only
    double psnr = 0.0;     // dB, capped at 100
    double fg_ratio = 0.0;
};

inline double psnr_from_mse(double mse) {
    constexpr double peak_sq = 255.0 * 255.0;
    if (mse < peak_sq * 1e-10) return 100.0;
    return 10.0 * std::log10(peak_sq / mse);
}

/// MSE/fMSE/PSNR of a prediction against its target, both (3,H,W) in [0,1].
inline MetricRecord compute_metrics(const Tensor<float>& pred, const Tensor<float>& target,
                                    const Tensor<float>& fg_mask, const std::string& id = "") {
    if (pred.rank() != 3 || pred.shape() != target.shape())
        throw ShapeError("metrics: prediction " + shape_str(pred.shape()) +
                         " does not match target " + shape_str(target.shape()));
    if (fg_mask.rank() != 3 || fg_mask.dim(0) != 1 || fg_mask.dim(1) != pred.dim(1) ||
        fg_mask.dim(2) != pred.dim(2))
        throw ShapeError("metrics: mask " + shape_str(fg_mask.shape()) + " does not match image " +
                         shape_str(pred.shape()));

    const std::size_t c = pred.dim(0), hw = pred.dim(1) * pred.dim(2);
    double total = 0.0, fg_total = 0.0;
    std::size_t fg_count = 0;
    for (std::size_t p = 0; p < hw; ++p) fg_count += fg_mask[p] != 0.0f;
    if (fg_count == 0) throw EmptyRegionError("metrics: empty foreground, fmse undefined");

    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) {
            const double d =
                255.0 * (static_cast<double>(pred[ch * hw + p]) - static_cast<double>(target[ch * hw + p]));
            total += d * d;
            if (fg_mask[p] != 0.0f) fg_total += d * d;
        }

    MetricRecord rec;
    rec.id = id;
    rec.mse = total / static_cast<double>(c * hw);
    rec.fmse = fg_total / static_cast<double>(c * fg_count);
    rec.psnr = psnr_from_mse(rec.mse);
    rec.fg_ratio = static_cast<double>(fg_count) / static_cast<double>(hw);
    return rec;
}

// ---------------------------------------------------------------------------
// Foreground-ratio binning
// ---------------------------------------------------------------------------

struct RatioBin {
    double lo, hi;  // membership: lo < ratio <= hi, except the first bin includes 0
    std::size_t count = 0;
    double mean_mse = 0.0;
    double mean_fmse = 0.0;
};

struct BinnedSummary {
    std::array<RatioBin, 4> bins{
        RatioBin{0.0, 0.05}, RatioBin{0.05, 0.15}, RatioBin{0.15, 1.0}, RatioBin{0.0, 1.0}};
};

inline BinnedSummary bin_by_fg_ratio(const std::vector<MetricRecord>& records) {
    if (records.empty()) throw std::invalid_argument("binning: empty record list");
    BinnedSummary summary;
    for (auto& bin : summary.bins) {
        double mse_sum = 0.0, fmse_sum = 0.0;
        for (const auto& r : records) {
            const bool inside = (r.fg_ratio > bin.lo || (bin.lo == 0.0 && r.fg_ratio == 0.0)) &&
                                r.fg_ratio <= bin.hi;
            if (!inside) continue;
            ++bin.count;
            mse_sum += r.mse;
            fmse_sum += r.fmse;
        }
        if (bin.count > 0) {
            bin.mean_mse = mse_sum / static_cast<double>(bin.count);
            bin.mean_fmse = fmse_sum / static_cast<double>(bin.count);
        }
    }
    return summary;
}

// ---------------------------------------------------------------------------
// Domain-code distance requirements
// ---------------------------------------------------------------------------

/// Flat-vector view of one sample's four codes.
struct CodeQuad {
    std::vector<float> zf_tilde;  // composite foreground
    std::vector<float> z_b;       // background
    std::vector<float> z_f;       // real foreground
    std::vector<float> zf_hat;    // harmonized foreground
};

struct RequirementReport {
    // Satisfaction ratios for, in order:
    //   0: d(b,f)  < d(b,f~)      3: d(f^,f) < d(f^,f~)
    //   1: d(b,f^) < d(b,f~)      4: d(f^,b) < d(f^,f~)
    //   2: d(f,f^) < d(f,f~)      5: d(f,b)  < d(f,f~)
    std::array<double, 6> ratios{};
    double all_six = 0.0;
    std::size_t count = 0;

    static const std::array<const char*, 6>& names() {
        static const std::array<const char*, 6> n = {
            "d(b,f)<d(b,f~)",  "d(b,f^)<d(b,f~)", "d(f,f^)<d(f,f~)",
            "d(f^,f)<d(f^,f~)", "d(f^,b)<d(f^,f~)", "d(f,b)<d(f,f~)"};
        return n;
    }
};

/// Checks the six strict distance inequalities per quadruple; ties fail.
inline RequirementReport requirement_ratios(const std::vector<CodeQuad>& quads) {
    if (quads.empty()) throw std::invalid_argument("requirements: empty quadruple list");
    RequirementReport report;
    report.count = quads.size();
    std::size_t all = 0;
    for (const auto& q : quads) {
        const double d_bf = code_distance_flat(q.z_b, q.z_f);
        const double d_bft = code_distance_flat(q.z_b, q.zf_tilde);
        const double d_bfh = code_distance_flat(q.z_b, q.zf_hat);
        const double d_ffh = code_distance_flat(q.z_f, q.zf_hat);
        const double d_fft = code_distance_flat(q.z_f, q.zf_tilde);
        const double d_fhft = code_distance_flat(q.zf_hat, q.zf_tilde);
        const std::array<bool, 6> ok = {
            d_bf < d_bft,  d_bfh < d_bft,  d_ffh < d_fft,
            d_ffh < d_fhft, d_bfh < d_fhft, d_bf < d_fft,
        };
        bool every = true;
        for (std::size_t i = 0; i < 6; ++i) {
            report.ratios[i] += ok[i];
            every = every && ok[i];
        }
        all += every;
    }
    for (auto& r : report.ratios) r /= static_cast<double>(report.count);
    report.all_six = static_cast<double>(all) / static_cast<double>(report.count);
    return report;
}

// ---------------------------------------------------------------------------
// Inharmony score
// ---------------------------------------------------------------------------

/// d(background code, foreground code) of one image; higher = more
/// inharmonious.
inline double inharmony_score(const Tensor<float>& image, const Tensor<float>& fg_mask,
                              ExtractorNet<float>& extractor) {
    if (image.rank() != 3 || fg_mask.rank() != 3)
        throw ShapeError("inharmony: expected single (C,H,W) image and (1,H,W) mask");
    std::size_t fg = 0;
    for (std::size_t i = 0; i < fg_mask.numel(); ++i) fg += fg_mask[i] != 0.0f;
    if (fg == 0) throw EmptyRegionError("inharmony: empty foreground");
    if (fg == fg_mask.numel()) throw EmptyRegionError("inharmony: empty background");

    NoGradGuard no_grad;
    Tensor<float> img_b(Shape{1, image.dim(0), image.dim(1), image.dim(2)},
                        std::vector<float>(image.values()));
    Tensor<float> m(Shape{1, 1, fg_mask.dim(1), fg_mask.dim(2)},
                    std::vector<float>(fg_mask.values()));
    Tensor<float> mbar(m.shape());
    for (std::size_t i = 0; i < m.numel(); ++i) mbar[i] = 1.0f - m[i];

    Tensor<float> z_b = extractor.forward(img_b, mbar, false);
    Tensor<float> zf = extractor.forward(img_b, m, false);
    return code_distance_flat(z_b.values(), zf.values());
}

}  // namespace harmonize
