#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "harmonize/errors.hpp"
#include "harmonize/image.hpp"
#include "harmonize/rng.hpp"
#include "harmonize/tensor.hpp"

namespace harmonize {

struct SynthSpec {
    std::uint64_t seed = 7;
    std::size_t count = 200;
    std::size_t resolution = 64;
    double gain_min = 0.5, gain_max = 1.5;
    double bias_min = -0.2, bias_max = 0.2;
    double gamma_min = 0.7, gamma_max = 1.4;
    double ratio_min = 0.05, ratio_max = 0.4;  // foreground area fraction

    void validate() const {
        if (resolution == 0) throw std::invalid_argument("synth: resolution must be positive");
        if (!(gain_min < gain_max) || !(bias_min < bias_max) || !(gamma_min < gamma_max))
            throw std::invalid_argument("synth: shift ranges must be non-degenerate");
        if (!(ratio_min < ratio_max) || ratio_min <= 0.0 || ratio_max >= 1.0)
            throw std::invalid_argument("synth: ratio range must be inside (0,1)");
    }
};

// Smooth "scene": a base color plus a few low-frequency plane waves shared
// across channels, clamped to [0.1, 0.9]. Smoothness makes the foreground's
// true appearance predictable from its surroundings, so harmonization is
// learnable at desk scale; the margin from {0,1} keeps the generator's
// sigmoid head out of saturation.
inline Tensor<float> synth_scene(std::size_t resolution, Rng& rng) {
    const std::size_t r = resolution;
    std::array<double, 3> base;
    for (auto& b : base) b = rng.uniform(0.35, 0.65);
    constexpr std::size_t waves = 3;
    std::array<double, waves> fx, fy, phase;
    std::array<std::array<double, 3>, waves> amp;
    for (std::size_t k = 0; k < waves; ++k) {
        fx[k] = rng.uniform(-1.5, 1.5);
        fy[k] = rng.uniform(-1.5, 1.5);
        phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (auto& a : amp[k]) a = rng.uniform(0.05, 0.15);
    }
    Tensor<float> img(Shape{3, r, r});
    for (std::size_t y = 0; y < r; ++y)
        for (std::size_t x = 0; x < r; ++x) {
            std::array<double, 3> v = base;
            for (std::size_t k = 0; k < waves; ++k) {
                const double s = std::sin(2.0 * std::numbers::pi *
                                              (fx[k] * static_cast<double>(x) / r +
                                               fy[k] * static_cast<double>(y) / r) +
                                          phase[k]);
                for (std::size_t c = 0; c < 3; ++c) v[c] += amp[k][c] * s;
            }
            for (std::size_t c = 0; c < 3; ++c)
                img[(c * r + y) * r + x] = static_cast<float>(std::clamp(v[c], 0.1, 0.9));
        }
    return img;
}

/// Random rectangle or ellipse mask whose measured area fraction lands in
/// [ratio_min, ratio_max]; resamples on rounding overshoot.
inline Tensor<float> synth_mask(std::size_t resolution, double ratio_min, double ratio_max,
                                Rng& rng) {
    const std::size_t r = resolution;
    const double total = static_cast<double>(r * r);
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double ratio = rng.log_uniform(ratio_min, ratio_max);
        const double area = ratio * total;
        const double aspect = rng.uniform(0.5, 2.0);
        const bool ellipse = rng.uniform() < 0.5;

        Tensor<float> mask(Shape{1, r, r});
        std::size_t count = 0;
        if (!ellipse) {
            std::size_t w = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
            std::size_t h = static_cast<std::size_t>(std::lround(area / std::max<double>(w, 1)));
            w = std::clamp<std::size_t>(w, 1, r);
            h = std::clamp<std::size_t>(h, 1, r);
            const std::size_t x0 = rng.uniform_int(0, r - w);
            const std::size_t y0 = rng.uniform_int(0, r - h);
            for (std::size_t y = y0; y < y0 + h; ++y)
                for (std::size_t x = x0; x < x0 + w; ++x) mask[y * r + x] = 1.0f;
            count = w * h;
        } else {
            // pi*a*b = area, a/b = aspect
            double a = std::sqrt(area * aspect / std::numbers::pi);
            double b = area / (std::numbers::pi * a);
            a = std::min(a, r / 2.0 - 0.5);
            b = std::min(b, r / 2.0 - 0.5);
            const double cx = rng.uniform(a, r - a);
            const double cy = rng.uniform(b, r - b);
            for (std::size_t y = 0; y < r; ++y)
                for (std::size_t x = 0; x < r; ++x) {
                    const double dx = (x + 0.5 - cx) / a, dy = (y + 0.5 - cy) / b;
                    if (dx * dx + dy * dy <= 1.0) {
                        mask[y * r + x] = 1.0f;
                        ++count;
                    }
                }
        }
        const double measured = static_cast<double>(count) / total;
        if (measured >= ratio_min && measured <= ratio_max) return mask;
    }
    throw std::runtime_error("synth: could not sample a mask in the requested ratio range");
}

/// Applies the per-channel appearance shift v -> clamp01(gain * v^gamma + bias)
/// to foreground pixels only; background stays bit-identical.
inline Tensor<float> apply_color_shift(const Tensor<float>& real, const Tensor<float>& mask,
                                       const std::array<double, 3>& gain,
                                       const std::array<double, 3>& bias,
                                       const std::array<double, 3>& gamma) {
    if (real.rank() != 3 || real.dim(0) != 3)
        throw ShapeError("color_shift: expected (3,H,W) image, got " + shape_str(real.shape()));
    if (mask.rank() != 3 || mask.dim(0) != 1 || mask.dim(1) != real.dim(1) ||
        mask.dim(2) != real.dim(2))
        throw ShapeError("color_shift: mask " + shape_str(mask.shape()) + " does not match image " +
                         shape_str(real.shape()));
    const std::size_t hw = real.dim(1) * real.dim(2);
    Tensor<float> out(real.shape());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < hw; ++p) {
            const float v = real[c * hw + p];
            if (mask[p] >= 0.5f) {
                const double powed = gamma[c] == 1.0 ? v : std::pow(static_cast<double>(v), gamma[c]);
                out[c * hw + p] =
                    static_cast<float>(std::clamp(gain[c] * powed + bias[c], 0.0, 1.0));
            } else {
                out[c * hw + p] = v;
            }
        }
    return out;
}

struct SynthTriplet {
    std::string id;
    Tensor<float> composite, real, mask;
};

/// One scene + mask + sampled shift, drawn deterministically from the RNG.
inline SynthTriplet synthesize_composite(const SynthSpec& spec, Rng& rng, const std::string& id) {
    spec.validate();
    Tensor<float> real = synth_scene(spec.resolution, rng);
    Tensor<float> mask = synth_mask(spec.resolution, spec.ratio_min, spec.ratio_max, rng);
    std::array<double, 3> gain, bias, gamma;
    for (std::size_t c = 0; c < 3; ++c) {
        gain[c] = rng.uniform(spec.gain_min, spec.gain_max);
        bias[c] = rng.uniform(spec.bias_min, spec.bias_max);
        gamma[c] = rng.uniform(spec.gamma_min, spec.gamma_max);
    }
    return {id, apply_color_shift(real, mask, gain, bias, gamma), real, mask};
}

// Writes a train/test dataset under root in the standard layout:
// composite_images/, real_images/, masks/, train.txt, test.txt. Quantization
// to 8-bit happens exactly once, here at save time.
inline void generate_dataset(const std::string& root, const SynthSpec& spec,
                             std::size_t train_count, std::size_t test_count) {
    spec.validate();
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(root) / "composite_images");
    fs::create_directories(fs::path(root) / "real_images");
    fs::create_directories(fs::path(root) / "masks");

    Rng rng(spec.seed);
    std::ofstream train_list(fs::path(root) / "train.txt");
    std::ofstream test_list(fs::path(root) / "test.txt");
    if (!train_list || !test_list) throw DatasetError("synth: cannot write split lists in " + root);

    const std::size_t total = train_count + test_count;
    for (std::size_t i = 0; i < total; ++i) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "scene_%04llu", static_cast<unsigned long long>(i));
        SynthTriplet t = synthesize_composite(spec, rng, idbuf);
        write_png_rgb((fs::path(root) / "composite_images" / (t.id + ".png")).string(),
                      t.composite);
        write_png_rgb((fs::path(root) / "real_images" / (t.id + ".png")).string(), t.real);
        write_png_gray((fs::path(root) / "masks" / (t.id + ".png")).string(), t.mask);
        (i < train_count ? train_list : test_list) << t.id << "\n";
    }
}

}  // namespace harmonize
