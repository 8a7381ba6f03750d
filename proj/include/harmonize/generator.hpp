#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "harmonize/errors.hpp"
#include "harmonize/extractor.hpp"
#include "harmonize/layers.hpp"
#include "harmonize/ops.hpp"
#include "harmonize/tensor.hpp"

namespace harmonize {

struct GeneratorConfig {
    std::size_t code_dim = 16;
    std::vector<std::size_t> widths = {64, 128, 256, 512};  // one entry per stride-2 level
};

/// Doubling channel plan: base, 2x, 4x, ..., capped at 8x base.
inline std::vector<std::size_t> generator_widths(std::size_t resolution, std::size_t base_width) {
    const std::size_t depth = resolution >= 256 ? 5 : 4;
    std::vector<std::size_t> widths;
    for (std::size_t i = 0; i < depth; ++i)
        widths.push_back(std::min(base_width << i, base_width << 3));
    return widths;
}

// Skip-connection gate: a 1x1 conv over the concatenated (skip, decoder)
// features squashed through a sigmoid, multiplied back onto the concatenation.
// Driving the gate to 1 recovers a plain skip connection.
template <typename T>
class AttentionBlock {
  public:
    AttentionBlock() = default;
    explicit AttentionBlock(std::size_t channels) : gate_conv_(channels, channels, 1, 1, 0) {}

    void init(Rng& rng, T weight_std) { gate_conv_.init(rng, weight_std); }

    Tensor<T> compute_gate(const Tensor<T>& cat) const {
        return sigmoid(gate_conv_.forward(cat));
    }

    Tensor<T> forward(const Tensor<T>& skip, const Tensor<T>& dec) const {
        Tensor<T> cat = concat_channels<T>({skip, dec});
        return mul(cat, compute_gate(cat));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        gate_conv_.collect(prefix + ".gate", out);
    }

    Conv2dLayer<T>& gate_conv() { return gate_conv_; }

  private:
    Conv2dLayer<T> gate_conv_;
};

/// Stacks [image(3), mask(1), spatially replicated code(L)] along channels.
template <typename T>
Tensor<T> assemble_input(const Tensor<T>& image, const Tensor<T>& mask, const Tensor<T>& code) {
    if (image.rank() != 4 || image.dim(1) != 3)
        throw ShapeError("assemble_input: expected (N,3,H,W) image, got " +
                         shape_str(image.shape()));
    if (mask.rank() != 4 || mask.dim(0) != image.dim(0) || mask.dim(1) != 1 ||
        mask.dim(2) != image.dim(2) || mask.dim(3) != image.dim(3))
        throw ShapeError("assemble_input: mask " + shape_str(mask.shape()) +
                         " does not match image " + shape_str(image.shape()));
    if (code.rank() != 2 || code.dim(0) != image.dim(0))
        throw ShapeError("assemble_input: code batch " + shape_str(code.shape()) +
                         " does not match image batch " + std::to_string(image.dim(0)));
    Tensor<T> code_map = replicate_spatial(code, image.dim(2), image.dim(3));
    return concat_channels<T>({image, mask, code_map});
}

// Attention-enhanced U-Net translating the conditioned (L+4)-channel input
// into a [0,1] image of the same spatial size. The full-resolution input is
// re-injected before the output head so the network starts from the composite
// rather than reconstructing it from scratch.
template <typename T>
class GeneratorNet {
  public:
    GeneratorNet() : GeneratorNet(GeneratorConfig{}) {}

    explicit GeneratorNet(GeneratorConfig config) : config_(std::move(config)) {
        const std::size_t depth = config_.widths.size();
        const std::size_t in_ch = config_.code_dim + 4;
        std::size_t c = in_ch;
        for (std::size_t i = 0; i < depth; ++i) {
            enc_.emplace_back(c, config_.widths[i], 3, 2, 1);
            enc_norms_.emplace_back(config_.widths[i]);
            c = config_.widths[i];
        }
        for (std::size_t i = 0; i + 1 < depth; ++i) {
            const std::size_t cat_ch = config_.widths[i] + config_.widths[i + 1];
            attn_.emplace_back(cat_ch);
            dec_.emplace_back(cat_ch, config_.widths[i], 3, 1, 1);
            dec_norms_.emplace_back(config_.widths[i]);
        }
        head_ = Conv2dLayer<T>(in_ch + config_.widths[0], 3, 3, 1, 1);
    }

    void init(Rng& rng, T weight_std = T(0.02)) {
        for (auto& l : enc_) l.init(rng, weight_std);
        for (auto& n : enc_norms_) n.init();
        for (auto& a : attn_) a.init(rng, weight_std);
        for (auto& l : dec_) l.init(rng, weight_std);
        for (auto& n : dec_norms_) n.init();
        head_.init(rng, weight_std);
    }

    /// (N, L+4, H, W) assembled input -> (N, 3, H, W) image in [0,1].
    Tensor<T> forward(const Tensor<T>& x, bool training) {
        const std::size_t depth = config_.widths.size();
        if (x.rank() != 4 || x.dim(1) != config_.code_dim + 4)
            throw ShapeError("generator: expected (N," + std::to_string(config_.code_dim + 4) +
                             ",H,W) input, got " + shape_str(x.shape()));
        const std::size_t div = std::size_t(1) << depth;
        if (x.dim(2) % div != 0 || x.dim(3) % div != 0)
            throw ShapeError("generator: spatial extent " + std::to_string(x.dim(2)) + "x" +
                             std::to_string(x.dim(3)) + " must be divisible by " +
                             std::to_string(div));

        std::vector<Tensor<T>> feats;
        Tensor<T> e = x;
        for (std::size_t i = 0; i < depth; ++i) {
            e = elu(enc_norms_[i].forward(enc_[i].forward(e), training));
            feats.push_back(e);
        }
        Tensor<T> d = feats[depth - 1];
        for (std::size_t i = depth - 1; i-- > 0;) {
            d = upsample_nearest2x(d);
            Tensor<T> gated = attn_[i].forward(feats[i], d);
            d = elu(dec_norms_[i].forward(dec_[i].forward(gated), training));
        }
        d = upsample_nearest2x(d);
        Tensor<T> full = concat_channels<T>({x, d});
        return sigmoid(head_.forward(full));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (std::size_t i = 0; i < enc_.size(); ++i)
            enc_[i].collect(prefix + ".enc" + std::to_string(i), out);
        for (std::size_t i = 0; i < enc_norms_.size(); ++i)
            enc_norms_[i].collect(prefix + ".enc_bn" + std::to_string(i), out);
        for (std::size_t i = 0; i < attn_.size(); ++i)
            attn_[i].collect(prefix + ".attn" + std::to_string(i), out);
        for (std::size_t i = 0; i < dec_.size(); ++i)
            dec_[i].collect(prefix + ".dec" + std::to_string(i), out);
        for (std::size_t i = 0; i < dec_norms_.size(); ++i)
            dec_norms_[i].collect(prefix + ".dec_bn" + std::to_string(i), out);
        head_.collect(prefix + ".head", out);
    }

    void collect_buffers(const std::string& prefix, ParamList<T>& out) {
        for (std::size_t i = 0; i < enc_norms_.size(); ++i)
            enc_norms_[i].collect_buffers(prefix + ".enc_bn" + std::to_string(i), out);
        for (std::size_t i = 0; i < dec_norms_.size(); ++i)
            dec_norms_[i].collect_buffers(prefix + ".dec_bn" + std::to_string(i), out);
    }

    const GeneratorConfig& config() const { return config_; }
    AttentionBlock<T>& attention(std::size_t i) { return attn_.at(i); }

  private:
    GeneratorConfig config_;
    std::vector<Conv2dLayer<T>> enc_;
    std::vector<BatchNorm2d<T>> enc_norms_;
    std::vector<AttentionBlock<T>> attn_;
    std::vector<Conv2dLayer<T>> dec_;
    std::vector<BatchNorm2d<T>> dec_norms_;
    Conv2dLayer<T> head_;
};

// ---------------------------------------------------------------------------
// End-to-end harmonization calls
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> mask_complement(const Tensor<T>& mask) {
    Tensor<T> out(mask.shape());
    for (std::size_t i = 0; i < mask.numel(); ++i) out[i] = T(1) - mask[i];
    return out;
}

template <typename T>
T mask_coverage(const Tensor<T>& mask) {
    T acc = T(0);
    for (std::size_t i = 0; i < mask.numel(); ++i) acc += mask[i];
    return acc;
}

/// I-hat = G(composite, fg mask, background code): translate toward the
/// background's appearance.
template <typename T>
Tensor<T> harmonize_images(GeneratorNet<T>& gen, ExtractorNet<T>& ext, const Tensor<T>& composite,
                           const Tensor<T>& fg_mask, bool training = false) {
    Tensor<T> bg_mask = mask_complement(fg_mask);
    if (mask_coverage(bg_mask) <= T(0))
        throw EmptyRegionError("harmonize: background region is empty (mask covers everything)");
    Tensor<T> z_b = ext.forward(composite, bg_mask, training);
    Tensor<T> input = assemble_input(composite, fg_mask, z_b);
    return gen.forward(input, training);
}

/// Inverted direction: translate the background toward the composite
/// foreground's appearance by swapping the mask channel and code source.
template <typename T>
Tensor<T> background_harmonize_images(GeneratorNet<T>& gen, ExtractorNet<T>& ext,
                                      const Tensor<T>& composite, const Tensor<T>& fg_mask,
                                      bool training = false) {
    if (mask_coverage(fg_mask) <= T(0))
        throw EmptyRegionError("bg-harmonize: foreground region is empty (no code source)");
    Tensor<T> bg_mask = mask_complement(fg_mask);
    if (mask_coverage(bg_mask) <= T(0))
        throw EmptyRegionError("bg-harmonize: background region is empty (nothing to translate)");
    Tensor<T> zf_tilde = ext.forward(composite, fg_mask, training);
    Tensor<T> input = assemble_input(composite, bg_mask, zf_tilde);
    return gen.forward(input, training);
}

}  // namespace harmonize
