#pragma once

#include <stdexcept>
#include <string>

#include "harmonize/extractor.hpp"
#include "harmonize/ops.hpp"
#include "harmonize/tensor.hpp"

namespace harmonize {

template <typename T>
struct LossConfig {
    T margin = T(1);
    T lambda = T(0.01);
    // When set, the triplet terms stop gradients through the codes of the
    // composite/real inputs and only shape the harmonized-foreground code.
    bool detach_targets = false;

    void validate() const {
        if (!(margin > T(0))) throw std::invalid_argument("loss config: margin must be positive");
        if (lambda < T(0)) throw std::invalid_argument("loss config: lambda must be non-negative");
    }
};

/// The four codes produced per training sample, each a (N,L) batch.
template <typename T>
struct CodeQuadruple {
    Tensor<T> zf_tilde;  // composite foreground
    Tensor<T> z_b;       // background
    Tensor<T> z_f;       // real foreground
    Tensor<T> zf_hat;    // harmonized foreground
};

/// Mean absolute difference over every element of the two images.
template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& output, const Tensor<T>& real) {
    return mean(abs_op(sub(output, real)));
}

/// Batch-mean hinge max(d(a,p) - d(a,n) + m, 0) over per-row code distances.
template <typename T>
Tensor<T> triplet_loss(const Tensor<T>& anchor, const Tensor<T>& positive,
                       const Tensor<T>& negative, T margin) {
    Tensor<T> d_ap = code_distance(anchor, positive);
    Tensor<T> d_an = code_distance(anchor, negative);
    return mean(relu(add_scalar(sub(d_ap, d_an), margin)));
}

template <typename T>
struct LossBreakdown {
    Tensor<T> total;  // rec + lambda * (ffhat + fhatb)
    Tensor<T> rec;
    Tensor<T> ffhat;  // anchors the real foreground code
    Tensor<T> fhatb;  // anchors the harmonized foreground code
};

template <typename T>
LossBreakdown<T> total_loss(const Tensor<T>& output, const Tensor<T>& real,
                            const CodeQuadruple<T>& codes, const LossConfig<T>& cfg) {
    cfg.validate();
    Tensor<T> zf_tilde = cfg.detach_targets ? codes.zf_tilde.detach() : codes.zf_tilde;
    Tensor<T> z_b = cfg.detach_targets ? codes.z_b.detach() : codes.z_b;
    Tensor<T> z_f = cfg.detach_targets ? codes.z_f.detach() : codes.z_f;

    LossBreakdown<T> out;
    out.rec = reconstruction_loss(output, real);
    out.fhatb = triplet_loss(codes.zf_hat, z_b, zf_tilde, cfg.margin);
    out.ffhat = triplet_loss(z_f, codes.zf_hat, zf_tilde, cfg.margin);
    out.total = add(out.rec, mul_scalar(add(out.ffhat, out.fhatb), cfg.lambda));
    return out;
}

}  // namespace harmonize
