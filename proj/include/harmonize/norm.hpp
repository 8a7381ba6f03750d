#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "harmonize/errors.hpp"
#include "harmonize/tensor.hpp"

namespace harmonize {

template <typename T>
struct ChannelStats {
    std::vector<T> mean;
    std::vector<T> var;  // biased (divides by the full reduction count)
};

/// Per-channel mean/variance over the (N,H,W) axes of an (N,C,H,W) batch.
template <typename T>
ChannelStats<T> channel_stats(const Tensor<T>& x) {
    if (x.rank() != 4)
        throw ShapeError("channel_stats: expected rank-4 input, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const std::size_t count = n * hw;
    ChannelStats<T> st{std::vector<T>(c, T(0)), std::vector<T>(c, T(0))};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* src = x.data() + (i * c + ch) * hw;
            T acc = T(0);
            for (std::size_t p = 0; p < hw; ++p) acc += src[p];
            st.mean[ch] += acc;
        }
    const T inv = T(1) / static_cast<T>(count);
    for (std::size_t ch = 0; ch < c; ++ch) st.mean[ch] *= inv;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* src = x.data() + (i * c + ch) * hw;
            const T mu = st.mean[ch];
            T acc = T(0);
            for (std::size_t p = 0; p < hw; ++p) {
                const T d = src[p] - mu;
                acc += d * d;
            }
            st.var[ch] += acc;
        }
    for (std::size_t ch = 0; ch < c; ++ch) st.var[ch] *= inv;
    return st;
}

// Channel-wise affine normalization y = gamma * (x - mean)/sqrt(var + eps) + beta.
// With stats_from_batch the supplied moments are treated as functions of x
// (the usual training-mode backward); otherwise they are constants.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     const std::vector<T>& mean, const std::vector<T>& var, T eps,
                     bool stats_from_batch) {
    if (x.rank() != 4)
        throw ShapeError("batch_norm: expected rank-4 input, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (gamma.numel() != c || beta.numel() != c || mean.size() != c || var.size() != c)
        throw ShapeError("batch_norm: scale/shift/moments must have one entry per channel (" +
                         std::to_string(c) + ")");

    std::vector<T> inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = T(1) / std::sqrt(var[ch] + eps);

    std::vector<T> xhat(n * c * hw), out(n * c * hw);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* src = x.data() + (i * c + ch) * hw;
            T* xh = xhat.data() + (i * c + ch) * hw;
            T* y = out.data() + (i * c + ch) * hw;
            const T mu = mean[ch], is = inv_std[ch], g = gamma[ch], bt = beta[ch];
            for (std::size_t p = 0; p < hw; ++p) {
                xh[p] = (src[p] - mu) * is;
                y[p] = g * xh[p] + bt;
            }
        }

    auto xn = x.node(), gn = gamma.node(), btn = beta.node();
    return detail::make_op<T>(
        "batch_norm", x.shape(), std::move(out), {xn, gn, btn},
        [xn, gn, btn, n, c, hw, inv_std, xhat = std::move(xhat),
         stats_from_batch](TensorNode<T>& o) {
            const std::size_t count = n * hw;
            std::vector<T> sum_g(c, T(0)), sum_gx(c, T(0));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const T* g = o.grad.data() + (i * c + ch) * hw;
                    const T* xh = xhat.data() + (i * c + ch) * hw;
                    T a = T(0), b = T(0);
                    for (std::size_t p = 0; p < hw; ++p) {
                        a += g[p];
                        b += g[p] * xh[p];
                    }
                    sum_g[ch] += a;
                    sum_gx[ch] += b;
                }
            if (gn->requires_grad) detail::accumulate(*gn, sum_gx);
            if (btn->requires_grad) detail::accumulate(*btn, sum_g);
            if (!xn->requires_grad) return;

            std::vector<T> gx(n * c * hw);
            const T inv_count = T(1) / static_cast<T>(count);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const T* g = o.grad.data() + (i * c + ch) * hw;
                    const T* xh = xhat.data() + (i * c + ch) * hw;
                    T* dst = gx.data() + (i * c + ch) * hw;
                    const T scale = gn->values[ch] * inv_std[ch];
                    if (stats_from_batch) {
                        const T mg = sum_g[ch] * inv_count, mgx = sum_gx[ch] * inv_count;
                        for (std::size_t p = 0; p < hw; ++p)
                            dst[p] = scale * (g[p] - mg - xh[p] * mgx);
                    } else {
                        for (std::size_t p = 0; p < hw; ++p) dst[p] = scale * g[p];
                    }
                }
            detail::accumulate(*xn, gx);
        });
}

}  // namespace harmonize
