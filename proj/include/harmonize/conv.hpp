#pragma once

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "harmonize/errors.hpp"
#include "harmonize/ops.hpp"
#include "harmonize/parallel.hpp"
#include "harmonize/tensor.hpp"

namespace harmonize {

inline std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride,
                                 std::size_t pad) {
    if (in + 2 * pad < k) throw ShapeError("conv: kernel " + std::to_string(k) +
                                           " exceeds padded extent " + std::to_string(in + 2 * pad));
    return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

// Scatters one sample (C,H,W) into patch-matrix layout (C*k*k, Ho*Wo),
// zero-padding out-of-image taps.
template <typename T>
void im2col(const T* x, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, T* cols) {
    for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
                T* row = cols + ((c * k + ki) * k + kj) * (ho * wo);
                for (std::size_t oh = 0; oh < ho; ++oh) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill_n(row + oh * wo, wo, T(0));
                        continue;
                    }
                    const T* src = x + (c * h + static_cast<std::size_t>(ih)) * w;
                    for (std::size_t ow = 0; ow < wo; ++ow) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        row[oh * wo + ow] =
                            (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w))
                                ? T(0)
                                : src[static_cast<std::size_t>(iw)];
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: accumulates patch-matrix gradients back onto (C,H,W).
template <typename T>
void col2im(const T* cols, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, T* dx) {
    for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
                const T* row = cols + ((c * k + ki) * k + kj) * (ho * wo);
                for (std::size_t oh = 0; oh < ho; ++oh) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                    T* dst = dx + (c * h + static_cast<std::size_t>(ih)) * w;
                    for (std::size_t ow = 0; ow < wo; ++ow) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                        dst[static_cast<std::size_t>(iw)] += row[oh * wo + ow];
                    }
                }
            }
        }
    }
}

/// Sliding k x k sum of a single-channel map; the mask pixel count per window.
template <typename T>
void window_sums(const T* m, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
                 std::size_t pad, std::size_t ho, std::size_t wo, T* sums) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
        for (std::size_t ow = 0; ow < wo; ++ow) {
            T acc = T(0);
            for (std::size_t ki = 0; ki < k; ++ki) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kj = 0; kj < k; ++kj) {
                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
                    acc += m[static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw)];
                }
            }
            sums[oh * wo + ow] = acc;
        }
    }
}

template <typename T>
void check_conv_args(const char* op, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 4)
        throw ShapeError(std::string(op) + ": expected (N,C,H,W) input, got " + shape_str(x.shape()));
    if (w.rank() != 4 || w.dim(2) != w.dim(3))
        throw ShapeError(std::string(op) + ": expected square (Cout,Cin,k,k) weight, got " +
                         shape_str(w.shape()));
    if (x.dim(1) != w.dim(1))
        throw ShapeError(std::string(op) + ": input channels " + std::to_string(x.dim(1)) +
                         " do not match weight channels " + std::to_string(w.dim(1)));
    if (b.rank() != 1 || b.dim(0) != w.dim(0))
        throw ShapeError(std::string(op) + ": bias " + shape_str(b.shape()) +
                         " does not match " + std::to_string(w.dim(0)) + " output channels");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Standard convolution
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                 std::size_t pad) {
    detail::check_conv_args("conv2d", x, w, b);
    const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w_in = x.dim(3);
    const std::size_t c_out = w.dim(0), k = w.dim(2);
    const std::size_t ho = conv_out_size(h, k, stride, pad);
    const std::size_t wo = conv_out_size(w_in, k, stride, pad);
    const std::size_t ckk = c_in * k * k, owo = ho * wo;

    std::vector<T> out(n * c_out * owo);
    parallel_for(n, [&](std::size_t i) {
        std::vector<T> cols(ckk * owo);
        detail::im2col(x.data() + i * c_in * h * w_in, c_in, h, w_in, k, stride, pad, ho, wo,
                       cols.data());
        detail::ConstEigenMap<T> wm(w.data(), c_out, ckk), cm(cols.data(), ckk, owo);
        detail::EigenMap<T> om(out.data() + i * c_out * owo, c_out, owo);
        om.noalias() = wm * cm;
        for (std::size_t c = 0; c < c_out; ++c) om.row(c).array() += b[c];
    });

    auto xn = x.node(), wn = w.node(), bn = b.node();
    return detail::make_op<T>(
        "conv2d", Shape{n, c_out, ho, wo}, std::move(out), {xn, wn, bn},
        [=](TensorNode<T>& o) {
            std::vector<std::vector<T>> dw_parts(wn->requires_grad ? n : 0);
            std::vector<T> gx(xn->requires_grad ? xn->values.size() : 0, T(0));
            parallel_for(n, [&](std::size_t i) {
                std::vector<T> cols(ckk * owo);
                detail::im2col(xn->values.data() + i * c_in * h * w_in, c_in, h, w_in, k, stride,
                               pad, ho, wo, cols.data());
                detail::ConstEigenMap<T> gm(o.grad.data() + i * c_out * owo, c_out, owo);
                if (wn->requires_grad) {
                    dw_parts[i].resize(c_out * ckk);
                    detail::ConstEigenMap<T> cm(cols.data(), ckk, owo);
                    detail::EigenMap<T>(dw_parts[i].data(), c_out, ckk).noalias() =
                        gm * cm.transpose();
                }
                if (xn->requires_grad) {
                    std::vector<T> dcols(ckk * owo);
                    detail::ConstEigenMap<T> wm(wn->values.data(), c_out, ckk);
                    detail::EigenMap<T>(dcols.data(), ckk, owo).noalias() = wm.transpose() * gm;
                    detail::col2im(dcols.data(), c_in, h, w_in, k, stride, pad, ho, wo,
                                   gx.data() + i * c_in * h * w_in);
                }
            });
            if (wn->requires_grad) {
                wn->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < wn->grad.size(); ++j) wn->grad[j] += dw_parts[i][j];
            }
            if (bn->requires_grad) {
                std::vector<T> gb(c_out, T(0));
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t c = 0; c < c_out; ++c) {
                        const T* g = o.grad.data() + (i * c_out + c) * owo;
                        T acc = T(0);
                        for (std::size_t p = 0; p < owo; ++p) acc += g[p];
                        gb[c] += acc;
                    }
                detail::accumulate(*bn, gb);
            }
            if (xn->requires_grad) detail::accumulate(*xn, gx);
        });
}

// ---------------------------------------------------------------------------
// Partial convolution
// ---------------------------------------------------------------------------

template <typename T>
struct PartialConvResult {
    Tensor<T> features;
    Tensor<T> mask;  // propagated validity mask (N,1,Ho,Wo), not tracked
};

// Masked convolution with window renormalization. Each output location
// rescales by k^2 / (mask pixels in window); windows with no mask coverage
// produce exactly 0 with the bias suppressed, and their mask bit clears.
// Input values at mask=0 are multiplied by zero before the kernel, so they
// can never reach any output.
template <typename T>
PartialConvResult<T> partial_conv2d(const Tensor<T>& x, const Tensor<T>& mask, const Tensor<T>& w,
                                    const Tensor<T>& b, std::size_t stride, std::size_t pad,
                                    T denominator_eps = T(1e-8)) {
    detail::check_conv_args("partial_conv2d", x, w, b);
    if (mask.rank() != 4 || mask.dim(0) != x.dim(0) || mask.dim(1) != 1 ||
        mask.dim(2) != x.dim(2) || mask.dim(3) != x.dim(3))
        throw ShapeError("partial_conv2d: mask " + shape_str(mask.shape()) +
                         " does not match input " + shape_str(x.shape()));

    const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w_in = x.dim(3);
    const std::size_t c_out = w.dim(0), k = w.dim(2);
    const std::size_t ho = conv_out_size(h, k, stride, pad);
    const std::size_t wo = conv_out_size(w_in, k, stride, pad);
    const std::size_t ckk = c_in * k * k, owo = ho * wo, hw = h * w_in;
    const T window = static_cast<T>(k * k);

    auto scale_at = [window, denominator_eps](T s) {
        return s > T(0) ? window / (s + denominator_eps) : T(0);
    };

    std::vector<T> out(n * c_out * owo);
    std::vector<T> mask_out(n * owo);
    parallel_for(n, [&](std::size_t i) {
        std::vector<T> masked(c_in * hw), cols(ckk * owo), sums(owo);
        const T* xs = x.data() + i * c_in * hw;
        const T* ms = mask.data() + i * hw;
        for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t p = 0; p < hw; ++p) masked[c * hw + p] = xs[c * hw + p] * ms[p];
        detail::im2col(masked.data(), c_in, h, w_in, k, stride, pad, ho, wo, cols.data());
        detail::window_sums(ms, h, w_in, k, stride, pad, ho, wo, sums.data());

        detail::ConstEigenMap<T> wm(w.data(), c_out, ckk), cm(cols.data(), ckk, owo);
        detail::EigenMap<T> om(out.data() + i * c_out * owo, c_out, owo);
        om.noalias() = wm * cm;
        T* mo = mask_out.data() + i * owo;
        for (std::size_t p = 0; p < owo; ++p) {
            const T s = sums[p];
            mo[p] = s > T(0) ? T(1) : T(0);
            const T r = scale_at(s);
            if (s > T(0))
                for (std::size_t c = 0; c < c_out; ++c)
                    om(c, p) = om(c, p) * r + b[c];
            else
                for (std::size_t c = 0; c < c_out; ++c) om(c, p) = T(0);
        }
    });

    auto xn = x.node(), wn = w.node(), bn = b.node(), mn = mask.node();
    Tensor<T> features = detail::make_op<T>(
        "partial_conv2d", Shape{n, c_out, ho, wo}, std::move(out), {xn, wn, bn},
        [=](TensorNode<T>& o) {
            std::vector<std::vector<T>> dw_parts(wn->requires_grad ? n : 0);
            std::vector<T> gx(xn->requires_grad ? xn->values.size() : 0, T(0));
            std::vector<T> gb_parts(bn->requires_grad ? n * c_out : 0, T(0));
            parallel_for(n, [&](std::size_t i) {
                std::vector<T> masked(c_in * hw), cols(ckk * owo), sums(owo);
                const T* xs = xn->values.data() + i * c_in * hw;
                const T* ms = mn->values.data() + i * hw;
                for (std::size_t c = 0; c < c_in; ++c)
                    for (std::size_t p = 0; p < hw; ++p) masked[c * hw + p] = xs[c * hw + p] * ms[p];
                detail::im2col(masked.data(), c_in, h, w_in, k, stride, pad, ho, wo, cols.data());
                detail::window_sums(ms, h, w_in, k, stride, pad, ho, wo, sums.data());

                // fold the renormalization into the upstream gradient
                std::vector<T> gscaled(c_out * owo);
                const T* g = o.grad.data() + i * c_out * owo;
                for (std::size_t p = 0; p < owo; ++p) {
                    const T r = scale_at(sums[p]);
                    for (std::size_t c = 0; c < c_out; ++c) gscaled[c * owo + p] = g[c * owo + p] * r;
                }
                detail::ConstEigenMap<T> gm(gscaled.data(), c_out, owo);
                if (wn->requires_grad) {
                    dw_parts[i].resize(c_out * ckk);
                    detail::ConstEigenMap<T> cm(cols.data(), ckk, owo);
                    detail::EigenMap<T>(dw_parts[i].data(), c_out, ckk).noalias() =
                        gm * cm.transpose();
                }
                if (xn->requires_grad) {
                    std::vector<T> dcols(ckk * owo), dmasked(c_in * hw, T(0));
                    detail::ConstEigenMap<T> wm(wn->values.data(), c_out, ckk);
                    detail::EigenMap<T>(dcols.data(), ckk, owo).noalias() = wm.transpose() * gm;
                    detail::col2im(dcols.data(), c_in, h, w_in, k, stride, pad, ho, wo,
                                   dmasked.data());
                    T* dst = gx.data() + i * c_in * hw;
                    for (std::size_t c = 0; c < c_in; ++c)
                        for (std::size_t p = 0; p < hw; ++p) dst[c * hw + p] = dmasked[c * hw + p] * ms[p];
                }
                if (bn->requires_grad) {
                    T* gbp = gb_parts.data() + i * c_out;
                    for (std::size_t p = 0; p < owo; ++p)
                        if (sums[p] > T(0))
                            for (std::size_t c = 0; c < c_out; ++c) gbp[c] += g[c * owo + p];
                }
            });
            if (wn->requires_grad) {
                wn->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < wn->grad.size(); ++j) wn->grad[j] += dw_parts[i][j];
            }
            if (bn->requires_grad) {
                std::vector<T> gb(c_out, T(0));
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t c = 0; c < c_out; ++c) gb[c] += gb_parts[i * c_out + c];
                detail::accumulate(*bn, gb);
            }
            if (xn->requires_grad) detail::accumulate(*xn, gx);
        });

    return {features, Tensor<T>(Shape{n, 1, ho, wo}, std::move(mask_out))};
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

/// Per-channel spatial mean: (N,C,H,W) -> (N,C,1,1).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("avg_pool: expected rank-4 input, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (hw == 0) throw ShapeError("avg_pool: empty spatial extent");
    std::vector<T> out(n * c);
    const T inv = T(1) / static_cast<T>(hw);
    for (std::size_t bc = 0; bc < n * c; ++bc) {
        const T* src = x.data() + bc * hw;
        T acc = T(0);
        for (std::size_t p = 0; p < hw; ++p) acc += src[p];
        out[bc] = acc * inv;
    }
    auto xn = x.node();
    return detail::make_op<T>("avg_pool", Shape{n, c, 1, 1}, std::move(out), {xn},
                              [xn, n, c, hw, inv](TensorNode<T>& o) {
                                  std::vector<T> gx(n * c * hw);
                                  for (std::size_t bc = 0; bc < n * c; ++bc)
                                      std::fill_n(gx.data() + bc * hw, hw, o.grad[bc] * inv);
                                  detail::accumulate(*xn, gx);
                              });
}

/// Per-channel mean over mask=1 locations only: (N,C,H,W) -> (N,C,1,1).
template <typename T>
Tensor<T> masked_avg_pool(const Tensor<T>& x, const Tensor<T>& mask) {
    if (x.rank() != 4) throw ShapeError("masked_avg_pool: expected rank-4 input, got " +
                                        shape_str(x.shape()));
    if (mask.rank() != 4 || mask.dim(0) != x.dim(0) || mask.dim(1) != 1 ||
        mask.dim(2) != x.dim(2) || mask.dim(3) != x.dim(3))
        throw ShapeError("masked_avg_pool: mask " + shape_str(mask.shape()) +
                         " does not match input " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<T> inv_counts(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T* m = mask.data() + i * hw;
        T count = T(0);
        for (std::size_t p = 0; p < hw; ++p) count += m[p];
        if (count <= T(0))
            throw EmptyRegionError("masked_avg_pool: mask of sample " + std::to_string(i) +
                                   " selects no locations");
        inv_counts[i] = T(1) / count;
    }
    std::vector<T> out(n * c);
    for (std::size_t i = 0; i < n; ++i) {
        const T* m = mask.data() + i * hw;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* src = x.data() + (i * c + ch) * hw;
            T acc = T(0);
            for (std::size_t p = 0; p < hw; ++p) acc += src[p] * m[p];
            out[i * c + ch] = acc * inv_counts[i];
        }
    }
    auto xn = x.node(), mn = mask.node();
    return detail::make_op<T>("masked_avg_pool", Shape{n, c, 1, 1}, std::move(out), {xn},
                              [xn, mn, n, c, hw, inv_counts](TensorNode<T>& o) {
                                  std::vector<T> gx(n * c * hw);
                                  for (std::size_t i = 0; i < n; ++i) {
                                      const T* m = mn->values.data() + i * hw;
                                      for (std::size_t ch = 0; ch < c; ++ch) {
                                          const T g = o.grad[i * c + ch] * inv_counts[i];
                                          T* dst = gx.data() + (i * c + ch) * hw;
                                          for (std::size_t p = 0; p < hw; ++p) dst[p] = g * m[p];
                                      }
                                  }
                                  detail::accumulate(*xn, gx);
                              });
}

}  // namespace harmonize
