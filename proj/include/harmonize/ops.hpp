#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "harmonize/tensor.hpp"

namespace harmonize {

namespace detail {

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

template <typename T, typename Fwd, typename Dfdx>
Tensor<T> unary_op(const char* op, const Tensor<T>& x, Fwd fwd, Dfdx dfdx) {
    std::vector<T> out(x.numel());
    const T* xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
    auto xn = x.node();
    return make_op<T>(
        op, x.shape(), std::move(out), {xn},
        [xn, dfdx](TensorNode<T>& o) {
            std::vector<T> gx(o.values.size());
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] = o.grad[i] * dfdx(xn->values[i], o.values[i]);
            accumulate(*xn, gx);
        });
}

template <typename T>
using EigenMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstEigenMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (same-shape operands; scalar variants below)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("add", a, b);
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>("add", a.shape(), std::move(out), {an, bn},
                              [an, bn](TensorNode<T>& o) {
                                  if (an->requires_grad) detail::accumulate(*an, o.grad);
                                  if (bn->requires_grad) detail::accumulate(*bn, o.grad);
                              });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("sub", a, b);
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>("sub", a.shape(), std::move(out), {an, bn},
                              [an, bn](TensorNode<T>& o) {
                                  if (an->requires_grad) detail::accumulate(*an, o.grad);
                                  if (bn->requires_grad) {
                                      std::vector<T> gb(o.grad.size());
                                      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = -o.grad[i];
                                      detail::accumulate(*bn, gb);
                                  }
                              });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape("mul", a, b);
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>("mul", a.shape(), std::move(out), {an, bn},
                              [an, bn](TensorNode<T>& o) {
                                  if (an->requires_grad) {
                                      std::vector<T> ga(o.grad.size());
                                      for (std::size_t i = 0; i < ga.size(); ++i)
                                          ga[i] = o.grad[i] * bn->values[i];
                                      detail::accumulate(*an, ga);
                                  }
                                  if (bn->requires_grad) {
                                      std::vector<T> gb(o.grad.size());
                                      for (std::size_t i = 0; i < gb.size(); ++i)
                                          gb[i] = o.grad[i] * an->values[i];
                                      detail::accumulate(*bn, gb);
                                  }
                              });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
    return detail::unary_op("add_scalar", x, [s](T v) { return v + s; },
                            [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T s) {
    return detail::unary_op("mul_scalar", x, [s](T v) { return v * s; },
                            [s](T, T) { return s; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
    return mul_scalar(x, T(-1));
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

// relu/abs/sqrt take the zero subgradient at their kinks.

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return detail::unary_op("relu", x, [](T v) { return v > T(0) ? v : T(0); },
                            [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> elu(const Tensor<T>& x, T alpha = T(1)) {
    return detail::unary_op(
        "elu", x,
        [alpha](T v) { return v > T(0) ? v : alpha * (std::exp(v) - T(1)); },
        [alpha](T v, T y) { return v > T(0) ? T(1) : y + alpha; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary_op(
        "sigmoid", x,
        [](T v) {
            // split by sign so exp never overflows
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
    return detail::unary_op("tanh", x, [](T v) { return std::tanh(v); },
                            [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> abs_op(const Tensor<T>& x) {
    return detail::unary_op("abs", x, [](T v) { return v < T(0) ? -v : v; },
                            [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> sqrt_op(const Tensor<T>& x) {
    for (std::size_t i = 0; i < x.numel(); ++i)
        if (x[i] < T(0))
            throw std::domain_error("sqrt: negative input at index " + std::to_string(i));
    return detail::unary_op("sqrt", x, [](T v) { return std::sqrt(v); },
                            [](T v, T y) { return v > T(0) ? T(1) / (T(2) * y) : T(0); });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = T(0);
    for (std::size_t i = 0; i < x.numel(); ++i) total += x[i];
    auto xn = x.node();
    return detail::make_op<T>("sum", Shape{1}, std::vector<T>{total}, {xn},
                              [xn](TensorNode<T>& o) {
                                  std::vector<T> gx(xn->values.size(), o.grad[0]);
                                  detail::accumulate(*xn, gx);
                              });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.numel() == 0) throw ShapeError("mean: empty tensor");
    T total = T(0);
    for (std::size_t i = 0; i < x.numel(); ++i) total += x[i];
    const T inv_n = T(1) / static_cast<T>(x.numel());
    auto xn = x.node();
    return detail::make_op<T>("mean", Shape{1}, std::vector<T>{total * inv_n}, {xn},
                              [xn, inv_n](TensorNode<T>& o) {
                                  std::vector<T> gx(xn->values.size(), o.grad[0] * inv_n);
                                  detail::accumulate(*xn, gx);
                              });
}

/// Sums a (N, L) tensor over its last axis into (N).
template <typename T>
Tensor<T> row_sum(const Tensor<T>& x) {
    if (x.rank() != 2) throw ShapeError("row_sum: expected rank-2 input, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), l = x.dim(1);
    std::vector<T> out(n, T(0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < l; ++j) out[i] += x[i * l + j];
    auto xn = x.node();
    return detail::make_op<T>("row_sum", Shape{n}, std::move(out), {xn},
                              [xn, n, l](TensorNode<T>& o) {
                                  std::vector<T> gx(n * l);
                                  for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < l; ++j) gx[i * l + j] = o.grad[i];
                                  detail::accumulate(*xn, gx);
                              });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
    auto xn = x.node();
    return detail::make_op<T>("reshape", std::move(new_shape), std::vector<T>(x.values()), {xn},
                              [xn](TensorNode<T>& o) { detail::accumulate(*xn, o.grad); });
}

/// Concatenates rank-4 (N,C,H,W) tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat: empty input list");
    if (xs[0].rank() != 4)
        throw ShapeError("concat: expected rank-4 inputs, got " + shape_str(xs[0].shape()));
    const std::size_t n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
    std::size_t c_total = 0;
    for (const auto& x : xs) {
        if (x.rank() != 4 || x.dim(0) != n || x.dim(2) != h || x.dim(3) != w)
            throw ShapeError("concat: incompatible input " + shape_str(x.shape()) +
                             " with leading " + shape_str(xs[0].shape()));
        c_total += x.dim(1);
    }
    const std::size_t hw = h * w;
    std::vector<T> out(n * c_total * hw);
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::vector<std::size_t> channels;
    parents.reserve(xs.size());
    for (const auto& x : xs) {
        parents.push_back(x.node());
        channels.push_back(x.dim(1));
    }
    for (std::size_t b = 0; b < n; ++b) {
        std::size_t c_off = 0;
        for (const auto& x : xs) {
            const std::size_t c = x.dim(1);
            const T* src = x.data() + b * c * hw;
            T* dst = out.data() + (b * c_total + c_off) * hw;
            std::copy(src, src + c * hw, dst);
            c_off += c;
        }
    }
    return detail::make_op<T>(
        "concat", Shape{n, c_total, h, w}, std::move(out), parents,
        [parents, channels, n, hw, c_total](TensorNode<T>& o) {
            std::size_t c_off = 0;
            for (std::size_t k = 0; k < parents.size(); ++k) {
                const std::size_t c = channels[k];
                if (parents[k]->requires_grad) {
                    std::vector<T> g(n * c * hw);
                    for (std::size_t b = 0; b < n; ++b) {
                        const T* src = o.grad.data() + (b * c_total + c_off) * hw;
                        std::copy(src, src + c * hw, g.data() + b * c * hw);
                    }
                    detail::accumulate(*parents[k], g);
                }
                c_off += c;
            }
        });
}

/// Channel range [c0, c1) of a rank-4 tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t c0, std::size_t c1) {
    if (x.rank() != 4) throw ShapeError("slice: expected rank-4 input, got " + shape_str(x.shape()));
    if (c0 >= c1 || c1 > x.dim(1))
        throw ShapeError("slice: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of bounds for " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c_in = x.dim(1), hw = x.dim(2) * x.dim(3);
    const std::size_t c = c1 - c0;
    std::vector<T> out(n * c * hw);
    for (std::size_t b = 0; b < n; ++b) {
        const T* src = x.data() + (b * c_in + c0) * hw;
        std::copy(src, src + c * hw, out.data() + b * c * hw);
    }
    auto xn = x.node();
    return detail::make_op<T>("slice", Shape{n, c, x.dim(2), x.dim(3)}, std::move(out), {xn},
                              [xn, n, c_in, c0, c, hw](TensorNode<T>& o) {
                                  std::vector<T> gx(xn->values.size(), T(0));
                                  for (std::size_t b = 0; b < n; ++b)
                                      std::copy(o.grad.data() + b * c * hw,
                                                o.grad.data() + (b + 1) * c * hw,
                                                gx.data() + (b * c_in + c0) * hw);
                                  detail::accumulate(*xn, gx);
                              });
}

/// Nearest-neighbor 2x spatial upsampling of a rank-4 tensor.
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("upsample: expected rank-4 input, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t h2 = h * 2, w2 = w * 2;
    std::vector<T> out(n * c * h2 * w2);
    for (std::size_t bc = 0; bc < n * c; ++bc) {
        const T* src = x.data() + bc * h * w;
        T* dst = out.data() + bc * h2 * w2;
        for (std::size_t i = 0; i < h2; ++i)
            for (std::size_t j = 0; j < w2; ++j) dst[i * w2 + j] = src[(i / 2) * w + j / 2];
    }
    auto xn = x.node();
    return detail::make_op<T>("upsample", Shape{n, c, h2, w2}, std::move(out), {xn},
                              [xn, n, c, h, w, h2, w2](TensorNode<T>& o) {
                                  std::vector<T> gx(n * c * h * w, T(0));
                                  for (std::size_t bc = 0; bc < n * c; ++bc) {
                                      const T* g = o.grad.data() + bc * h2 * w2;
                                      T* dst = gx.data() + bc * h * w;
                                      for (std::size_t i = 0; i < h2; ++i)
                                          for (std::size_t j = 0; j < w2; ++j)
                                              dst[(i / 2) * w + j / 2] += g[i * w2 + j];
                                  }
                                  detail::accumulate(*xn, gx);
                              });
}

/// Broadcasts per-sample codes (N,L) to a spatial map (N,L,H,W).
template <typename T>
Tensor<T> replicate_spatial(const Tensor<T>& code, std::size_t h, std::size_t w) {
    if (code.rank() != 2)
        throw ShapeError("replicate: expected rank-2 codes, got " + shape_str(code.shape()));
    if (h == 0 || w == 0) throw ShapeError("replicate: target extent must be positive");
    const std::size_t n = code.dim(0), l = code.dim(1), hw = h * w;
    std::vector<T> out(n * l * hw);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t k = 0; k < l; ++k)
            std::fill_n(out.data() + (b * l + k) * hw, hw, code[b * l + k]);
    auto cn = code.node();
    return detail::make_op<T>("replicate", Shape{n, l, h, w}, std::move(out), {cn},
                              [cn, n, l, hw](TensorNode<T>& o) {
                                  std::vector<T> g(n * l, T(0));
                                  for (std::size_t bk = 0; bk < n * l; ++bk) {
                                      const T* src = o.grad.data() + bk * hw;
                                      T acc = T(0);
                                      for (std::size_t i = 0; i < hw; ++i) acc += src[i];
                                      g[bk] = acc;
                                  }
                                  detail::accumulate(*cn, g);
                              });
}

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(m * n);
    {
        detail::ConstEigenMap<T> am(a.data(), m, k), bm(b.data(), k, n);
        detail::EigenMap<T> om(out.data(), m, n);
        om.noalias() = am * bm;
    }
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(
        "matmul", Shape{m, n}, std::move(out), {an, bn},
        [an, bn, m, k, n](TensorNode<T>& o) {
            detail::ConstEigenMap<T> gm(o.grad.data(), m, n);
            if (an->requires_grad) {
                std::vector<T> ga(m * k);
                detail::ConstEigenMap<T> bm(bn->values.data(), k, n);
                detail::EigenMap<T>(ga.data(), m, k).noalias() = gm * bm.transpose();
                detail::accumulate(*an, ga);
            }
            if (bn->requires_grad) {
                std::vector<T> gb(k * n);
                detail::ConstEigenMap<T> am(an->values.data(), m, k);
                detail::EigenMap<T>(gb.data(), k, n).noalias() = am.transpose() * gm;
                detail::accumulate(*bn, gb);
            }
        });
}

}  // namespace harmonize
