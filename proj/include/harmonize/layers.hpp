#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "harmonize/conv.hpp"
#include "harmonize/norm.hpp"
#include "harmonize/ops.hpp"
#include "harmonize/rng.hpp"
#include "harmonize/tensor.hpp"

namespace harmonize {

template <typename T>
using ParamList = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, T stddev) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal()) * stddev;
}

template <typename T>
class Conv2dLayer {
  public:
    Conv2dLayer() = default;
    Conv2dLayer(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride,
                std::size_t pad)
        : weight(Shape{c_out, c_in, k, k}), bias(Shape{c_out}), stride_(stride), pad_(pad) {
        weight.set_requires_grad(true);
        bias.set_requires_grad(true);
    }

    void init(Rng& rng, T weight_std) {
        fill_normal(weight, rng, weight_std);
        for (std::size_t i = 0; i < bias.numel(); ++i) bias[i] = T(0);
    }

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride_, pad_); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.emplace_back(prefix + ".weight", weight);
        out.emplace_back(prefix + ".bias", bias);
    }

    std::size_t stride() const { return stride_; }
    std::size_t pad() const { return pad_; }

    Tensor<T> weight, bias;

  private:
    std::size_t stride_ = 1, pad_ = 0;
};

template <typename T>
class PartialConv2dLayer {
  public:
    PartialConv2dLayer() = default;
    PartialConv2dLayer(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride,
                       std::size_t pad)
        : weight(Shape{c_out, c_in, k, k}), bias(Shape{c_out}), stride_(stride), pad_(pad) {
        weight.set_requires_grad(true);
        bias.set_requires_grad(true);
    }

    void init(Rng& rng, T weight_std) {
        fill_normal(weight, rng, weight_std);
        for (std::size_t i = 0; i < bias.numel(); ++i) bias[i] = T(0);
    }

    PartialConvResult<T> forward(const Tensor<T>& x, const Tensor<T>& mask) const {
        return partial_conv2d(x, mask, weight, bias, stride_, pad_);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.emplace_back(prefix + ".weight", weight);
        out.emplace_back(prefix + ".bias", bias);
    }

    Tensor<T> weight, bias;

  private:
    std::size_t stride_ = 1, pad_ = 0;
};

// Batch normalization layer holding affine parameters and running moments.
// Training mode requires at least two samples; evaluation normalizes with the
// accumulated running statistics.
template <typename T>
class BatchNorm2d {
  public:
    BatchNorm2d() = default;
    explicit BatchNorm2d(std::size_t channels, T eps = T(1e-5), T momentum = T(0.1))
        : gamma(Shape{channels}, T(1)),
          beta(Shape{channels}, T(0)),
          running_mean(Shape{channels}, T(0)),
          running_var(Shape{channels}, T(1)),
          eps_(eps),
          momentum_(momentum) {
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
    }

    void init() {
        for (std::size_t i = 0; i < gamma.numel(); ++i) gamma[i] = T(1);
        for (std::size_t i = 0; i < beta.numel(); ++i) beta[i] = T(0);
        for (std::size_t i = 0; i < running_mean.numel(); ++i) running_mean[i] = T(0);
        for (std::size_t i = 0; i < running_var.numel(); ++i) running_var[i] = T(1);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        if (!training)
            return batch_norm(x, gamma, beta, running_mean.values(), running_var.values(), eps_,
                              false);
        if (x.dim(0) < 2)
            throw std::invalid_argument(
                "BatchNorm2d: training requires a batch of at least 2 samples, got " +
                std::to_string(x.dim(0)));
        ChannelStats<T> st = channel_stats(x);
        const std::size_t count = x.dim(0) * x.dim(2) * x.dim(3);
        const T unbias = static_cast<T>(count) / static_cast<T>(count - 1);
        for (std::size_t c = 0; c < gamma.numel(); ++c) {
            running_mean[c] = (T(1) - momentum_) * running_mean[c] + momentum_ * st.mean[c];
            running_var[c] = (T(1) - momentum_) * running_var[c] + momentum_ * st.var[c] * unbias;
        }
        return batch_norm(x, gamma, beta, st.mean, st.var, eps_, true);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.emplace_back(prefix + ".gamma", gamma);
        out.emplace_back(prefix + ".beta", beta);
    }

    void collect_buffers(const std::string& prefix, ParamList<T>& out) {
        out.emplace_back(prefix + ".running_mean", running_mean);
        out.emplace_back(prefix + ".running_var", running_var);
    }

    Tensor<T> gamma, beta;
    Tensor<T> running_mean, running_var;  // plain buffers, never differentiated

  private:
    T eps_ = T(1e-5);
    T momentum_ = T(0.1);
};

}  // namespace harmonize
