#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "harmonize/errors.hpp"
#include "harmonize/layers.hpp"
#include "harmonize/ops.hpp"
#include "harmonize/tensor.hpp"

namespace harmonize {

struct ExtractorConfig {
    std::size_t code_dim = 16;
    std::vector<std::size_t> widths = {32, 64, 128, 256, 256};
};

// Domain code extractor: a stack of stride-2 partial convolutions whose
// receptive field never crosses the region boundary, pooled over the surviving
// mask, projected to an L-dimensional code. The code therefore depends only on
// pixels inside the region.
template <typename T>
class ExtractorNet {
  public:
    ExtractorNet() : ExtractorNet(ExtractorConfig{}) {}

    explicit ExtractorNet(ExtractorConfig config) : config_(std::move(config)) {
        std::size_t c_in = 3;
        for (std::size_t i = 0; i < config_.widths.size(); ++i) {
            convs_.emplace_back(c_in, config_.widths[i], 3, 2, 1);
            if (i + 1 < config_.widths.size()) norms_.emplace_back(config_.widths[i]);
            c_in = config_.widths[i];
        }
        head_ = Conv2dLayer<T>(c_in, config_.code_dim, 1, 1, 0);
    }

    void init(Rng& rng, T weight_std = T(0.02)) {
        for (auto& c : convs_) c.init(rng, weight_std);
        for (auto& n : norms_) n.init();
        head_.init(rng, weight_std);
    }

    /// (N,3,H,W) image + (N,1,H,W) region mask -> (N,L) codes.
    Tensor<T> forward(const Tensor<T>& image, const Tensor<T>& mask, bool training) {
        if (image.rank() != 4 || image.dim(1) != 3)
            throw ShapeError("extractor: expected (N,3,H,W) image, got " + shape_str(image.shape()));
        const std::size_t min_side = std::size_t(1) << convs_.size();
        if (image.dim(2) < min_side || image.dim(3) < min_side)
            throw ShapeError("extractor: input " + std::to_string(image.dim(2)) + "x" +
                             std::to_string(image.dim(3)) + " too small; need at least " +
                             std::to_string(min_side) + " per side");
        for (std::size_t i = 0; i < mask.numel(); ++i)
            if (mask[i] != T(0) && mask[i] != T(1))
                throw std::invalid_argument("extractor: region mask must be binary");

        Tensor<T> x = image, m = mask;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            PartialConvResult<T> r = convs_[i].forward(x, m);
            x = r.features;
            m = r.mask;
            if (i + 1 < convs_.size()) {
                x = relu(x);
                x = norms_[i].forward(x, training);
            }
        }
        Tensor<T> pooled = masked_avg_pool(x, m);
        Tensor<T> code = head_.forward(pooled);
        return reshape(code, Shape{image.dim(0), config_.code_dim});
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (std::size_t i = 0; i < convs_.size(); ++i)
            convs_[i].collect(prefix + ".conv" + std::to_string(i), out);
        for (std::size_t i = 0; i < norms_.size(); ++i)
            norms_[i].collect(prefix + ".bn" + std::to_string(i), out);
        head_.collect(prefix + ".head", out);
    }

    void collect_buffers(const std::string& prefix, ParamList<T>& out) {
        for (std::size_t i = 0; i < norms_.size(); ++i)
            norms_[i].collect_buffers(prefix + ".bn" + std::to_string(i), out);
    }

    const ExtractorConfig& config() const { return config_; }
    std::size_t code_dim() const { return config_.code_dim; }
    std::size_t depth() const { return convs_.size(); }

  private:
    ExtractorConfig config_;
    std::vector<PartialConv2dLayer<T>> convs_;
    std::vector<BatchNorm2d<T>> norms_;
    Conv2dLayer<T> head_;
};

/// Per-row Euclidean distance between two (N,L) code batches -> (N).
template <typename T>
Tensor<T> code_distance(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape() != b.shape())
        throw ShapeError("code_distance: mismatched code batches " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    Tensor<T> diff = sub(a, b);
    return sqrt_op(row_sum(mul(diff, diff)));
}

/// Euclidean distance between two single codes given as flat vectors.
template <typename T>
T code_distance_flat(const std::vector<T>& a, const std::vector<T>& b) {
    if (a.size() != b.size())
        throw ShapeError("code_distance: dimension mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    T acc = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const T d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace harmonize
