// Shared utilities for the test suites: random tensor builders, independent
// reference implementations used as oracles, and filesystem scratch helpers.
#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "harmonize/rng.hpp"
#include "harmonize/tensor.hpp"

namespace test_util {

template <typename T>
harmonize::Tensor<T> random_tensor(harmonize::Rng& rng, const harmonize::Shape& shape,
                                   T lo = T(-1), T hi = T(1), bool requires_grad = false) {
    std::vector<T> values(harmonize::shape_numel(shape));
    for (auto& v : values) v = static_cast<T>(rng.uniform(double(lo), double(hi)));
    harmonize::Tensor<T> t(shape, values);
    t.set_requires_grad(requires_grad);
    return t;
}

template <typename T>
harmonize::Tensor<T> random_mask(harmonize::Rng& rng, const harmonize::Shape& shape,
                                 double ones_fraction = 0.5) {
    std::vector<T> values(harmonize::shape_numel(shape));
    bool any = false;
    for (auto& v : values) {
        v = rng.uniform(0.0, 1.0) < ones_fraction ? T(1) : T(0);
        any = any || v > T(0);
    }
    if (!any) values[0] = T(1);  // keep at least one valid pixel
    return harmonize::Tensor<T>(shape, values);
}

// Plain quadruple-loop convolution, independent of the im2col path under test.
template <typename T>
std::vector<T> naive_conv2d(const std::vector<T>& x, std::size_t n, std::size_t cin,
                            std::size_t h, std::size_t w, const std::vector<T>& weight,
                            std::size_t cout, std::size_t k, const std::vector<T>& bias,
                            std::size_t stride, std::size_t pad, std::size_t& oh,
                            std::size_t& ow) {
    oh = (h + 2 * pad - k) / stride + 1;
    ow = (w + 2 * pad - k) / stride + 1;
    std::vector<T> y(n * cout * oh * ow, T(0));
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = bias.empty() ? 0.0 : double(bias[co]);
                    for (std::size_t ci = 0; ci < cin; ++ci)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const std::ptrdiff_t iy =
                                    std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(pad);
                                const std::ptrdiff_t ix =
                                    std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(pad);
                                if (iy < 0 || ix < 0 || iy >= std::ptrdiff_t(h) ||
                                    ix >= std::ptrdiff_t(w))
                                    continue;
                                acc += double(weight[((co * cin + ci) * k + ky) * k + kx]) *
                                       double(x[((b * cin + ci) * h + std::size_t(iy)) * w +
                                                std::size_t(ix)]);
                            }
                    y[((b * cout + co) * oh + oy) * ow + ox] = T(acc);
                }
    return y;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("harmonize_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

template <typename T>
double max_abs_diff(const std::vector<T>& a, const std::vector<T>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

}  // namespace test_util
