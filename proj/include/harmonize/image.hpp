#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include <png.h>

#include "harmonize/errors.hpp"
#include "harmonize/tensor.hpp"

namespace harmonize {

namespace detail {

inline std::vector<png_byte> png_read_buffer(const std::string& path, png_uint_32 format,
                                             std::size_t channels, std::size_t& width,
                                             std::size_t& height) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw DatasetError("cannot read PNG " + path + ": " + image.message);
    image.format = format;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(),
                               static_cast<png_int_32>(image.width * channels), nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw DatasetError("cannot decode PNG " + path + ": " + msg);
    }
    width = image.width;
    height = image.height;
    return buffer;
}

}  // namespace detail

/// Decodes any 8-bit PNG to a (3,H,W) tensor in [0,1].
inline Tensor<float> read_png_rgb(const std::string& path) {
    std::size_t w = 0, h = 0;
    std::vector<png_byte> buf = detail::png_read_buffer(path, PNG_FORMAT_RGB, 3, w, h);
    Tensor<float> out(Shape{3, h, w});
    // Exact division keeps byte b <-> b/255.0f a lossless float contract.
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                out[(c * h + y) * w + x] = static_cast<float>(buf[(y * w + x) * 3 + c]) / 255.0f;
    return out;
}

/// Decodes any 8-bit PNG to a single-channel (1,H,W) tensor in [0,1].
inline Tensor<float> read_png_gray(const std::string& path) {
    std::size_t w = 0, h = 0;
    std::vector<png_byte> buf = detail::png_read_buffer(path, PNG_FORMAT_GRAY, 1, w, h);
    Tensor<float> out(Shape{1, h, w});
    for (std::size_t i = 0; i < h * w; ++i) out[i] = static_cast<float>(buf[i]) / 255.0f;
    return out;
}

inline png_byte quantize8(float v) {
    const float scaled = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
    return static_cast<png_byte>(scaled);
}

/// Writes a (3,H,W) tensor in [0,1] as an 8-bit RGB PNG.
inline void write_png_rgb(const std::string& path, const Tensor<float>& img) {
    if (img.rank() != 3 || img.dim(0) != 3)
        throw ShapeError("write_png_rgb: expected (3,H,W) image, got " + shape_str(img.shape()));
    const std::size_t h = img.dim(1), w = img.dim(2);
    std::vector<png_byte> buf(h * w * 3);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                buf[(y * w + x) * 3 + c] = quantize8(img[(c * h + y) * w + x]);
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(),
                                 static_cast<png_int_32>(w * 3), nullptr))
        throw DatasetError("cannot write PNG " + path + ": " + image.message);
}

/// Writes a (1,H,W) tensor in [0,1] as an 8-bit grayscale PNG.
inline void write_png_gray(const std::string& path, const Tensor<float>& img) {
    if (img.rank() != 3 || img.dim(0) != 1)
        throw ShapeError("write_png_gray: expected (1,H,W) image, got " + shape_str(img.shape()));
    const std::size_t h = img.dim(1), w = img.dim(2);
    std::vector<png_byte> buf(h * w);
    for (std::size_t i = 0; i < h * w; ++i) buf[i] = quantize8(img[i]);
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(),
                                 static_cast<png_int_32>(w), nullptr))
        throw DatasetError("cannot write PNG " + path + ": " + image.message);
}

// Bilinear resample with half-pixel-aligned sample centers and edge clamping:
// source coordinate = (dst + 0.5) * in/out - 0.5.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, std::size_t out_h, std::size_t out_w) {
    if (img.rank() != 3) throw ShapeError("resize: expected (C,H,W) image, got " +
                                          shape_str(img.shape()));
    if (out_h == 0 || out_w == 0) throw ShapeError("resize: target extent must be positive");
    const std::size_t c = img.dim(0), in_h = img.dim(1), in_w = img.dim(2);
    if (in_h == out_h && in_w == out_w) {
        Tensor<T> same(img.shape());
        std::copy(img.data(), img.data() + img.numel(), same.data());
        return same;
    }
    const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);

    std::vector<std::size_t> y0(out_h), y1(out_h), x0(out_w), x1(out_w);
    std::vector<double> fy(out_h), fx(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        double src = (static_cast<double>(y) + 0.5) * sy - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_h - 1));
        y0[y] = static_cast<std::size_t>(src);
        y1[y] = std::min(y0[y] + 1, in_h - 1);
        fy[y] = src - static_cast<double>(y0[y]);
    }
    for (std::size_t x = 0; x < out_w; ++x) {
        double src = (static_cast<double>(x) + 0.5) * sx - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_w - 1));
        x0[x] = static_cast<std::size_t>(src);
        x1[x] = std::min(x0[x] + 1, in_w - 1);
        fx[x] = src - static_cast<double>(x0[x]);
    }

    Tensor<T> out(Shape{c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* src = img.data() + ch * in_h * in_w;
        T* dst = out.data() + ch * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y)
            for (std::size_t x = 0; x < out_w; ++x) {
                const double tl = src[y0[y] * in_w + x0[x]], tr = src[y0[y] * in_w + x1[x]];
                const double bl = src[y1[y] * in_w + x0[x]], br = src[y1[y] * in_w + x1[x]];
                const double top = tl + (tr - tl) * fx[x];
                const double bot = bl + (br - bl) * fx[x];
                dst[y * out_w + x] = static_cast<T>(top + (bot - top) * fy[y]);
            }
    }
    return out;
}

/// Thresholds a mask to exact {0,1} values.
template <typename T>
Tensor<T> binarize(const Tensor<T>& mask, T threshold = T(0.5)) {
    Tensor<T> out(mask.shape());
    for (std::size_t i = 0; i < mask.numel(); ++i) out[i] = mask[i] >= threshold ? T(1) : T(0);
    return out;
}

/// Stacks same-shape (C,H,W) tensors into one (N,C,H,W) batch.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
    if (items.empty()) throw ShapeError("stack: empty batch");
    const Shape& s = items[0].shape();
    if (s.size() != 3) throw ShapeError("stack: expected rank-3 items, got " + shape_str(s));
    for (const auto& t : items)
        if (t.shape() != s)
            throw ShapeError("stack: mismatched item shapes " + shape_str(t.shape()) + " vs " +
                             shape_str(s));
    Tensor<T> out(Shape{items.size(), s[0], s[1], s[2]});
    const std::size_t stride = shape_numel(s);
    for (std::size_t i = 0; i < items.size(); ++i)
        std::copy(items[i].data(), items[i].data() + stride, out.data() + i * stride);
    return out;
}

/// Extracts sample i of an (N,C,H,W) batch as a (C,H,W) tensor.
template <typename T>
Tensor<T> unstack(const Tensor<T>& batch, std::size_t i) {
    if (batch.rank() != 4) throw ShapeError("unstack: expected rank-4 batch");
    if (i >= batch.dim(0)) throw ShapeError("unstack: index out of range");
    const std::size_t stride = batch.dim(1) * batch.dim(2) * batch.dim(3);
    Tensor<T> out(Shape{batch.dim(1), batch.dim(2), batch.dim(3)});
    std::copy(batch.data() + i * stride, batch.data() + (i + 1) * stride, out.data());
    return out;
}

}  // namespace harmonize
