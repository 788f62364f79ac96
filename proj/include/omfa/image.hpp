#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "omfa/errors.hpp"
#include "omfa/tensor.hpp"

namespace omfa {

// Images are (3, H, W) float tensors. Byte b maps to b/256, so every pixel
// value is a dyadic rational and the latent affine in codec.hpp is exactly
// invertible. 255 maps to 0.99609375; tests and renderers treat that as white.
inline constexpr float kPixelScale = 1.0f / 256.0f;

inline float byte_to_float(uint8_t b) { return static_cast<float>(b) * kPixelScale; }

inline uint8_t float_to_byte(float x) {
    long v = std::lround(static_cast<double>(x) * 256.0);
    if (v < 0) v = 0;
    if (v > 255) v = 255;
    return static_cast<uint8_t>(v);
}

template <typename T>
TensorT<T> make_image(int h, int w, T fill = T(0)) {
    return TensorT<T>({3, h, w}, fill);
}

template <typename T>
std::vector<uint8_t> image_to_bytes(const TensorT<T>& img) {
    if (img.shape.size() != 3 || img.dim(0) != 3) throw ShapeError("expected a (3,H,W) image");
    const int h = img.dim(1), w = img.dim(2);
    std::vector<uint8_t> out(static_cast<std::size_t>(h) * w * 3);
    std::size_t k = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out[k++] = float_to_byte(static_cast<float>(img.at(c, y, x)));
    return out;
}

template <typename T = float>
TensorT<T> image_from_bytes(const std::vector<uint8_t>& bytes, int h, int w) {
    TensorT<T> img({3, h, w});
    std::size_t k = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<T>(byte_to_float(bytes[k++]));
    return img;
}

// ---- PNG io (8-bit RGB) ----

template <typename T>
void write_png(const std::string& path, const TensorT<T>& img) {
    const int h = img.dim(1), w = img.dim(2);
    std::vector<uint8_t> bytes = image_to_bytes(img);

    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y)
        png_write_row(png, bytes.data() + static_cast<std::size_t>(y) * w * 3);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

template <typename T = float>
TensorT<T> read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open for reading: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("png read failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    // normalize any input to 8-bit RGB
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    std::vector<uint8_t> bytes(static_cast<std::size_t>(h) * w * 3);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return image_from_bytes<T>(bytes, h, w);
}

// ---- small image ops ----

// integer-factor nearest-neighbor upscale (exact, invertible by decimation)
template <typename T>
TensorT<T> upscale_nearest(const TensorT<T>& img, int factor) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    TensorT<T> out({c, h * factor, w * factor});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h * factor; ++y)
            for (int x = 0; x < w * factor; ++x) out.at(ci, y, x) = img.at(ci, y / factor, x / factor);
    return out;
}

template <typename T>
TensorT<T> crop(const TensorT<T>& img, int y0, int x0, int ch, int cw) {
    const int c = img.dim(0);
    if (y0 < 0 || x0 < 0 || y0 + ch > img.dim(1) || x0 + cw > img.dim(2))
        throw ShapeError("crop outside image bounds");
    TensorT<T> out({c, ch, cw});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < ch; ++y)
            for (int x = 0; x < cw; ++x) out.at(ci, y, x) = img.at(ci, y0 + y, x0 + x);
    return out;
}

template <typename T>
void clamp01(TensorT<T>& img) {
    for (T& x : img.v) x = x < T(0) ? T(0) : (x > T(1) ? T(1) : x);
}

}  // namespace omfa
