#pragma once

#include "omfa/errors.hpp"
#include "omfa/tensor.hpp"

namespace omfa {

// Exactly invertible image<->latent codec: space-to-depth of f x f pixel
// blocks into channels, then the per-channel affine x -> 2x - 1.
//
// Images are (3, H, W) tensors with values on the 1/256 grid (see image.hpp);
// on that grid both affine directions are exact in float, so
// decode(encode(x)) == x bit-for-bit.
inline constexpr int kDownsampleFactor = 2;

template <typename T>
TensorT<T> encode(const TensorT<T>& image, int f = kDownsampleFactor) {
    if (image.shape.size() != 3 || image.dim(0) != 3)
        throw ShapeError("encode expects a (3,H,W) image");
    const int h = image.dim(1), w = image.dim(2);
    if (f < 1 || h % f != 0 || w % f != 0)
        throw ShapeError("image dimensions must be divisible by the downsample factor");
    TensorT<T> lat({3 * f * f, h / f, w / f});
    for (int c = 0; c < 3; ++c)
        for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx) {
                const int oc = (c * f + dy) * f + dx;
                for (int y = 0; y < h / f; ++y)
                    for (int x = 0; x < w / f; ++x)
                        lat.at(oc, y, x) = T(2) * image.at(c, y * f + dy, x * f + dx) - T(1);
            }
    return lat;
}

template <typename T>
TensorT<T> decode(const TensorT<T>& latent, int f = kDownsampleFactor) {
    if (latent.shape.size() != 3 || latent.dim(0) != 3 * f * f)
        throw ShapeError("decode expects 3*f^2 channels, got " +
                         std::to_string(latent.shape.empty() ? 0 : latent.dim(0)));
    const int lh = latent.dim(1), lw = latent.dim(2);
    TensorT<T> img({3, lh * f, lw * f});
    for (int c = 0; c < 3; ++c)
        for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx) {
                const int oc = (c * f + dy) * f + dx;
                for (int y = 0; y < lh; ++y)
                    for (int x = 0; x < lw; ++x)
                        img.at(c, y * f + dy, x * f + dx) = (latent.at(oc, y, x) + T(1)) / T(2);
            }
    return img;
}

}  // namespace omfa
