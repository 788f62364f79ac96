#pragma once

#include <cstdint>
#include <vector>

#include "omfa/rng.hpp"
#include "omfa/tensor.hpp"

namespace omfa::test {

// random tensor with unit-normal entries
template <typename T>
TensorT<T> random_tensor(std::vector<int> shape, Rng& rng) {
    TensorT<T> t(std::move(shape));
    for (auto& x : t.v) x = static_cast<T>(rng.normal());
    return t;
}

// random image with values on the 1/256 grid (what 8-bit files produce)
template <typename T>
TensorT<T> random_image(int h, int w, Rng& rng) {
    TensorT<T> img({3, h, w});
    for (auto& x : img.v) x = static_cast<T>(rng.below(256)) / T(256);
    return img;
}

// random binary mask with roughly `p` ones
template <typename T>
TensorT<T> random_mask_tensor(std::vector<int> shape, double p, Rng& rng) {
    TensorT<T> t(std::move(shape));
    for (auto& x : t.v) x = rng.uniform() < p ? T(1) : T(0);
    return t;
}

}  // namespace omfa::test
