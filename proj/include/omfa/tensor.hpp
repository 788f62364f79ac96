#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "omfa/errors.hpp"

namespace omfa {

// Dense row-major tensor. Feature maps use (channels, height, width),
// vectors use a single dim, conv weights (out, in, kh, kw).
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> v;

    TensorT() = default;
    explicit TensorT(std::vector<int> s) : shape(std::move(s)), v(count(shape), T(0)) {}
    TensorT(std::vector<int> s, T fill) : shape(std::move(s)), v(count(shape), fill) {}

    static std::size_t count(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d < 0) throw ShapeError("negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return v.size(); }
    bool empty() const { return v.empty(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    // (c,h,w) accessors for 3-d maps
    T& at(int c, int y, int x) {
        return v[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    const T& at(int c, int y, int x) const {
        return v[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    T& operator[](std::size_t i) { return v[i]; }
    const T& operator[](std::size_t i) const { return v[i]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    static std::string shape_str(const std::vector<int>& s) {
        std::string out = "(";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + ")";
    }
};

using Tensor = TensorT<float>;

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": " + TensorT<T>::shape_str(a.shape) +
                         " vs " + TensorT<T>::shape_str(b.shape));
}

}  // namespace omfa
