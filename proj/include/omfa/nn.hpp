#pragma once

#include <Eigen/Core>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "omfa/errors.hpp"
#include "omfa/rng.hpp"
#include "omfa/tensor.hpp"

namespace omfa::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Named parameter arrays. std::map keeps iteration order stable for the
// optimizer and checkpoint writer.
template <typename T>
struct ParamStore {
    std::map<std::string, TensorT<T>> arrays;

    TensorT<T>& at(const std::string& name) {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw LookupError("no parameter named '" + name + "'");
        return it->second;
    }
    const TensorT<T>& at(const std::string& name) const {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw LookupError("no parameter named '" + name + "'");
        return it->second;
    }
    void add(const std::string& name, TensorT<T> t) {
        if (!arrays.emplace(name, std::move(t)).second)
            throw ValidationError("duplicate parameter name '" + name + "'");
    }
    std::size_t total_params() const {
        std::size_t n = 0;
        for (const auto& [k, v] : arrays) n += v.numel();
        return n;
    }
    // zero-filled store with matching names/shapes (gradient accumulator)
    ParamStore zeros_like() const {
        ParamStore g;
        for (const auto& [k, v] : arrays) g.arrays.emplace(k, TensorT<T>(v.shape));
        return g;
    }
};

// fan-in scaled normal init; each tensor draws from its own name-derived
// stream so determinism does not depend on creation order
template <typename T>
TensorT<T> he_normal(std::vector<int> shape, int fan_in, uint64_t seed, const std::string& name) {
    TensorT<T> t(std::move(shape));
    Rng rng = Rng(seed).child(name);
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& x : t.v) x = static_cast<T>(rng.normal() * std);
    return t;
}

// ---- elementwise ----

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
TensorT<T> silu(const TensorT<T>& x) {
    TensorT<T> y(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] * sigmoid(x[i]);
    return y;
}

// dL/dx given dL/dy and the pre-activation input
template <typename T>
TensorT<T> silu_backward(const TensorT<T>& x, const TensorT<T>& dy) {
    TensorT<T> dx(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const T s = sigmoid(x[i]);
        dx[i] = dy[i] * s * (T(1) + x[i] * (T(1) - s));
    }
    return dx;
}

// ---- im2col convolution ----

namespace detail {
template <typename T>
std::vector<T>& scratch() {
    static thread_local std::vector<T> buf;
    return buf;
}
}  // namespace detail

inline int conv_out_size(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// col layout: rows = cin*k*k, cols = ho*wo
template <typename T>
void im2col(const TensorT<T>& x, int k, int stride, int pad, std::vector<T>& col) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int ho = conv_out_size(h, k, stride, pad), wo = conv_out_size(w, k, stride, pad);
    col.assign(static_cast<std::size_t>(c) * k * k * ho * wo, T(0));
    const std::size_t n = static_cast<std::size_t>(ho) * wo;
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* row = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * n;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = &x.at(ci, iy, 0);
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) row[oy * wo + ox] = src[ix];
                    }
                }
            }
}

template <typename T>
void col2im_add(const std::vector<T>& col, int k, int stride, int pad, TensorT<T>& dx) {
    const int c = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
    const int ho = conv_out_size(h, k, stride, pad), wo = conv_out_size(w, k, stride, pad);
    const std::size_t n = static_cast<std::size_t>(ho) * wo;
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * n;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = &dx.at(ci, iy, 0);
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += row[oy * wo + ox];
                    }
                }
            }
}

// y = W * im2col(x) + b.  W is (cout, cin*k*k); b may be empty.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& W, const TensorT<T>& b, int k,
                  int stride, int pad) {
    const int cin = x.dim(0);
    const int cout = W.dim(0);
    if (W.dim(1) != cin * k * k)
        throw ShapeError("conv weight expects " + std::to_string(cin * k * k) + " inputs, got " +
                         std::to_string(W.dim(1)));
    const int ho = conv_out_size(x.dim(1), k, stride, pad);
    const int wo = conv_out_size(x.dim(2), k, stride, pad);
    const std::size_t n = static_cast<std::size_t>(ho) * wo;
    TensorT<T> y({cout, ho, wo});

    if (k == 1 && stride == 1 && pad == 0) {
        ConstMatMap<T> Xm(x.data(), cin, static_cast<Eigen::Index>(n));
        ConstMatMap<T> Wm(W.data(), cout, cin);
        MatMap<T> Ym(y.data(), cout, static_cast<Eigen::Index>(n));
        Ym.noalias() = Wm * Xm;
    } else {
        auto& col = detail::scratch<T>();
        im2col(x, k, stride, pad, col);
        ConstMatMap<T> Cm(col.data(), cin * k * k, static_cast<Eigen::Index>(n));
        ConstMatMap<T> Wm(W.data(), cout, cin * k * k);
        MatMap<T> Ym(y.data(), cout, static_cast<Eigen::Index>(n));
        Ym.noalias() = Wm * Cm;
    }
    if (!b.empty()) {
        for (int co = 0; co < cout; ++co) {
            T* row = y.data() + static_cast<std::size_t>(co) * n;
            const T bias = b[static_cast<std::size_t>(co)];
            for (std::size_t i = 0; i < n; ++i) row[i] += bias;
        }
    }
    return y;
}

// Accumulates dW/db, returns dx. `x` is the forward input (im2col is
// recomputed here instead of cached).
template <typename T>
TensorT<T> conv2d_backward(const TensorT<T>& x, const TensorT<T>& W, const TensorT<T>& dy, int k,
                           int stride, int pad, TensorT<T>& dW, TensorT<T>& db) {
    const int cin = x.dim(0);
    const int cout = W.dim(0);
    const std::size_t n = static_cast<std::size_t>(dy.dim(1)) * dy.dim(2);
    ConstMatMap<T> dYm(dy.data(), cout, static_cast<Eigen::Index>(n));
    ConstMatMap<T> Wm(W.data(), cout, W.dim(1));
    MatMap<T> dWm(dW.data(), cout, W.dim(1));
    TensorT<T> dx(x.shape);

    if (!db.empty()) {
        for (int co = 0; co < cout; ++co) {
            const T* row = dy.data() + static_cast<std::size_t>(co) * n;
            T acc = T(0);
            for (std::size_t i = 0; i < n; ++i) acc += row[i];
            db[static_cast<std::size_t>(co)] += acc;
        }
    }

    if (k == 1 && stride == 1 && pad == 0) {
        ConstMatMap<T> Xm(x.data(), cin, static_cast<Eigen::Index>(n));
        dWm.noalias() += dYm * Xm.transpose();
        MatMap<T> dXm(dx.data(), cin, static_cast<Eigen::Index>(n));
        dXm.noalias() = Wm.transpose() * dYm;
    } else {
        auto& col = detail::scratch<T>();
        im2col(x, k, stride, pad, col);
        ConstMatMap<T> Cm(col.data(), cin * k * k, static_cast<Eigen::Index>(n));
        dWm.noalias() += dYm * Cm.transpose();
        std::vector<T> dcol(col.size());
        MatMap<T> dCm(dcol.data(), cin * k * k, static_cast<Eigen::Index>(n));
        dCm.noalias() = Wm.transpose() * dYm;
        col2im_add(dcol, k, stride, pad, dx);
    }
    return dx;
}

// ---- dense layer on vectors ----
// Reductions here and below are hand-rolled sequential loops: Eigen's redux
// and GEMV kernels peel to the runtime pointer alignment, which makes float
// sums depend on heap addresses. Only packed GEMM (alignment-independent) is
// delegated to Eigen.

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& W, const TensorT<T>& b) {
    const int in = x.dim(0), out = W.dim(0);
    if (W.dim(1) != in) throw ShapeError("linear dimension mismatch");
    TensorT<T> y({out});
    for (int o = 0; o < out; ++o) {
        const T* row = W.data() + static_cast<std::size_t>(o) * in;
        T acc = b.empty() ? T(0) : b[static_cast<std::size_t>(o)];
        for (int i = 0; i < in; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(o)] = acc;
    }
    return y;
}

template <typename T>
TensorT<T> linear_backward(const TensorT<T>& x, const TensorT<T>& W, const TensorT<T>& dy,
                           TensorT<T>& dW, TensorT<T>& db) {
    const int in = x.dim(0), out = W.dim(0);
    for (int o = 0; o < out; ++o) {
        const T d = dy[static_cast<std::size_t>(o)];
        T* drow = dW.data() + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) drow[i] += d * x[static_cast<std::size_t>(i)];
        if (!db.empty()) db[static_cast<std::size_t>(o)] += d;
    }
    TensorT<T> dx({in});
    for (int o = 0; o < out; ++o) {
        const T d = dy[static_cast<std::size_t>(o)];
        const T* row = W.data() + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) dx[static_cast<std::size_t>(i)] += row[i] * d;
    }
    return dx;
}

// ---- resampling ----

template <typename T>
TensorT<T> upsample_nearest2x(const TensorT<T>& x) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    TensorT<T> y({c, 2 * h, 2 * w});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < 2 * h; ++yy)
            for (int xx = 0; xx < 2 * w; ++xx) y.at(ci, yy, xx) = x.at(ci, yy / 2, xx / 2);
    return y;
}

template <typename T>
TensorT<T> upsample_nearest2x_backward(const TensorT<T>& dy) {
    const int c = dy.dim(0), h = dy.dim(1) / 2, w = dy.dim(2) / 2;
    TensorT<T> dx({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < 2 * h; ++yy)
            for (int xx = 0; xx < 2 * w; ++xx) dx.at(ci, yy / 2, xx / 2) += dy.at(ci, yy, xx);
    return dx;
}

// ---- multi-head self-attention over all spatial positions ----

template <typename T>
struct AttentionCache {
    TensorT<T> x;       // input (C,H,W)
    TensorT<T> qkv;     // (3C, N)
    TensorT<T> probs;   // (heads, N, N) softmax rows
    TensorT<T> concat;  // (C, N) pre output-projection
};

template <typename T>
TensorT<T> attention(const TensorT<T>& x, const TensorT<T>& Wqkv, const TensorT<T>& bqkv,
                     const TensorT<T>& Wout, const TensorT<T>& bout, int heads,
                     AttentionCache<T>* cache) {
    const int C = x.dim(0);
    const int N = x.dim(1) * x.dim(2);
    const int dh = C / heads;
    const T inv_sqrt_dh = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));

    TensorT<T> qkv({3 * C, N});
    {
        ConstMatMap<T> Xm(x.data(), C, N);
        ConstMatMap<T> Wm(Wqkv.data(), 3 * C, C);
        MatMap<T> Qm(qkv.data(), 3 * C, N);
        Qm.noalias() = Wm * Xm;
        for (int r = 0; r < 3 * C; ++r) {
            T* row = qkv.data() + static_cast<std::size_t>(r) * N;
            for (int i = 0; i < N; ++i) row[i] += bqkv[static_cast<std::size_t>(r)];
        }
    }

    TensorT<T> probs({heads, N, N});
    TensorT<T> concat({C, N});
    for (int hd = 0; hd < heads; ++hd) {
        ConstMatMap<T> Q(qkv.data() + static_cast<std::size_t>(hd) * dh * N, dh, N);
        ConstMatMap<T> K(qkv.data() + static_cast<std::size_t>(C + hd * dh) * N, dh, N);
        ConstMatMap<T> V(qkv.data() + static_cast<std::size_t>(2 * C + hd * dh) * N, dh, N);
        MatMap<T> P(probs.data() + static_cast<std::size_t>(hd) * N * N, N, N);
        P.noalias() = (Q.transpose() * K) * inv_sqrt_dh;  // P[i][j] = q_i . k_j
        for (int i = 0; i < N; ++i) {
            T* row = probs.data() + (static_cast<std::size_t>(hd) * N + i) * N;
            T m = row[0];
            for (int j = 1; j < N; ++j) m = row[j] > m ? row[j] : m;
            T sum = T(0);
            for (int j = 0; j < N; ++j) {
                row[j] = std::exp(row[j] - m);
                sum += row[j];
            }
            const T inv = T(1) / sum;
            for (int j = 0; j < N; ++j) row[j] *= inv;
        }
        MatMap<T> O(concat.data() + static_cast<std::size_t>(hd) * dh * N, dh, N);
        O.noalias() = V * P.transpose();  // out_i = sum_j P[i][j] v_j
    }

    TensorT<T> y(x.shape);
    {
        ConstMatMap<T> Wm(Wout.data(), C, C);
        ConstMatMap<T> Om(concat.data(), C, N);
        MatMap<T> Ym(y.data(), C, N);
        Ym.noalias() = Wm * Om;
        for (int r = 0; r < C; ++r) {
            T* row = y.data() + static_cast<std::size_t>(r) * N;
            for (int i = 0; i < N; ++i) row[i] += bout[static_cast<std::size_t>(r)];
        }
    }
    // residual
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] += x[i];

    if (cache) {
        cache->x = x;
        cache->qkv = std::move(qkv);
        cache->probs = std::move(probs);
        cache->concat = std::move(concat);
    }
    return y;
}

template <typename T>
TensorT<T> attention_backward(const AttentionCache<T>& c, const TensorT<T>& dy,
                              const TensorT<T>& Wqkv, const TensorT<T>& Wout, int heads,
                              TensorT<T>& dWqkv, TensorT<T>& dbqkv, TensorT<T>& dWout,
                              TensorT<T>& dbout) {
    const int C = c.x.dim(0);
    const int N = c.x.dim(1) * c.x.dim(2);
    const int dh = C / heads;
    const T inv_sqrt_dh = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));

    ConstMatMap<T> dYm(dy.data(), C, N);

    // output projection
    TensorT<T> dconcat({C, N});
    {
        ConstMatMap<T> Om(c.concat.data(), C, N);
        ConstMatMap<T> Wm(Wout.data(), C, C);
        MatMap<T>(dWout.data(), C, C).noalias() += dYm * Om.transpose();
        for (int r = 0; r < C; ++r) {
            const T* row = dy.data() + static_cast<std::size_t>(r) * N;
            T acc = T(0);
            for (int i = 0; i < N; ++i) acc += row[i];
            dbout[static_cast<std::size_t>(r)] += acc;
        }
        MatMap<T>(dconcat.data(), C, N).noalias() = Wm.transpose() * dYm;
    }

    TensorT<T> dqkv({3 * C, N});
    for (int hd = 0; hd < heads; ++hd) {
        ConstMatMap<T> Q(c.qkv.data() + static_cast<std::size_t>(hd) * dh * N, dh, N);
        ConstMatMap<T> K(c.qkv.data() + static_cast<std::size_t>(C + hd * dh) * N, dh, N);
        ConstMatMap<T> V(c.qkv.data() + static_cast<std::size_t>(2 * C + hd * dh) * N, dh, N);
        ConstMatMap<T> P(c.probs.data() + static_cast<std::size_t>(hd) * N * N, N, N);
        ConstMatMap<T> dO(dconcat.data() + static_cast<std::size_t>(hd) * dh * N, dh, N);
        MatMap<T> dQ(dqkv.data() + static_cast<std::size_t>(hd) * dh * N, dh, N);
        MatMap<T> dK(dqkv.data() + static_cast<std::size_t>(C + hd * dh) * N, dh, N);
        MatMap<T> dV(dqkv.data() + static_cast<std::size_t>(2 * C + hd * dh) * N, dh, N);

        // out = V P^T  =>  dV = dO P ; dP = dO^T V
        dV.noalias() = dO * P;
        RowMat<T> dP = dO.transpose() * V;  // (N,N), dP[i][j]
        // softmax backward per row: dS = P .* (dP - rowdot(dP,P))
        RowMat<T> dS(N, N);
        for (int i = 0; i < N; ++i) {
            const T* prow = c.probs.data() + (static_cast<std::size_t>(hd) * N + i) * N;
            const T* dprow = dP.data() + static_cast<std::size_t>(i) * N;
            T dot = T(0);
            for (int j = 0; j < N; ++j) dot += dprow[j] * prow[j];
            T* dsrow = dS.data() + static_cast<std::size_t>(i) * N;
            for (int j = 0; j < N; ++j) dsrow[j] = prow[j] * (dprow[j] - dot);
        }
        // S = Q^T K / sqrt(dh)
        dQ.noalias() = (K * dS.transpose()) * inv_sqrt_dh;
        dK.noalias() = (Q * dS) * inv_sqrt_dh;
    }

    TensorT<T> dx(c.x.shape);
    {
        ConstMatMap<T> Xm(c.x.data(), C, N);
        ConstMatMap<T> dQKV(dqkv.data(), 3 * C, N);
        ConstMatMap<T> Wm(Wqkv.data(), 3 * C, C);
        MatMap<T>(dWqkv.data(), 3 * C, C).noalias() += dQKV * Xm.transpose();
        for (int r = 0; r < 3 * C; ++r) {
            const T* row = dqkv.data() + static_cast<std::size_t>(r) * N;
            T acc = T(0);
            for (int i = 0; i < N; ++i) acc += row[i];
            dbqkv[static_cast<std::size_t>(r)] += acc;
        }
        MatMap<T>(dx.data(), C, N).noalias() = Wm.transpose() * dQKV;
    }
    // residual path
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += dy[i];
    return dx;
}

}  // namespace omfa::nn
