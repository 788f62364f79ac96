#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "omfa/diffusion.hpp"
#include "omfa/layout.hpp"
#include "omfa/nn.hpp"
#include "omfa/tensor.hpp"

namespace omfa {

struct DenoiserConfig {
    int base_channels = 64;
    int depth = 3;            // resolution levels
    int attention_level = -1; // -1 selects the lowest level
    int time_embed_dim = 256;
    int attention_heads = 4;

    int attn_level() const { return attention_level < 0 ? depth - 1 : attention_level; }
    int level_channels(int level) const { return base_channels << level; }

    void validate() const {
        if (depth < 2) throw ValidationError("denoiser depth must be >= 2");
        if (base_channels < attention_heads || base_channels % attention_heads != 0)
            throw ValidationError("base_channels must be a positive multiple of attention_heads");
        if (attn_level() < 0 || attn_level() >= depth)
            throw ValidationError("attention_level out of range");
        if (time_embed_dim < 8 || time_embed_dim % 2 != 0)
            throw ValidationError("time_embed_dim must be even and >= 8");
    }
};

// sinusoidal position features for the timestep
template <typename T>
TensorT<T> timestep_embedding(int t, int dim) {
    TensorT<T> e({dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        e[static_cast<std::size_t>(i)] = static_cast<T>(std::sin(t * freq));
        e[static_cast<std::size_t>(half + i)] = static_cast<T>(std::cos(t * freq));
    }
    return e;
}

namespace detail {

// residual block with zero-initialized output gain: x + gain * f(x, temb)
template <typename T>
struct ResBlockCache {
    TensorT<T> x, a1, h1, a2, h2;
};

template <typename T>
struct DenoiserCtx {
    ComponentLayout layout;
    CondFlags flags;
    TensorT<T> temb_sin, temb_pre, temb;
    TensorT<T> person_in, pose_in, garment_in, head_in;  // slot inputs
    std::vector<ResBlockCache<T>> rb;                    // in forward order
    std::vector<TensorT<T>> up_in;                       // inputs of up convs (pre-upsample)
    std::vector<TensorT<T>> skips;                       // down-path outputs feeding skips
    nn::AttentionCache<T> attn;
    TensorT<T> trunk_out;  // features entering the output heads
};

}  // namespace detail

// Noise-prediction network over the joint latent. Per-component 1x1
// projections (bias-free, so a dropped condition is identical to a zeroed
// input) feed a small UNet; residual gains and output heads start at zero,
// making the initial prediction exactly zero everywhere.
template <typename T>
class DenoiserT {
public:
    using Params = nn::ParamStore<T>;
    using Ctx = detail::DenoiserCtx<T>;

    explicit DenoiserT(DenoiserConfig cfg, int image_channels = 12)
        : cfg_(cfg), ic_(image_channels) {
        cfg_.validate();
    }

    const DenoiserConfig& config() const { return cfg_; }
    int image_channels() const { return ic_; }

    Params init_params(uint64_t seed) const {
        Params p;
        const int c0 = cfg_.base_channels;
        const int dt = cfg_.time_embed_dim;
        auto he = [&](const std::string& name, std::vector<int> shape, int fan_in) {
            p.add(name, nn::he_normal<T>(std::move(shape), fan_in, seed, name));
        };
        auto zeros = [&](const std::string& name, std::vector<int> shape) {
            p.add(name, TensorT<T>(std::move(shape)));
        };

        he("time.w1", {dt, dt}, dt);
        zeros("time.b1", {dt});
        he("time.w2", {dt, dt}, dt);
        zeros("time.b2", {dt});

        he("proj.person.w", {c0, ic_}, ic_);
        he("proj.pose.w", {c0, ic_}, ic_);
        he("proj.garment.w", {c0, ic_ + 1}, ic_ + 1);  // + cue channel
        he("proj.head.w", {c0, ic_}, ic_);

        auto resblock = [&](const std::string& prefix, int ch) {
            he(prefix + ".conv1.w", {ch, ch * 9}, ch * 9);
            zeros(prefix + ".conv1.b", {ch});
            he(prefix + ".temb.w", {ch, dt}, dt);
            zeros(prefix + ".temb.b", {ch});
            he(prefix + ".conv2.w", {ch, ch * 9}, ch * 9);
            zeros(prefix + ".conv2.b", {ch});
            zeros(prefix + ".gain", {1});
        };
        for (int l = 0; l < cfg_.depth; ++l) resblock("rb_d" + std::to_string(l), cfg_.level_channels(l));
        resblock("rb_mid", cfg_.level_channels(cfg_.depth - 1));
        for (int l = cfg_.depth - 2; l >= 0; --l) resblock("rb_u" + std::to_string(l), cfg_.level_channels(l));
        for (int l = 0; l + 1 < cfg_.depth; ++l) {
            const int ci = cfg_.level_channels(l), co = cfg_.level_channels(l + 1);
            he("down" + std::to_string(l) + ".w", {co, ci * 9}, ci * 9);
            zeros("down" + std::to_string(l) + ".b", {co});
            he("up" + std::to_string(l) + ".w", {ci, co * 9}, co * 9);
            zeros("up" + std::to_string(l) + ".b", {ci});
        }

        const int ca = cfg_.level_channels(cfg_.attn_level());
        he("attn.qkv.w", {3 * ca, ca}, ca);
        zeros("attn.qkv.b", {3 * ca});
        zeros("attn.out.w", {ca, ca});  // zero so the block starts as identity
        zeros("attn.out.b", {ca});

        zeros("head.person.w", {2 * ic_, c0});
        zeros("head.person.b", {2 * ic_});
        zeros("head.garment.w", {ic_ + 1, c0});
        zeros("head.garment.b", {ic_ + 1});
        zeros("head.head.w", {ic_, c0});
        zeros("head.head.b", {ic_});
        return p;
    }

    // closed-form parameter count for the configuration
    std::size_t expected_param_count() const {
        const std::size_t c0 = static_cast<std::size_t>(cfg_.base_channels);
        const std::size_t dt = static_cast<std::size_t>(cfg_.time_embed_dim);
        const std::size_t ic = static_cast<std::size_t>(ic_);
        auto rb = [&](std::size_t ch) { return 2 * (ch * ch * 9 + ch) + ch * dt + ch + 1; };

        std::size_t n = 2 * (dt * dt + dt);        // time MLP
        n += c0 * ic * 3 + c0 * (ic + 1);          // bias-free projections
        for (int l = 0; l < cfg_.depth; ++l)       // down blocks
            n += rb(static_cast<std::size_t>(cfg_.level_channels(l)));
        n += rb(static_cast<std::size_t>(cfg_.level_channels(cfg_.depth - 1)));  // mid block
        for (int l = 0; l + 1 < cfg_.depth; ++l)   // up blocks
            n += rb(static_cast<std::size_t>(cfg_.level_channels(l)));
        for (int l = 0; l + 1 < cfg_.depth; ++l) {  // down/up convs
            const std::size_t ci = static_cast<std::size_t>(cfg_.level_channels(l));
            const std::size_t co = static_cast<std::size_t>(cfg_.level_channels(l + 1));
            n += co * ci * 9 + co;
            n += ci * co * 9 + ci;
        }
        const std::size_t ca = static_cast<std::size_t>(cfg_.level_channels(cfg_.attn_level()));
        n += 3 * ca * ca + 3 * ca + ca * ca + ca;  // attention qkv + out
        n += 2 * ic * c0 + 2 * ic + (ic + 1) * c0 + (ic + 1) + ic * c0 + ic;  // heads
        return n;
    }

    TensorT<T> forward(const JointLatentT<T>& joint, int t, CondFlags flags, const Params& p,
                       Ctx* ctx = nullptr) const {
        const ComponentLayout& l = joint.layout;
        validate_input(l, t);
        Ctx local;
        Ctx& c = ctx ? *ctx : local;
        c.layout = l;
        c.flags = flags;

        // timestep embedding MLP
        c.temb_sin = timestep_embedding<T>(t, cfg_.time_embed_dim);
        c.temb_pre = nn::linear(c.temb_sin, p.at("time.w1"), p.at("time.b1"));
        TensorT<T> th = nn::silu(c.temb_pre);
        c.temb = nn::linear(th, p.at("time.w2"), p.at("time.b2"));

        // per-component projections; dropped conditions become zero features
        c.person_in = slot_slice(joint.data, l.person_span, l.person_channels);
        c.pose_in = slot_slice(joint.data, l.person_span, l.pose_channels);
        c.garment_in = slot_slice(joint.data, l.garment_span, {0, ic_ + 1});
        c.head_in = slot_slice(joint.data, *l.head_span, l.head_channels);

        const TensorT<T> empty_bias;
        TensorT<T> fp = nn::conv2d(c.person_in, p.at("proj.person.w"), empty_bias, 1, 1, 0);
        TensorT<T> fs = nn::conv2d(c.pose_in, p.at("proj.pose.w"), empty_bias, 1, 1, 0);
        TensorT<T> fg = nn::conv2d(c.garment_in, p.at("proj.garment.w"), empty_bias, 1, 1, 0);
        TensorT<T> fh = nn::conv2d(c.head_in, p.at("proj.head.w"), empty_bias, 1, 1, 0);

        TensorT<T> x({cfg_.base_channels, l.height, l.width()});
        write_slot(x, fp, l.person_span, flags.person);
        add_slot(x, fs, l.person_span, flags.pose);
        write_slot(x, fg, l.garment_span, flags.garment);
        write_slot(x, fh, *l.head_span, flags.head);

        // down path
        c.rb.clear();
        c.skips.clear();
        c.up_in.clear();
        for (int lev = 0; lev < cfg_.depth; ++lev) {
            x = resblock_fwd("rb_d" + std::to_string(lev), std::move(x), c, p);
            if (lev == cfg_.attn_level())
                x = nn::attention(x, p.at("attn.qkv.w"), p.at("attn.qkv.b"), p.at("attn.out.w"),
                                  p.at("attn.out.b"), cfg_.attention_heads, &c.attn);
            if (lev + 1 < cfg_.depth) {
                c.skips.push_back(x);
                x = nn::conv2d(x, p.at("down" + std::to_string(lev) + ".w"),
                               p.at("down" + std::to_string(lev) + ".b"), 3, 2, 1);
            }
        }
        x = resblock_fwd("rb_mid", std::move(x), c, p);

        // up path with additive skips
        for (int lev = cfg_.depth - 2; lev >= 0; --lev) {
            c.up_in.push_back(x);
            TensorT<T> up = nn::upsample_nearest2x(x);
            x = nn::conv2d(up, p.at("up" + std::to_string(lev) + ".w"),
                           p.at("up" + std::to_string(lev) + ".b"), 3, 1, 1);
            const TensorT<T>& skip = c.skips[static_cast<std::size_t>(lev)];
            for (std::size_t i = 0; i < x.numel(); ++i) x[i] += skip[i];
            x = resblock_fwd("rb_u" + std::to_string(lev), std::move(x), c, p);
        }
        c.trunk_out = x;

        // per-span output heads into the dense joint shape
        TensorT<T> out(joint.data.shape);
        head_fwd(out, x, l.person_span, "head.person", 0, p);
        head_fwd(out, x, l.garment_span, "head.garment", 0, p);
        head_fwd(out, x, *l.head_span, "head.head", 0, p);
        return out;
    }

    // accumulates parameter gradients for dL/d(output) `dout`
    void backward(const Ctx& c, const TensorT<T>& dout, const Params& p, Params& grads) const {
        const ComponentLayout& l = c.layout;

        TensorT<T> dx(c.trunk_out.shape);
        head_bwd(dout, dx, c.trunk_out, l.person_span, "head.person", p, grads);
        head_bwd(dout, dx, c.trunk_out, l.garment_span, "head.garment", p, grads);
        head_bwd(dout, dx, c.trunk_out, *l.head_span, "head.head", p, grads);

        TensorT<T> dtemb({cfg_.time_embed_dim});
        std::size_t rbi = c.rb.size();
        std::vector<TensorT<T>> dskips(static_cast<std::size_t>(cfg_.depth - 1));

        for (int lev = 0; lev < cfg_.depth - 1; ++lev) {
            dx = resblock_bwd("rb_u" + std::to_string(lev), dx, c, p, grads, --rbi, dtemb);
            dskips[static_cast<std::size_t>(lev)] = dx;  // additive skip fans out
            const TensorT<T>& up_in = c.up_in[static_cast<std::size_t>(cfg_.depth - 2 - lev)];
            TensorT<T> up = nn::upsample_nearest2x(up_in);
            TensorT<T> dup = nn::conv2d_backward(up, p.at("up" + std::to_string(lev) + ".w"), dx,
                                                 3, 1, 1, grads.at("up" + std::to_string(lev) + ".w"),
                                                 grads.at("up" + std::to_string(lev) + ".b"));
            dx = nn::upsample_nearest2x_backward(dup);
        }

        dx = resblock_bwd("rb_mid", dx, c, p, grads, --rbi, dtemb);

        for (int lev = cfg_.depth - 1; lev >= 0; --lev) {
            if (lev + 1 < cfg_.depth) {
                dx = nn::conv2d_backward(c.skips[static_cast<std::size_t>(lev)],
                                         p.at("down" + std::to_string(lev) + ".w"), dx, 3, 2, 1,
                                         grads.at("down" + std::to_string(lev) + ".w"),
                                         grads.at("down" + std::to_string(lev) + ".b"));
                // merge gradient flowing through the additive skip
                const TensorT<T>& dskip = dskips[static_cast<std::size_t>(lev)];
                for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += dskip[i];
            }
            if (lev == cfg_.attn_level())
                dx = nn::attention_backward(c.attn, dx, p.at("attn.qkv.w"), p.at("attn.out.w"),
                                            cfg_.attention_heads, grads.at("attn.qkv.w"),
                                            grads.at("attn.qkv.b"), grads.at("attn.out.w"),
                                            grads.at("attn.out.b"));
            dx = resblock_bwd("rb_d" + std::to_string(lev), dx, c, p, grads, --rbi, dtemb);
        }

        // projections (no gradient to the latent input is needed)
        const TensorT<T> dfp = slot_slice(dx, l.person_span, {0, cfg_.base_channels});
        const TensorT<T> dfg = slot_slice(dx, l.garment_span, {0, cfg_.base_channels});
        const TensorT<T> dfh = slot_slice(dx, *l.head_span, {0, cfg_.base_channels});
        proj_bwd(c.person_in, dfp, "proj.person", c.flags.person, p, grads);
        proj_bwd(c.pose_in, dfp, "proj.pose", c.flags.pose, p, grads);
        proj_bwd(c.garment_in, dfg, "proj.garment", c.flags.garment, p, grads);
        proj_bwd(c.head_in, dfh, "proj.head", c.flags.head, p, grads);

        // time MLP
        TensorT<T> th = nn::silu(c.temb_pre);
        TensorT<T> dth = nn::linear_backward(th, p.at("time.w2"), dtemb, grads.at("time.w2"),
                                             grads.at("time.b2"));
        TensorT<T> dpre = nn::silu_backward(c.temb_pre, dth);
        nn::linear_backward(c.temb_sin, p.at("time.w1"), dpre, grads.at("time.w1"),
                            grads.at("time.b1"));
    }

private:
    DenoiserConfig cfg_;
    int ic_;

    void validate_input(const ComponentLayout& l, int t) const {
        if (t < 0) throw ParamError("negative timestep");
        if (l.image_channels != ic_)
            throw ShapeError("joint latent image channels do not match the denoiser");
        if (!l.head_span) throw ShapeError("denoiser expects a head slot in the layout");
        const int div = 1 << (cfg_.depth - 1);
        if (l.height % div != 0 || l.width() % div != 0)
            throw ShapeError("latent size must be divisible by 2^(depth-1)");
    }

    static TensorT<T> slot_slice(const TensorT<T>& dense, Span span, ChanRange ch) {
        TensorT<T> out({ch.count(), dense.dim(1), span.width()});
        for (int c = 0; c < ch.count(); ++c)
            for (int y = 0; y < dense.dim(1); ++y)
                for (int x = 0; x < span.width(); ++x)
                    out.at(c, y, x) = dense.at(ch.c0 + c, y, span.x0 + x);
        return out;
    }

    static void write_slot(TensorT<T>& dst, const TensorT<T>& feat, Span span, bool on) {
        if (!on) return;  // slot stays zero: the dropped-condition path
        for (int c = 0; c < feat.dim(0); ++c)
            for (int y = 0; y < feat.dim(1); ++y)
                for (int x = 0; x < feat.dim(2); ++x) dst.at(c, y, span.x0 + x) = feat.at(c, y, x);
    }

    static void add_slot(TensorT<T>& dst, const TensorT<T>& feat, Span span, bool on) {
        if (!on) return;
        for (int c = 0; c < feat.dim(0); ++c)
            for (int y = 0; y < feat.dim(1); ++y)
                for (int x = 0; x < feat.dim(2); ++x) dst.at(c, y, span.x0 + x) += feat.at(c, y, x);
    }

    TensorT<T> resblock_fwd(const std::string& name, TensorT<T> x, Ctx& c,
                            const Params& p) const {
        detail::ResBlockCache<T> rc;
        rc.a1 = nn::silu(x);
        rc.h1 = nn::conv2d(rc.a1, p.at(name + ".conv1.w"), p.at(name + ".conv1.b"), 3, 1, 1);
        TensorT<T> tb = nn::linear(c.temb, p.at(name + ".temb.w"), p.at(name + ".temb.b"));
        const std::size_t hw = static_cast<std::size_t>(rc.h1.dim(1)) * rc.h1.dim(2);
        for (int ch = 0; ch < rc.h1.dim(0); ++ch) {
            T* row = rc.h1.data() + static_cast<std::size_t>(ch) * hw;
            const T b = tb[static_cast<std::size_t>(ch)];
            for (std::size_t i = 0; i < hw; ++i) row[i] += b;
        }
        rc.a2 = nn::silu(rc.h1);
        rc.h2 = nn::conv2d(rc.a2, p.at(name + ".conv2.w"), p.at(name + ".conv2.b"), 3, 1, 1);
        const T gain = p.at(name + ".gain")[0];
        TensorT<T> y(x.shape);
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = x[i] + gain * rc.h2[i];
        rc.x = std::move(x);
        c.rb.push_back(std::move(rc));
        return y;
    }

    TensorT<T> resblock_bwd(const std::string& name, const TensorT<T>& dy, const Ctx& c,
                            const Params& p, Params& grads, std::size_t rbi,
                            TensorT<T>& dtemb) const {
        const detail::ResBlockCache<T>& rc = c.rb[rbi];
        const T gain = p.at(name + ".gain")[0];

        T dgain = T(0);
        for (std::size_t i = 0; i < dy.numel(); ++i) dgain += dy[i] * rc.h2[i];
        grads.at(name + ".gain")[0] += dgain;

        TensorT<T> dh2(dy.shape);
        for (std::size_t i = 0; i < dy.numel(); ++i) dh2[i] = dy[i] * gain;
        TensorT<T> da2 = nn::conv2d_backward(rc.a2, p.at(name + ".conv2.w"), dh2, 3, 1, 1,
                                             grads.at(name + ".conv2.w"),
                                             grads.at(name + ".conv2.b"));
        TensorT<T> dh1 = nn::silu_backward(rc.h1, da2);

        // the per-channel time bias sums over space
        TensorT<T> dtb({dh1.dim(0)});
        const std::size_t hw = static_cast<std::size_t>(dh1.dim(1)) * dh1.dim(2);
        for (int ch = 0; ch < dh1.dim(0); ++ch) {
            const T* row = dh1.data() + static_cast<std::size_t>(ch) * hw;
            T acc = T(0);
            for (std::size_t i = 0; i < hw; ++i) acc += row[i];
            dtb[static_cast<std::size_t>(ch)] = acc;
        }
        TensorT<T> dt = nn::linear_backward(c.temb, p.at(name + ".temb.w"), dtb,
                                            grads.at(name + ".temb.w"), grads.at(name + ".temb.b"));
        for (std::size_t i = 0; i < dtemb.numel(); ++i) dtemb[i] += dt[i];

        TensorT<T> da1 = nn::conv2d_backward(rc.a1, p.at(name + ".conv1.w"), dh1, 3, 1, 1,
                                             grads.at(name + ".conv1.w"),
                                             grads.at(name + ".conv1.b"));
        TensorT<T> dx = nn::silu_backward(rc.x, da1);
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += dy[i];  // residual
        return dx;
    }

    void head_fwd(TensorT<T>& out, const TensorT<T>& feat, Span span, const std::string& name,
                  int c0, const Params& p) const {
        TensorT<T> fin = slot_slice(feat, span, {0, cfg_.base_channels});
        TensorT<T> o = nn::conv2d(fin, p.at(name + ".w"), p.at(name + ".b"), 1, 1, 0);
        for (int c = 0; c < o.dim(0); ++c)
            for (int y = 0; y < o.dim(1); ++y)
                for (int x = 0; x < o.dim(2); ++x) out.at(c0 + c, y, span.x0 + x) = o.at(c, y, x);
    }

    void head_bwd(const TensorT<T>& dout, TensorT<T>& dfeat, const TensorT<T>& feat, Span span,
                  const std::string& name, const Params& p, Params& grads) const {
        const int oc = p.at(name + ".w").dim(0);
        TensorT<T> do_slot = slot_slice(dout, span, {0, oc});
        TensorT<T> fin = slot_slice(feat, span, {0, cfg_.base_channels});
        TensorT<T> dfin = nn::conv2d_backward(fin, p.at(name + ".w"), do_slot, 1, 1, 0,
                                              grads.at(name + ".w"), grads.at(name + ".b"));
        for (int c = 0; c < dfin.dim(0); ++c)
            for (int y = 0; y < dfin.dim(1); ++y)
                for (int x = 0; x < dfin.dim(2); ++x)
                    dfeat.at(c, y, span.x0 + x) += dfin.at(c, y, x);
    }

    void proj_bwd(const TensorT<T>& input, const TensorT<T>& dfeat, const std::string& name,
                  bool on, const Params& p, Params& grads) const {
        if (!on) return;  // zeroed features pass no gradient
        TensorT<T> unused_db;
        nn::conv2d_backward(input, p.at(name + ".w"), dfeat, 1, 1, 0, grads.at(name + ".w"),
                            unused_db);
    }
};

using Denoiser = DenoiserT<float>;

// Seeded parameter initialization (standalone name mirroring the operation).
template <typename T>
nn::ParamStore<T> init_params(const DenoiserConfig& cfg, uint64_t seed, int image_channels = 12) {
    return DenoiserT<T>(cfg, image_channels).init_params(seed);
}

// Noise prediction with task conditioning flags.
template <typename T>
TensorT<T> predict_noise(const DenoiserT<T>& model, const JointLatentT<T>& joint, int t,
                         CondFlags flags, const nn::ParamStore<T>& params) {
    return model.forward(joint, t, flags, params);
}

}  // namespace omfa
