#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "omfa/layout.hpp"
#include "omfa/rng.hpp"
#include "omfa/schedule.hpp"
#include "omfa/tensor.hpp"

namespace omfa {

struct SamplerConfig {
    int num_steps = 50;
    double guidance_scale = 2.0;
    uint64_t seed = 0;

    void validate(const NoiseSchedule& schedule) const {
        if (num_steps < 1 || num_steps > schedule.T)
            throw ParamError("num_steps must be in [1, T]");
        if (guidance_scale < 0.0) throw ParamError("guidance_scale must be >= 0");
    }
};

// Which components the denoiser may see. The generation target is always
// visible; conditions are zeroed when their flag is false (dropout and the
// unconditional CFG branch).
struct CondFlags {
    bool person = true, pose = true, garment = true, head = true;

    static CondFlags all(bool on) { return {on, on, on, on}; }

    // only the task's generation target visible
    static CondFlags uncond(Task task) {
        CondFlags f = all(false);
        if (task == Task::try_on)
            f.person = true;
        else
            f.garment = true;
        return f;
    }
};

// z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps
template <typename T>
TensorT<T> q_sample(const TensorT<T>& z0, int t, const TensorT<T>& eps,
                    const NoiseSchedule& schedule) {
    require_same_shape(z0, eps, "q_sample z0/eps");
    if (t < 0 || t >= schedule.T) throw ParamError("q_sample timestep out of range");
    const T a = static_cast<T>(std::sqrt(schedule.alpha_bar(t)));
    const T b = static_cast<T>(std::sqrt(1.0 - schedule.alpha_bar(t)));
    TensorT<T> out(z0.shape);
    for (std::size_t i = 0; i < z0.numel(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

// zhat_t = M*z_t + (1-M)*z_0. Entries with mask 0 are copied from z0
// verbatim, so they stay bit-identical.
template <typename T>
TensorT<T> partial_noise(const TensorT<T>& z0, const TensorT<T>& zt,
                         const ComponentMaskT<T>& mask) {
    require_same_shape(z0, zt, "partial_noise z0/zt");
    require_same_shape(z0, mask.data, "partial_noise z0/mask");
    mask.validate_binary();
    TensorT<T> out(z0.shape);
    for (std::size_t i = 0; i < z0.numel(); ++i)
        out[i] = (mask.data[i] == T(1)) ? zt[i] : z0[i];
    return out;
}

// ||M*(eps - eps_pred)||^2 / #ones(M); 0 when the mask is empty.
// Accumulated in double for a stable scalar.
template <typename T>
double masked_loss(const TensorT<T>& eps_true, const TensorT<T>& eps_pred,
                   const ComponentMaskT<T>& mask) {
    require_same_shape(eps_true, eps_pred, "masked_loss true/pred");
    require_same_shape(eps_true, mask.data, "masked_loss eps/mask");
    mask.validate_binary();
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < eps_true.numel(); ++i) {
        if (mask.data[i] == T(1)) {
            double d = static_cast<double>(eps_true[i]) - static_cast<double>(eps_pred[i]);
            sum += d * d;
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

// d masked_loss / d eps_pred = 2 M (eps_pred - eps_true) / #ones(M).
// Exactly zero outside the mask.
template <typename T>
TensorT<T> masked_loss_grad(const TensorT<T>& eps_true, const TensorT<T>& eps_pred,
                            const ComponentMaskT<T>& mask) {
    require_same_shape(eps_true, eps_pred, "masked_loss_grad true/pred");
    require_same_shape(eps_true, mask.data, "masked_loss_grad eps/mask");
    const std::size_t n = mask.ones();
    TensorT<T> g(eps_pred.shape);
    if (n == 0) return g;
    const T scale = T(2) / static_cast<T>(n);
    for (std::size_t i = 0; i < g.numel(); ++i)
        if (mask.data[i] == T(1)) g[i] = scale * (eps_pred[i] - eps_true[i]);
    return g;
}

// eps_uncond + alpha * (eps_cond - eps_uncond)
template <typename T>
TensorT<T> cfg_combine(const TensorT<T>& eps_uncond, const TensorT<T>& eps_cond, T alpha) {
    require_same_shape(eps_uncond, eps_cond, "cfg_combine uncond/cond");
    if (alpha < T(0)) throw ParamError("guidance scale must be >= 0");
    TensorT<T> out(eps_uncond.shape);
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = eps_uncond[i] + alpha * (eps_cond[i] - eps_uncond[i]);
    return out;
}

// Deterministic DDIM update (eta = 0): reconstruct zhat_0 from the noise
// prediction and re-noise it to t_prev. t_prev == -1 is the clean endpoint.
template <typename T>
TensorT<T> ddim_step(const TensorT<T>& z_t, const TensorT<T>& eps_pred, int t, int t_prev,
                     const NoiseSchedule& schedule) {
    require_same_shape(z_t, eps_pred, "ddim_step z/eps");
    if (t_prev >= t) throw ParamError("ddim_step requires t_prev < t");
    const double ab_t = schedule.alpha_bar(t);
    const double ab_p = schedule.alpha_bar(t_prev);
    const T inv_sa = static_cast<T>(1.0 / std::sqrt(ab_t));
    const T sb_t = static_cast<T>(std::sqrt(1.0 - ab_t));
    const T sa_p = static_cast<T>(std::sqrt(ab_p));
    const T sb_p = static_cast<T>(std::sqrt(1.0 - ab_p));
    TensorT<T> out(z_t.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        T z0 = (z_t[i] - sb_t * eps_pred[i]) * inv_sa;
        out[i] = sa_p * z0 + sb_p * eps_pred[i];
    }
    return out;
}

// Uniform descending timestep sequence ending at the clean endpoint -1.
inline std::vector<int> ddim_timesteps(int T, int num_steps) {
    std::vector<int> ts(static_cast<std::size_t>(num_steps) + 1);
    for (int i = 0; i <= num_steps; ++i)
        ts[static_cast<std::size_t>(i)] =
            static_cast<int>(static_cast<int64_t>(num_steps - i) * T / num_steps) - 1;
    return ts;
}

// Partial DDIM sampling: initialize the masked region with seeded unit
// Gaussian noise, run num_steps DDIM iterations with classifier-free
// guidance, and re-impose the clean unmasked context after every step.
// `eps_model(data, t, flags)` must return a noise prediction of the same
// shape as the joint latent.
template <typename T, typename EpsModel>
JointLatentT<T> partial_sample(EpsModel&& eps_model, const JointLatentT<T>& z0_context,
                               const ComponentMaskT<T>& mask, CondFlags cond_flags,
                               const SamplerConfig& config, const NoiseSchedule& schedule) {
    require_same_shape(z0_context.data, mask.data, "partial_sample context/mask");
    mask.validate_binary();
    config.validate(schedule);
    if (mask.ones() == 0) return z0_context;

    JointLatentT<T> cur = z0_context;
    Rng rng = Rng(config.seed).child("partial_sample");
    for (std::size_t i = 0; i < cur.data.numel(); ++i)
        if (mask.data.v[i] == T(1)) cur.data[i] = static_cast<T>(rng.normal());

    const CondFlags uncond = CondFlags::uncond(z0_context.task);
    const std::vector<int> ts = ddim_timesteps(schedule.T, config.num_steps);
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const int t = ts[k], t_prev = ts[k + 1];
        TensorT<T> eps_c = eps_model(cur, t, cond_flags);
        require_same_shape(eps_c, cur.data, "denoiser output");
        TensorT<T> eps_u = eps_model(cur, t, uncond);
        require_same_shape(eps_u, cur.data, "denoiser output");
        TensorT<T> eps = cfg_combine(eps_u, eps_c, static_cast<T>(config.guidance_scale));
        cur.data = ddim_step(cur.data, eps, t, t_prev, schedule);
        cur.data = partial_noise(z0_context.data, cur.data, mask);
    }
    return cur;
}

}  // namespace omfa
