#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "omfa/checkpoint.hpp"
#include "omfa/codec.hpp"
#include "omfa/denoiser.hpp"
#include "omfa/diffusion.hpp"
#include "omfa/image.hpp"
#include "omfa/synth.hpp"

namespace omfa {

// training-ready record: images cached as bytes, encoded on demand
struct CachedRecord {
    std::string id;
    std::vector<uint8_t> person, pose, garment, head;
    int canvas = 0, head_size = 0;

    template <typename T>
    TensorT<T> image(const std::vector<uint8_t>& bytes, int h, int w) const {
        return image_from_bytes<T>(bytes, h, w);
    }
};

inline CachedRecord cache_record(const DatasetIndex& index, const SampleRecord& r) {
    CachedRecord c;
    c.id = r.id;
    c.canvas = index.canvas;
    c.head_size = index.head_size;
    c.person = image_to_bytes(read_png(index.resolve(r.person_path)));
    c.pose = image_to_bytes(read_png(index.resolve(r.pose_path)));
    c.garment = image_to_bytes(read_png(index.resolve(r.garment_path)));
    c.head = image_to_bytes(read_png(index.resolve(r.head_path)));
    return c;
}

// head crops are stored at head_size and upscaled to the canvas before
// encoding so every slot shares the latent height
template <typename T>
TensorT<T> encode_head(const TensorT<T>& head_img, int canvas) {
    const int hs = head_img.dim(1);
    if (hs > canvas || canvas % hs != 0)
        throw ShapeError("head size must divide the canvas size");
    return encode(upscale_nearest(head_img, canvas / hs));
}

template <typename T>
struct EncodedRecord {
    TensorT<T> person, pose, garment, head;
};

template <typename T>
EncodedRecord<T> encode_record(const CachedRecord& c) {
    EncodedRecord<T> e;
    e.person = encode(c.image<T>(c.person, c.canvas, c.canvas));
    e.pose = encode(c.image<T>(c.pose, c.canvas, c.canvas));
    e.garment = encode(c.image<T>(c.garment, c.canvas, c.canvas));
    e.head = encode_head(c.image<T>(c.head, c.head_size, c.head_size), c.canvas);
    return e;
}

// per-record details exposed for tests and diagnostics
struct StepTraceEntry {
    std::string id;
    Task task = Task::try_on;
    CondFlags flags;
    int t = 0;
    double loss = 0.0;
};

struct StepResult {
    double loss = 0.0;
    double loss_tryon = 0.0, loss_tryoff = 0.0;
    int n_tryon = 0, n_tryoff = 0;
};

template <typename T>
struct OptState {
    nn::ParamStore<T> m, v;
    int64_t step = 0;
};

// decoupled AdamW update, iterating parameters in name order
template <typename T>
void adamw_update(nn::ParamStore<T>& params, const nn::ParamStore<T>& grads, OptState<T>& opt,
                  const TrainConfig& cfg) {
    opt.step += 1;
    const T b1 = static_cast<T>(cfg.adam_beta1), b2 = static_cast<T>(cfg.adam_beta2);
    const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.adam_eps);
    const T wd = static_cast<T>(cfg.weight_decay);
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg.adam_beta1, static_cast<double>(opt.step)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg.adam_beta2, static_cast<double>(opt.step)));
    for (auto& [name, p] : params.arrays) {
        const TensorT<T>& g = grads.at(name);
        TensorT<T>& m = opt.m.at(name);
        TensorT<T>& v = opt.v.at(name);
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m[i] / bc1;
            const T vhat = v[i] / bc2;
            p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
        }
    }
}

namespace detail {

inline Task draw_task(const TrainConfig& cfg, Rng& rng) {
    switch (cfg.task_mix) {
        case TaskMix::tryon_only: return Task::try_on;
        case TaskMix::tryoff_only: return Task::try_off;
        case TaskMix::unified:
            return rng.uniform() < cfg.unified_tryon_fraction ? Task::try_on : Task::try_off;
    }
    return Task::try_on;
}

// independently drop each condition; the generation target always passes
inline CondFlags draw_cond_flags(Task task, double dropout_p, Rng& rng) {
    CondFlags f = CondFlags::all(true);
    auto keep = [&]() { return rng.uniform() >= dropout_p; };
    if (task == Task::try_on) {
        f.pose = keep();
        f.garment = keep();
        f.head = keep();
    } else {
        f.person = keep();
        f.pose = keep();
        f.head = false;  // the head slot is zeroed for try-off
    }
    return f;
}

}  // namespace detail

// One optimization step over a batch: per record, pick a task, partially
// noise the task's target component, predict the noise under condition
// dropout, and take the masked-loss gradient.
template <typename T>
StepResult train_step(const std::vector<const CachedRecord*>& batch,
                      const DenoiserT<T>& model, nn::ParamStore<T>& params, OptState<T>& opt,
                      const TrainConfig& cfg, const NoiseSchedule& schedule, const Rng& step_rng,
                      std::vector<StepTraceEntry>* trace = nullptr) {
    if (batch.empty()) throw ParamError("train_step requires a nonempty batch");
    auto grads = params.zeros_like();
    StepResult res;

    for (std::size_t slot = 0; slot < batch.size(); ++slot) {
        const CachedRecord& rec = *batch[slot];
        Rng rng = step_rng.child(slot + 1);
        const Task task = detail::draw_task(cfg, rng);
        const CondFlags flags = detail::draw_cond_flags(task, cfg.cond_dropout_p, rng);
        const int t = static_cast<int>(rng.below(static_cast<uint64_t>(schedule.T)));

        EncodedRecord<T> enc = encode_record<T>(rec);
        JointLatentT<T> z0 =
            task == Task::try_on
                ? assemble<T>(enc.person, enc.pose, enc.garment, enc.head, task)
                : assemble<T>(enc.person, enc.pose, enc.garment, std::nullopt, task);
        const auto mask = make_mask<T>(z0.layout, task);

        TensorT<T> eps(z0.data.shape);
        for (auto& x : eps.v) x = static_cast<T>(rng.normal());
        TensorT<T> zt = q_sample(z0.data, t, eps, schedule);
        JointLatentT<T> zhat = z0;
        zhat.data = partial_noise(z0.data, zt, mask);

        typename DenoiserT<T>::Ctx ctx;
        TensorT<T> pred = model.forward(zhat, t, flags, params, &ctx);
        const double loss = masked_loss(eps, pred, mask);
        if (!std::isfinite(loss)) {
            nlohmann::ordered_json dump = {{"record", rec.id},
                                           {"task", task_name(task)},
                                           {"t", t},
                                           {"loss", "non-finite"},
                                           {"opt_step", opt.step}};
            throw ValidationError("non-finite loss; step state: " + dump.dump());
        }
        TensorT<T> dpred = masked_loss_grad(eps, pred, mask);
        const T inv_b = T(1) / static_cast<T>(batch.size());
        for (auto& x : dpred.v) x *= inv_b;
        model.backward(ctx, dpred, params, grads);

        res.loss += loss / static_cast<double>(batch.size());
        if (task == Task::try_on) {
            res.loss_tryon += loss;
            res.n_tryon += 1;
        } else {
            res.loss_tryoff += loss;
            res.n_tryoff += 1;
        }
        if (trace) trace->push_back({rec.id, task, flags, t, loss});
    }
    if (res.n_tryon) res.loss_tryon /= res.n_tryon;
    if (res.n_tryoff) res.loss_tryoff /= res.n_tryoff;

    adamw_update(params, grads, opt, cfg);
    return res;
}

struct TrainCallbacks {
    // invoked after every step with the step index (1-based) and result
    std::function<void(int64_t, const StepResult&)> on_step;
};

// Full training loop: seeded shuffling, JSONL loss log, periodic checkpoints.
inline Checkpoint train(const DatasetIndex& dataset, const TrainConfig& cfg,
                        const DenoiserConfig& model_cfg, const ScheduleSpec& sched_spec,
                        const std::string& out_dir, const TrainCallbacks& callbacks = {}) {
    cfg.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create training output dir " + out_dir);

    auto train_records = dataset.split_records("train");
    if (cfg.total_steps > 0 && train_records.empty())
        throw ValidationError("dataset has no train records");

    std::vector<CachedRecord> cache;
    cache.reserve(train_records.size());
    for (const SampleRecord* r : train_records) cache.push_back(cache_record(dataset, *r));

    DenoiserT<float> model(model_cfg, 12);
    Checkpoint ckpt;
    ckpt.model = model_cfg;
    ckpt.train = cfg;
    ckpt.schedule = sched_spec;
    ckpt.params = model.init_params(cfg.seed);
    ckpt.adam_m = ckpt.params.zeros_like();
    ckpt.adam_v = ckpt.params.zeros_like();
    const NoiseSchedule schedule = sched_spec.build();

    OptState<float> opt{ckpt.adam_m, ckpt.adam_v, 0};
    const Rng root(cfg.seed);

    std::ofstream log(fs::path(out_dir) / "loss_log.jsonl");
    if (!log) throw IoError("cannot open loss log under " + out_dir);

    std::vector<std::size_t> order(cache.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = 0;
    int64_t epoch = 0;
    auto reshuffle = [&]() {
        Rng sh = root.child("shuffle", static_cast<uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[sh.below(i)]);
        cursor = 0;
        ++epoch;
    };
    if (!order.empty()) reshuffle();

    for (int64_t step = 1; step <= cfg.total_steps; ++step) {
        std::vector<const CachedRecord*> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) reshuffle();
            batch.push_back(&cache[order[cursor++]]);
        }
        const Rng step_rng = root.child("step", static_cast<uint64_t>(step));
        StepResult res = train_step(batch, model, ckpt.params, opt, cfg, schedule, step_rng);

        nlohmann::ordered_json line = {{"step", step}, {"loss", res.loss}};
        if (res.n_tryon) line["loss_tryon"] = res.loss_tryon;
        if (res.n_tryoff) line["loss_tryoff"] = res.loss_tryoff;
        log << line.dump() << "\n";

        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
            step != cfg.total_steps) {
            ckpt.step = step;
            ckpt.adam_m = opt.m;
            ckpt.adam_v = opt.v;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "ckpt_%06lld", static_cast<long long>(step));
            save_checkpoint(ckpt, (fs::path(out_dir) / buf).string());
        }
        if (callbacks.on_step) callbacks.on_step(step, res);
    }
    log.close();
    if (!log) throw IoError("failed writing loss log under " + out_dir);

    ckpt.step = cfg.total_steps;
    ckpt.adam_m = std::move(opt.m);
    ckpt.adam_v = std::move(opt.v);
    save_checkpoint(ckpt, (fs::path(out_dir) / "checkpoint").string());
    return ckpt;
}

}  // namespace omfa
