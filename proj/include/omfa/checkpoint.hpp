#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "omfa/denoiser.hpp"
#include "omfa/errors.hpp"
#include "omfa/nn.hpp"
#include "omfa/schedule.hpp"

namespace omfa {

enum class TaskMix { tryon_only, tryoff_only, unified };

inline const char* task_mix_name(TaskMix m) {
    switch (m) {
        case TaskMix::tryon_only: return "tryon_only";
        case TaskMix::tryoff_only: return "tryoff_only";
        case TaskMix::unified: return "unified";
    }
    return "?";
}

inline TaskMix task_mix_from_name(const std::string& s) {
    for (TaskMix m : {TaskMix::tryon_only, TaskMix::tryoff_only, TaskMix::unified})
        if (s == task_mix_name(m)) return m;
    throw ValidationError("unknown task mix '" + s + "'");
}

struct TrainConfig {
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    int batch_size = 8;
    int total_steps = 1000;
    double cond_dropout_p = 0.05;
    TaskMix task_mix = TaskMix::unified;
    double unified_tryon_fraction = 0.5;
    uint64_t seed = 0;
    int checkpoint_every = 0;  // 0 disables periodic checkpoints

    void validate() const {
        if (!(learning_rate > 0)) throw ValidationError("learning_rate must be > 0");
        if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
        if (total_steps < 0) throw ValidationError("total_steps must be >= 0");
        for (double p : {cond_dropout_p, unified_tryon_fraction})
            if (p < 0.0 || p > 1.0) throw ValidationError("probabilities must be in [0,1]");
        if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
            throw ValidationError("adam betas must be in [0,1)");
    }
};

struct ScheduleSpec {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    NoiseSchedule build() const { return make_schedule(T, beta_start, beta_end); }
};

struct Checkpoint {
    int version = 1;
    int64_t step = 0;
    DenoiserConfig model;
    int image_channels = 12;
    TrainConfig train;
    ScheduleSpec schedule;
    nn::ParamStore<float> params;
    nn::ParamStore<float> adam_m, adam_v;
};

namespace detail {

inline nlohmann::ordered_json train_config_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},       {"adam_eps", c.adam_eps},
            {"weight_decay", c.weight_decay},   {"batch_size", c.batch_size},
            {"total_steps", c.total_steps},     {"cond_dropout_p", c.cond_dropout_p},
            {"task_mix", task_mix_name(c.task_mix)},
            {"unified_tryon_fraction", c.unified_tryon_fraction},
            {"seed", c.seed},                   {"checkpoint_every", c.checkpoint_every}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.total_steps = j.at("total_steps").get<int>();
    c.cond_dropout_p = j.at("cond_dropout_p").get<double>();
    c.task_mix = task_mix_from_name(j.at("task_mix").get<std::string>());
    c.unified_tryon_fraction = j.at("unified_tryon_fraction").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<int>();
    return c;
}

inline nlohmann::ordered_json model_config_json(const DenoiserConfig& c) {
    return {{"base_channels", c.base_channels},
            {"depth", c.depth},
            {"attention_level", c.attention_level},
            {"time_embed_dim", c.time_embed_dim},
            {"attention_heads", c.attention_heads}};
}

inline DenoiserConfig model_config_from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    c.base_channels = j.at("base_channels").get<int>();
    c.depth = j.at("depth").get<int>();
    c.attention_level = j.at("attention_level").get<int>();
    c.time_embed_dim = j.at("time_embed_dim").get<int>();
    c.attention_heads = j.at("attention_heads").get<int>();
    return c;
}

inline void write_array_file(const std::filesystem::path& path, const TensorT<float>& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    // raw little-endian float32 (this build targets little-endian hosts)
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw IoError("failed writing " + path.string());
}

inline void read_array_file(const std::filesystem::path& path, TensorT<float>& t,
                            const std::string& name) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("missing array file for '" + name + "': " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != t.numel() * sizeof(float))
        throw ShapeError("array '" + name + "' has " + std::to_string(bytes / sizeof(float)) +
                         " values on disk, manifest expects " + std::to_string(t.numel()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("failed reading " + path.string());
}

}  // namespace detail

// Directory layout: manifest.json plus arrays/<kind>/<name>.f32 with raw
// little-endian float32 data. The manifest pins names, shapes and dtypes;
// loading validates each file length against it.
inline void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "arrays" / "param", ec);
    fs::create_directories(fs::path(dir) / "arrays" / "adam_m", ec);
    fs::create_directories(fs::path(dir) / "arrays" / "adam_v", ec);
    if (ec) throw IoError("cannot create checkpoint directory " + dir);

    nlohmann::ordered_json manifest;
    manifest["version"] = ckpt.version;
    manifest["step"] = ckpt.step;
    manifest["image_channels"] = ckpt.image_channels;
    manifest["model"] = detail::model_config_json(ckpt.model);
    manifest["train"] = detail::train_config_json(ckpt.train);
    manifest["schedule"] = {{"T", ckpt.schedule.T},
                            {"beta_start", ckpt.schedule.beta_start},
                            {"beta_end", ckpt.schedule.beta_end}};
    auto arrays = nlohmann::ordered_json::array();
    auto dump_store = [&](const char* kind, const nn::ParamStore<float>& store) {
        for (const auto& [name, t] : store.arrays) {
            arrays.push_back({{"kind", kind}, {"name", name}, {"shape", t.shape}, {"dtype", "f32"}});
            detail::write_array_file(fs::path(dir) / "arrays" / kind / (name + ".f32"), t);
        }
    };
    dump_store("param", ckpt.params);
    dump_store("adam_m", ckpt.adam_m);
    dump_store("adam_v", ckpt.adam_v);
    manifest["arrays"] = std::move(arrays);

    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw IoError("cannot write manifest under " + dir);
    out << manifest.dump(1) << "\n";
    out.close();
    if (!out) throw IoError("failed writing manifest under " + dir);
}

inline Checkpoint load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw IoError("cannot open checkpoint manifest in " + dir);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed checkpoint manifest: " + std::string(e.what()));
    }

    Checkpoint ckpt;
    ckpt.version = j.at("version").get<int>();
    if (ckpt.version != 1)
        throw ValidationError("unsupported checkpoint version " + std::to_string(ckpt.version));
    ckpt.step = j.at("step").get<int64_t>();
    ckpt.image_channels = j.at("image_channels").get<int>();
    ckpt.model = detail::model_config_from_json(j.at("model"));
    ckpt.train = detail::train_config_from_json(j.at("train"));
    ckpt.schedule.T = j.at("schedule").at("T").get<int>();
    ckpt.schedule.beta_start = j.at("schedule").at("beta_start").get<double>();
    ckpt.schedule.beta_end = j.at("schedule").at("beta_end").get<double>();

    for (const auto& a : j.at("arrays")) {
        const std::string kind = a.at("kind").get<std::string>();
        const std::string name = a.at("name").get<std::string>();
        if (a.at("dtype").get<std::string>() != "f32")
            throw ValidationError("array '" + name + "' has unsupported dtype");
        TensorT<float> t(a.at("shape").get<std::vector<int>>());
        detail::read_array_file(fs::path(dir) / "arrays" / kind / (name + ".f32"), t, name);
        nn::ParamStore<float>* store = kind == "param" ? &ckpt.params
                                     : kind == "adam_m" ? &ckpt.adam_m
                                     : kind == "adam_v" ? &ckpt.adam_v
                                                        : nullptr;
        if (!store) throw ValidationError("unknown array kind '" + kind + "'");
        store->add(name, std::move(t));
    }
    // every model parameter must be present
    DenoiserT<float> model(ckpt.model, ckpt.image_channels);
    auto expect = model.init_params(0);
    for (const auto& [name, t] : expect.arrays) {
        const auto& got = ckpt.params.at(name);  // throws LookupError when missing
        if (!(got.shape == t.shape))
            throw ShapeError("array '" + name + "' shape mismatch against model config");
    }
    return ckpt;
}

}  // namespace omfa
