#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "omfa/body.hpp"
#include "omfa/checkpoint.hpp"
#include "omfa/codec.hpp"
#include "omfa/denoiser.hpp"
#include "omfa/diffusion.hpp"
#include "omfa/image.hpp"
#include "omfa/synth.hpp"
#include "omfa/trainer.hpp"

namespace omfa {

// a checkpoint bundled with its model and schedule, ready for sampling
struct PipelineModel {
    Checkpoint ckpt;
    DenoiserT<float> model;
    NoiseSchedule schedule;

    explicit PipelineModel(Checkpoint c)
        : ckpt(std::move(c)),
          model(ckpt.model, ckpt.image_channels),
          schedule(ckpt.schedule.build()) {}

    static PipelineModel load(const std::string& dir) { return PipelineModel(load_checkpoint(dir)); }

    auto predictor() const {
        return [this](const JointLatent& joint, int t, CondFlags flags) {
            return model.forward(joint, t, flags, ckpt.params);
        };
    }
};

struct TryOffResult {
    Tensor garment;        // decoded, clamped to [0,1]
    JointLatent sampled;   // final joint latent
    JointLatent context;   // the clean context it was sampled around
};

// Recover the canonical garment from a dressed person: garment slot masked
// (M2), head condition zeroed, person+pose conditioning kept.
inline TryOffResult try_off(const Tensor& person_image, const Tensor& pose_map,
                            const PipelineModel& pm, const SamplerConfig& cfg) {
    require_same_shape(person_image, pose_map, "person/pose images");
    auto person_lat = encode(person_image);
    auto pose_lat = encode(pose_map);
    JointLatent context =
        assemble<float>(person_lat, pose_lat, std::nullopt, std::nullopt, Task::try_off);
    auto mask = make_mask<float>(context.layout, Task::try_off);
    CondFlags flags = CondFlags::all(true);
    flags.head = false;  // try-off conditions are the person and its pose map

    TryOffResult res{Tensor{}, {}, context};
    res.sampled = partial_sample(pm.predictor(), context, mask, flags, cfg, pm.schedule);
    res.garment = decode(split(res.sampled, Component::garment));
    clamp01(res.garment);
    return res;
}

struct TryOnInputs {
    Tensor garment;  // canonical garment image (canvas-sized)
    Tensor head;     // head crop (head_size x head_size)
    BodyShape shape;
    BodyPose pose;
    Camera camera;
};

struct TryOnResult {
    Tensor person;    // decoded, clamped
    Tensor pose_map;  // the rendered structural conditioning
    JointLatent sampled;
    JointLatent context;
};

// Dress a target body: render the pose map from (beta, theta, camera), mask
// the person slot (M1) and sample under classifier-free guidance.
inline TryOnResult try_on(const TryOnInputs& in, const PipelineModel& pm,
                          const SamplerConfig& cfg) {
    const int canvas = in.garment.dim(1);
    if (in.garment.dim(2) != canvas) throw ShapeError("garment image must be square");
    RenderResult pose_render =
        render_pose_map(in.shape, in.pose, in.camera, canvas, canvas);

    auto garment_lat = encode(in.garment);
    auto pose_lat = encode(pose_render.image);
    auto head_lat = encode_head(in.head, canvas);
    TensorT<float> person_placeholder(garment_lat.shape);  // masked region, content unused

    JointLatent context =
        assemble<float>(person_placeholder, pose_lat, garment_lat, head_lat, Task::try_on);
    auto mask = make_mask<float>(context.layout, Task::try_on);

    TryOnResult res{Tensor{}, pose_render.image, {}, context};
    res.sampled = partial_sample(pm.predictor(), context, mask, CondFlags::all(true), cfg,
                                 pm.schedule);
    res.person = decode(split(res.sampled, Component::person));
    clamp01(res.person);
    return res;
}

struct PersonToPersonResult {
    Tensor person;
    Tensor garment;  // the try-off intermediate, kept for inspection
};

// try-off the source person, then try-on the recovered garment onto the
// target identity and pose; no state is shared between the two stages
inline PersonToPersonResult person_to_person(const Tensor& source_person,
                                             const Tensor& source_pose_map,
                                             const Tensor& target_head,
                                             const BodyShape& target_shape,
                                             const BodyPose& target_pose, const Camera& camera,
                                             const PipelineModel& pm_off,
                                             const PipelineModel& pm_on,
                                             const SamplerConfig& cfg_off,
                                             const SamplerConfig& cfg_on) {
    TryOffResult off = try_off(source_person, source_pose_map, pm_off, cfg_off);
    TryOnResult on = try_on({off.garment, target_head, target_shape, target_pose, camera},
                            pm_on, cfg_on);
    return {std::move(on.person), std::move(off.garment)};
}

// multi-pose try-on: keep the shape, substitute the pose, re-render the
// conditioning map and run try-on against it
inline TryOnResult multi_pose_try_on(const BodyShape& shape, const BodyPose& theta_target,
                                     const Camera& camera, const Tensor& garment_image,
                                     const Tensor& head_image, const PipelineModel& pm,
                                     const SamplerConfig& cfg) {
    auto [same_shape, new_pose] = edit_pose(shape, theta_target);
    return try_on({garment_image, head_image, same_shape, new_pose, camera}, pm, cfg);
}

// ---- batch runners over a dataset (PNG in, PNG + JSON sidecar out) ----

namespace detail {

inline void write_sidecar(const std::string& path, const std::string& op,
                          const std::string& record_id, const SamplerConfig& cfg,
                          const Checkpoint& ckpt,
                          const std::optional<std::array<double, 10>>& theta = std::nullopt) {
    nlohmann::ordered_json j;
    j["op"] = op;
    j["record"] = record_id;
    j["seed"] = cfg.seed;
    j["num_steps"] = cfg.num_steps;
    j["guidance_scale"] = cfg.guidance_scale;
    j["checkpoint_step"] = ckpt.step;
    j["model"] = model_config_json(ckpt.model);
    if (theta) j["theta"] = *theta;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write sidecar " + path);
    out << j.dump(1) << "\n";
}

inline uint64_t record_seed(const SamplerConfig& cfg, const std::string& id) {
    return Rng(cfg.seed).child(id).next_u64();
}

}  // namespace detail

enum class BatchOp { tryoff, tryon_paired, tryon_unpaired, p2p, multipose };

inline const char* batch_op_name(BatchOp op) {
    switch (op) {
        case BatchOp::tryoff: return "tryoff";
        case BatchOp::tryon_paired: return "tryon_paired";
        case BatchOp::tryon_unpaired: return "tryon_unpaired";
        case BatchOp::p2p: return "p2p";
        case BatchOp::multipose: return "multipose";
    }
    return "?";
}

// Runs one inference op over the dataset's test split (or a subset of ids)
// and writes {id}.png plus {id}.json per record into out_dir.
inline int run_batch(BatchOp op, const DatasetIndex& index, const PipelineModel& pm_off,
                     const PipelineModel& pm_on, const SamplerConfig& base_cfg,
                     const std::string& out_dir, const std::vector<std::string>& only_ids = {},
                     int limit = 0) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output dir " + out_dir);

    auto tests = index.split_records("test");
    int done = 0;
    for (const auto* r : tests) {
        if (!only_ids.empty() &&
            std::find(only_ids.begin(), only_ids.end(), r->id) == only_ids.end())
            continue;
        if (limit > 0 && done >= limit) break;

        SamplerConfig cfg = base_cfg;
        cfg.seed = detail::record_seed(base_cfg, r->id);
        Tensor out_img;
        std::optional<std::array<double, 10>> theta_note;
        switch (op) {
            case BatchOp::tryoff: {
                auto person = read_png(index.resolve(r->person_path));
                auto pose = read_png(index.resolve(r->pose_path));
                out_img = try_off(person, pose, pm_off, cfg).garment;
                break;
            }
            case BatchOp::tryon_paired:
            case BatchOp::tryon_unpaired: {
                const std::string garment_path =
                    op == BatchOp::tryon_paired
                        ? r->garment_path
                        : index.by_id(r->unpaired_ref).garment_path;
                TryOnInputs in{read_png(index.resolve(garment_path)),
                               read_png(index.resolve(r->head_path)), r->shape(), r->pose(),
                               r->camera};
                out_img = try_on(in, pm_on, cfg).person;
                break;
            }
            case BatchOp::p2p: {
                // source: the unpaired reference person; target: this record
                const SampleRecord& src = index.by_id(r->unpaired_ref);
                SamplerConfig cfg_on = cfg;
                cfg_on.seed = Rng(cfg.seed).child("on").next_u64();
                auto res = person_to_person(
                    read_png(index.resolve(src.person_path)),
                    read_png(index.resolve(src.pose_path)),
                    read_png(index.resolve(r->head_path)), r->shape(), r->pose(), r->camera,
                    pm_off, pm_on, cfg, cfg_on);
                out_img = res.person;
                write_png((fs::path(out_dir) / (r->id + "_garment.png")).string(), res.garment);
                break;
            }
            case BatchOp::multipose: {
                if (!r->has_multipose) continue;
                auto res = multi_pose_try_on(r->shape(), r->pose2(), r->camera,
                                             read_png(index.resolve(r->garment_path)),
                                             read_png(index.resolve(r->head_path)), pm_on, cfg);
                out_img = res.person;
                theta_note = r->theta2;
                break;
            }
        }
        write_png((fs::path(out_dir) / (r->id + ".png")).string(), out_img);
        detail::write_sidecar((fs::path(out_dir) / (r->id + ".json")).string(),
                              batch_op_name(op), r->id, cfg,
                              op == BatchOp::tryoff ? pm_off.ckpt : pm_on.ckpt, theta_note);
        ++done;
    }
    return done;
}

}  // namespace omfa
