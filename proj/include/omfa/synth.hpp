#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "omfa/body.hpp"
#include "omfa/errors.hpp"
#include "omfa/image.hpp"
#include "omfa/rng.hpp"

namespace omfa {

enum class Pattern { solid, stripes, checker, dots, glyphs };
enum class Sleeve { long_sleeve, short_sleeve };

inline const char* pattern_name(Pattern p) {
    switch (p) {
        case Pattern::solid: return "solid";
        case Pattern::stripes: return "stripes";
        case Pattern::checker: return "checker";
        case Pattern::dots: return "dots";
        case Pattern::glyphs: return "glyphs";
    }
    return "?";
}

inline Pattern pattern_from_name(const std::string& s) {
    for (Pattern p : {Pattern::solid, Pattern::stripes, Pattern::checker, Pattern::dots,
                      Pattern::glyphs})
        if (s == pattern_name(p)) return p;
    throw ValidationError("unknown pattern '" + s + "'");
}

struct GarmentSpec {
    Rgb base_color, pattern_color;  // byte-grid values
    Pattern pattern = Pattern::solid;
    double pattern_scale = 8.0;  // pixels at the canonical camera
    Sleeve sleeve = Sleeve::long_sleeve;

    // smallest per-channel separation between base and pattern colors
    double color_distance() const {
        return std::min({std::abs(base_color.r - pattern_color.r),
                         std::abs(base_color.g - pattern_color.g),
                         std::abs(base_color.b - pattern_color.b)});
    }
    void validate() const {
        if (color_distance() < 0.2 - 1e-9)
            throw ValidationError("garment base/pattern colors too close");
        if (pattern_scale < 4.0 || pattern_scale > 16.0)
            throw ValidationError("pattern_scale outside [4,16]");
    }
};

inline Rgb random_color(Rng& rng) {
    return rgb_bytes(static_cast<int>(rng.below(256)), static_cast<int>(rng.below(256)),
                     static_cast<int>(rng.below(256)));
}

// uniform draws over the documented ranges; colors rejected until every
// channel differs by at least 0.2
inline GarmentSpec sample_garment(Rng& rng) {
    GarmentSpec g;
    g.pattern = static_cast<Pattern>(rng.below(5));
    g.sleeve = rng.below(2) ? Sleeve::short_sleeve : Sleeve::long_sleeve;
    g.pattern_scale = rng.uniform(4.0, 16.0);
    g.base_color = random_color(rng);
    do {
        g.pattern_color = random_color(rng);
    } while (g.color_distance() < 0.2);
    return g;
}

inline bool garment_covers(BodyPart part, Sleeve sleeve) {
    switch (part) {
        case BodyPart::torso:
        case BodyPart::upper_arm_l:
        case BodyPart::upper_arm_r: return true;
        case BodyPart::lower_arm_l:
        case BodyPart::lower_arm_r: return sleeve == Sleeve::long_sleeve;
        default: return false;
    }
}

namespace detail {

inline int64_t floor_div(double v, double s) {
    return static_cast<int64_t>(std::floor(v / s));
}

inline uint64_t cell_hash(int64_t a, int64_t b) {
    uint64_t s = static_cast<uint64_t>(a) * 0x9e3779b97f4a7c15ULL ^
                 static_cast<uint64_t>(b) * 0xd1b54a32d192ed03ULL;
    return splitmix64(s);
}

// 5x5 glyph bitmaps: plus, cross, box, dot
inline const std::array<std::array<uint8_t, 25>, 4>& glyphs() {
    static const std::array<std::array<uint8_t, 25>, 4> g = {{
        {0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 1, 1, 1, 1, 1, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0},
        {1, 0, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 1},
        {1, 1, 1, 1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 1, 1, 1, 1, 1},
        {0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0},
    }};
    return g;
}

}  // namespace detail

// Pattern color in the part's local frame. Coordinates are anchored at the
// proximal joint and measured in pixels at the canonical camera scale, so a
// pose change moves the pattern rigidly with the part.
inline Rgb garment_color_at(const GarmentSpec& g, const Capsule& cap, Vec2 body_point,
                            double canonical_scale) {
    if (g.pattern == Pattern::solid) return g.base_color;
    Vec2 axis = cap.p1 - cap.p0;
    const double len = axis.norm();
    axis = len > 0.0 ? axis * (1.0 / len) : Vec2{1.0, 0.0};
    const Vec2 perp{-axis.y, axis.x};
    const Vec2 rel = body_point - cap.p0;
    const double u = rel.dot(axis) * canonical_scale;
    const double v = rel.dot(perp) * canonical_scale;
    const double s = g.pattern_scale;

    switch (g.pattern) {
        case Pattern::solid: return g.base_color;
        case Pattern::stripes:
            return (detail::floor_div(u, s) % 2 == 0) ? g.base_color : g.pattern_color;
        case Pattern::checker: {
            const int64_t k = detail::floor_div(u, s) + detail::floor_div(v, s);
            return (((k % 2) + 2) % 2 == 0) ? g.base_color : g.pattern_color;
        }
        case Pattern::dots: {
            const double cu = u - (detail::floor_div(u, s) + 0.5) * s;
            const double cv = v - (detail::floor_div(v, s) + 0.5) * s;
            return (cu * cu + cv * cv <= 0.09 * s * s) ? g.pattern_color : g.base_color;
        }
        case Pattern::glyphs: {
            const int64_t iu = detail::floor_div(u, s), iv = detail::floor_div(v, s);
            const auto& glyph =
                detail::glyphs()[detail::cell_hash(iu, iv) % detail::glyphs().size()];
            int gx = static_cast<int>((u - iu * s) / s * 5.0);
            int gy = static_cast<int>((v - iv * s) / s * 5.0);
            gx = std::clamp(gx, 0, 4);
            gy = std::clamp(gy, 0, 4);
            return glyph[static_cast<std::size_t>(gy * 5 + gx)] ? g.pattern_color : g.base_color;
        }
    }
    return g.base_color;
}

struct Identity {
    Rgb skin, hair;
};

// skin/hair colors derived deterministically from the identity stream
inline Identity sample_identity(Rng& rng) {
    static const std::array<Rgb, 6> skins = {
        rgb_bytes(247, 219, 195), rgb_bytes(240, 200, 170), rgb_bytes(224, 177, 132),
        rgb_bytes(198, 134, 94),  rgb_bytes(141, 85, 56),   rgb_bytes(97, 59, 42)};
    static const std::array<Rgb, 6> hairs = {
        rgb_bytes(35, 25, 20),   rgb_bytes(80, 50, 30),   rgb_bytes(140, 90, 40),
        rgb_bytes(210, 180, 90), rgb_bytes(160, 60, 40),  rgb_bytes(120, 120, 120)};
    return {skins[rng.below(skins.size())], hairs[rng.below(hairs.size())]};
}

inline Camera canonical_camera(int canvas) {
    const double s = static_cast<double>(canvas);
    return Camera{.scale = s * (11.0 / 64.0), .tx = s / 2.0, .ty = s * (36.0 / 64.0)};
}

// canonical flat garment: garment-covered parts at the zero pose over white
inline RenderResult render_garment_image(const BodyShape& shape, const GarmentSpec& spec,
                                         int canvas) {
    Skeleton2D sk = forward_kinematics(shape, BodyPose{});
    std::vector<Capsule> caps;
    for (const Capsule& c : sk.parts)
        if (garment_covers(c.part, spec.sleeve)) caps.push_back(c);
    const Camera cam = canonical_camera(canvas);
    return render_capsules(caps, cam, canvas, canvas, rgb_bytes(255, 255, 255),
                           [&](const Capsule& cap, Vec2 p) {
                               return garment_color_at(spec, cap, p, cam.scale);
                           });
}

// dressed person over a black background
inline RenderResult render_person_image(const BodyShape& shape, const BodyPose& pose,
                                        const Camera& camera, const GarmentSpec& spec,
                                        const Identity& who, int canvas,
                                        double canonical_scale) {
    Skeleton2D sk = forward_kinematics(shape, pose);
    const Vec2 up = unit(1.5707963267948966 + pose.theta[0] + pose.theta[1]);
    const Vec2 head_center = sk.head_center;
    const double hair_line = 0.25 * shape.head_r();
    return render_capsules(
        sk.parts, camera, canvas, canvas, rgb_bytes(0, 0, 0), [&](const Capsule& cap, Vec2 p) {
            if (garment_covers(cap.part, spec.sleeve))
                return garment_color_at(spec, cap, p, canonical_scale);
            if (cap.part == BodyPart::head && (p - head_center).dot(up) > hair_line)
                return who.hair;
            return who.skin;
        });
}

// fixed-size crop centered on the projected head, clamped to the canvas
inline Tensor crop_head(const Tensor& person, const BodyShape& shape, const BodyPose& pose,
                        const Camera& camera, int head_size) {
    Skeleton2D sk = forward_kinematics(shape, pose);
    const Vec2 c = camera.to_image(sk.head_center);
    const int canvas_h = person.dim(1), canvas_w = person.dim(2);
    int x0 = static_cast<int>(std::lround(c.x)) - head_size / 2;
    int y0 = static_cast<int>(std::lround(c.y)) - head_size / 2;
    x0 = std::clamp(x0, 0, canvas_w - head_size);
    y0 = std::clamp(y0, 0, canvas_h - head_size);
    return crop(person, y0, x0, head_size, head_size);
}

struct RenderedSample {
    Tensor person, head;
};

// the shared-renderer pair (person image, head crop)
inline RenderedSample render_sample(const BodyShape& shape, const BodyPose& pose,
                                    const Camera& camera, const GarmentSpec& spec,
                                    const Identity& who, int canvas, int head_size) {
    const double canonical_scale = canonical_camera(canvas).scale;
    RenderResult person =
        render_person_image(shape, pose, camera, spec, who, canvas, canonical_scale);
    Tensor head = crop_head(person.image, shape, pose, camera, head_size);
    return {std::move(person.image), std::move(head)};
}

// ---- dataset records and index ----

struct SampleRecord {
    std::string id;
    std::string split;  // "train" | "test"
    std::string person_path, garment_path, head_path, pose_path;
    std::array<double, 10> beta{}, theta{};
    Camera camera;
    GarmentSpec spec;
    Identity who;
    // test-only ground truth for unpaired try-on and multi-pose
    std::string unpaired_ref;
    std::array<double, 10> theta2{};
    std::string unpaired_gt_path, person2_gt_path, pose2_path;
    bool has_multipose = false;

    BodyShape shape() const {
        BodyShape s;
        s.beta = beta;
        return s;
    }
    BodyPose pose() const {
        BodyPose p;
        p.theta = theta;
        return p;
    }
    BodyPose pose2() const {
        BodyPose p;
        p.theta = theta2;
        return p;
    }
};

struct DatasetIndex {
    int version = 1;
    uint64_t seed = 0;
    int canvas = 64, head_size = 32;
    std::vector<SampleRecord> records;
    std::string root;  // directory containing index.json

    std::string resolve(const std::string& rel) const {
        return (std::filesystem::path(root) / rel).string();
    }
    const SampleRecord& by_id(const std::string& id) const {
        for (const auto& r : records)
            if (r.id == id) return r;
        throw LookupError("no record with id '" + id + "'");
    }
    std::vector<const SampleRecord*> split_records(const std::string& split) const {
        std::vector<const SampleRecord*> out;
        for (const auto& r : records)
            if (r.split == split) out.push_back(&r);
        return out;
    }
};

namespace detail {

inline nlohmann::ordered_json color_json(Rgb c) {
    return nlohmann::ordered_json::array(
        {float_to_byte(c.r), float_to_byte(c.g), float_to_byte(c.b)});
}

inline Rgb color_from_json(const nlohmann::json& j) {
    return rgb_bytes(j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>());
}

inline nlohmann::ordered_json record_json(const SampleRecord& r) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["split"] = r.split;
    j["person"] = r.person_path;
    j["garment"] = r.garment_path;
    j["head"] = r.head_path;
    j["pose"] = r.pose_path;
    j["beta"] = r.beta;
    j["theta"] = r.theta;
    j["camera"] = {{"scale", r.camera.scale}, {"tx", r.camera.tx}, {"ty", r.camera.ty}};
    j["garment_spec"] = {{"base_color", color_json(r.spec.base_color)},
                         {"pattern", pattern_name(r.spec.pattern)},
                         {"pattern_color", color_json(r.spec.pattern_color)},
                         {"pattern_scale", r.spec.pattern_scale},
                         {"sleeve", r.spec.sleeve == Sleeve::long_sleeve ? "long" : "short"}};
    j["skin"] = color_json(r.who.skin);
    j["hair"] = color_json(r.who.hair);
    if (r.has_multipose) {
        j["unpaired_ref"] = r.unpaired_ref;
        j["unpaired_gt"] = r.unpaired_gt_path;
        j["theta2"] = r.theta2;
        j["person2_gt"] = r.person2_gt_path;
        j["pose2"] = r.pose2_path;
    }
    return j;
}

inline SampleRecord record_from_json(const nlohmann::json& j) {
    SampleRecord r;
    r.id = j.at("id").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.person_path = j.at("person").get<std::string>();
    r.garment_path = j.at("garment").get<std::string>();
    r.head_path = j.at("head").get<std::string>();
    r.pose_path = j.at("pose").get<std::string>();
    for (int i = 0; i < 10; ++i) {
        r.beta[static_cast<std::size_t>(i)] = j.at("beta").at(i).get<double>();
        r.theta[static_cast<std::size_t>(i)] = j.at("theta").at(i).get<double>();
    }
    r.camera.scale = j.at("camera").at("scale").get<double>();
    r.camera.tx = j.at("camera").at("tx").get<double>();
    r.camera.ty = j.at("camera").at("ty").get<double>();
    const auto& g = j.at("garment_spec");
    r.spec.base_color = color_from_json(g.at("base_color"));
    r.spec.pattern = pattern_from_name(g.at("pattern").get<std::string>());
    r.spec.pattern_color = color_from_json(g.at("pattern_color"));
    r.spec.pattern_scale = g.at("pattern_scale").get<double>();
    r.spec.sleeve =
        g.at("sleeve").get<std::string>() == "long" ? Sleeve::long_sleeve : Sleeve::short_sleeve;
    r.who.skin = color_from_json(j.at("skin"));
    r.who.hair = color_from_json(j.at("hair"));
    if (j.contains("unpaired_ref")) {
        r.has_multipose = true;
        r.unpaired_ref = j.at("unpaired_ref").get<std::string>();
        r.unpaired_gt_path = j.at("unpaired_gt").get<std::string>();
        for (int i = 0; i < 10; ++i) r.theta2[static_cast<std::size_t>(i)] = j.at("theta2").at(i).get<double>();
        r.person2_gt_path = j.at("person2_gt").get<std::string>();
        r.pose2_path = j.at("pose2").get<std::string>();
    }
    return r;
}

inline BodyShape sample_shape(Rng& rng) {
    BodyShape s;
    for (std::size_t i = 0; i < 10; ++i)
        s.beta[i] = rng.uniform(BodyShape::kMin[i], BodyShape::kMax[i]);
    return s;
}

inline BodyPose sample_pose(Rng& rng, double fraction = 0.85) {
    BodyPose p;
    for (std::size_t i = 0; i < 10; ++i)
        p.theta[i] = rng.uniform(fraction * BodyPose::kMin[i], fraction * BodyPose::kMax[i]);
    return p;
}

inline double pose_distance(const BodyPose& a, const BodyPose& b) {
    double d = 0.0;
    for (std::size_t i = 2; i < 10; ++i) d += std::abs(a.theta[i] - b.theta[i]);
    return d;
}

inline Camera sample_camera(Rng& rng, int canvas) {
    const double k = static_cast<double>(canvas) / 64.0;
    Camera c;
    c.scale = rng.uniform(9.5, 12.0) * k;
    c.tx = (32.0 + rng.uniform(-2.5, 2.5)) * k;
    c.ty = (35.0 + rng.uniform(-2.0, 2.0)) * k;
    return c;
}

}  // namespace detail

// Writes PNG images plus one index.json. Test records additionally carry a
// different person's garment reference (unpaired), a second pose (multi-pose)
// and exact ground-truth renders for both.
inline DatasetIndex generate_dataset(int n_train, int n_test, uint64_t seed,
                                     const std::string& out_dir, int canvas = 64,
                                     int head_size = 32) {
    if (n_train < 0 || n_test < 0) throw ParamError("negative record count");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "images", ec);
    if (ec) throw IoError("cannot create dataset directory " + out_dir + ": " + ec.message());

    DatasetIndex index;
    index.seed = seed;
    index.canvas = canvas;
    index.head_size = head_size;
    index.root = out_dir;

    const Rng root(seed);
    const int total = n_train + n_test;
    for (int i = 0; i < total; ++i) {
        SampleRecord r;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "s%05d", i);
        r.id = buf;
        r.split = i < n_train ? "train" : "test";
        Rng rng = root.child(r.id);

        r.who = sample_identity(rng);
        BodyShape shape = detail::sample_shape(rng);
        BodyPose pose = detail::sample_pose(rng);
        r.beta = shape.beta;
        r.theta = pose.theta;
        r.camera = detail::sample_camera(rng, canvas);
        r.spec = sample_garment(rng);

        if (r.split == "test") {
            r.has_multipose = true;
            BodyPose p2 = detail::sample_pose(rng);
            while (detail::pose_distance(pose, p2) < 2.0) p2 = detail::sample_pose(rng);
            r.theta2 = p2.theta;
        }
        index.records.push_back(std::move(r));
    }

    // unpaired references: cyclic shift of a seeded shuffle of the test ids
    {
        std::vector<std::size_t> test_idx;
        for (std::size_t i = 0; i < index.records.size(); ++i)
            if (index.records[i].split == "test") test_idx.push_back(i);
        Rng shuf = root.child("unpaired");
        for (std::size_t i = test_idx.size(); i > 1; --i)
            std::swap(test_idx[i - 1], test_idx[shuf.below(i)]);
        for (std::size_t k = 0; k < test_idx.size(); ++k)
            index.records[test_idx[k]].unpaired_ref =
                index.records[test_idx[(k + 1) % test_idx.size()]].id;
    }

    // render and write
    for (SampleRecord& r : index.records) {
        const BodyShape shape = r.shape();
        const BodyPose pose = r.pose();
        auto sample = render_sample(shape, pose, r.camera, r.spec, r.who, canvas, head_size);
        auto garment = render_garment_image(shape, r.spec, canvas);
        auto pose_map = render_pose_map(shape, pose, r.camera, canvas, canvas);

        auto img_path = [&](const char* kind) { return "images/" + r.id + "_" + kind + ".png"; };
        r.person_path = img_path("person");
        r.garment_path = img_path("garment");
        r.head_path = img_path("head");
        r.pose_path = img_path("pose");
        write_png(index.resolve(r.person_path), sample.person);
        write_png(index.resolve(r.garment_path), garment.image);
        write_png(index.resolve(r.head_path), sample.head);
        write_png(index.resolve(r.pose_path), pose_map.image);

        if (r.has_multipose) {
            const GarmentSpec& ref_spec = index.by_id(r.unpaired_ref).spec;
            const double cscale = canonical_camera(canvas).scale;
            auto unpaired =
                render_person_image(shape, pose, r.camera, ref_spec, r.who, canvas, cscale);
            auto person2 = render_person_image(shape, r.pose2(), r.camera, r.spec, r.who, canvas,
                                               cscale);
            auto pose2_map = render_pose_map(shape, r.pose2(), r.camera, canvas, canvas);
            r.unpaired_gt_path = img_path("unpaired");
            r.person2_gt_path = img_path("person2");
            r.pose2_path = img_path("pose2");
            write_png(index.resolve(r.unpaired_gt_path), unpaired.image);
            write_png(index.resolve(r.person2_gt_path), person2.image);
            write_png(index.resolve(r.pose2_path), pose2_map.image);
        }
    }

    // index.json
    nlohmann::ordered_json j;
    j["version"] = index.version;
    j["seed"] = index.seed;
    j["canvas"] = index.canvas;
    j["head_size"] = index.head_size;
    auto arr = nlohmann::ordered_json::array();
    for (const SampleRecord& r : index.records) arr.push_back(detail::record_json(r));
    j["records"] = std::move(arr);
    std::ofstream out(fs::path(out_dir) / "index.json");
    if (!out) throw IoError("cannot write index.json under " + out_dir);
    out << j.dump(1) << "\n";
    out.close();
    if (!out) throw IoError("failed writing index.json under " + out_dir);
    return index;
}

inline DatasetIndex load_index(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path p = fs::path(dir) / "index.json";
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed index.json: " + std::string(e.what()));
    }
    DatasetIndex index;
    index.version = j.at("version").get<int>();
    if (index.version != 1) throw ValidationError("unsupported dataset version");
    index.seed = j.at("seed").get<uint64_t>();
    index.canvas = j.at("canvas").get<int>();
    index.head_size = j.at("head_size").get<int>();
    index.root = dir;
    for (const auto& rj : j.at("records")) index.records.push_back(detail::record_from_json(rj));
    return index;
}

}  // namespace omfa
