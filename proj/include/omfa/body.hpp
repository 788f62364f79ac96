#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "omfa/errors.hpp"
#include "omfa/image.hpp"
#include "omfa/tensor.hpp"

namespace omfa {

struct Vec2 {
    double x = 0.0, y = 0.0;
    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

// Body space: y up, counterclockwise angles from +x. Image space: y down.
// Units are "body units"; a full figure spans roughly 5 of them.

// beta layout (all lengths in body units):
//   0 torso width   1 torso height   2 shoulder width   3 head radius
//   4 upper arm len 5 lower arm len  6 arm width
//   7 upper leg len 8 lower leg len  9 leg width
struct BodyShape {
    std::array<double, 10> beta{};

    static constexpr std::array<double, 10> kMin = {0.50, 1.20, 0.70, 0.22, 0.55,
                                                    0.50, 0.14, 0.70, 0.65, 0.16};
    static constexpr std::array<double, 10> kMax = {1.10, 2.00, 1.30, 0.42, 0.95,
                                                    0.90, 0.30, 1.10, 1.05, 0.34};

    double torso_w() const { return beta[0]; }
    double torso_h() const { return beta[1]; }
    double shoulder_w() const { return beta[2]; }
    double head_r() const { return beta[3]; }
    double arm_upper() const { return beta[4]; }
    double arm_lower() const { return beta[5]; }
    double arm_w() const { return beta[6]; }
    double leg_upper() const { return beta[7]; }
    double leg_lower() const { return beta[8]; }
    double leg_w() const { return beta[9]; }

    static BodyShape mean() {
        BodyShape s;
        for (int i = 0; i < 10; ++i) s.beta[static_cast<std::size_t>(i)] = 0.5 * (kMin[static_cast<std::size_t>(i)] + kMax[static_cast<std::size_t>(i)]);
        return s;
    }

    void validate() const {
        for (std::size_t i = 0; i < 10; ++i)
            if (!(beta[i] >= kMin[i] && beta[i] <= kMax[i]))
                throw ValidationError("beta[" + std::to_string(i) + "]=" + std::to_string(beta[i]) +
                                      " outside [" + std::to_string(kMin[i]) + "," +
                                      std::to_string(kMax[i]) + "]");
    }
};

// theta layout (radians, offsets from the canonical pose):
//   0 torso tilt  1 neck
//   2 shoulder L  3 shoulder R  4 elbow L  5 elbow R
//   6 hip L       7 hip R       8 knee L   9 knee R
struct BodyPose {
    std::array<double, 10> theta{};

    static constexpr std::array<double, 10> kMin = {-0.30, -0.40, -0.90, -0.90, -1.20,
                                                    -1.20, -0.50, -0.50, -0.90, -0.90};
    static constexpr std::array<double, 10> kMax = {0.30, 0.40, 0.90, 0.90, 1.20,
                                                    1.20, 0.50, 0.50, 0.90, 0.90};

    void validate() const {
        for (std::size_t i = 0; i < 10; ++i)
            if (!(theta[i] >= kMin[i] && theta[i] <= kMax[i]))
                throw ValidationError("theta[" + std::to_string(i) + "]=" +
                                      std::to_string(theta[i]) + " outside joint bounds");
    }
};

struct Camera {
    double scale = 11.0;  // pixels per body unit
    double tx = 32.0, ty = 36.0;

    void validate() const {
        if (!(scale > 0.0)) throw ValidationError("camera scale must be > 0");
    }
    Vec2 to_image(Vec2 p) const { return {scale * p.x + tx, ty - scale * p.y}; }
    Vec2 to_body(Vec2 img) const { return {(img.x - tx) / scale, (ty - img.y) / scale}; }
};

enum class BodyPart : int {
    torso = 0,
    hip_bar,
    neck,
    head,
    upper_arm_l,
    upper_arm_r,
    lower_arm_l,
    lower_arm_r,
    upper_leg_l,
    upper_leg_r,
    lower_leg_l,
    lower_leg_r,
};
inline constexpr int kNumBodyParts = 12;

// capsule in body space; p0 == p1 draws a disc
struct Capsule {
    Vec2 p0, p1;
    double radius = 0.0;
    BodyPart part = BodyPart::torso;
};

enum JointId : int {
    kShoulderL = 0,
    kShoulderR,
    kElbowL,
    kElbowR,
    kWristL,
    kWristR,
    kHipL,
    kHipR,
    kKneeL,
    kKneeR,
    kAnkleL,
    kAnkleR,
};

struct Skeleton2D {
    std::array<Vec2, 12> joints{};
    Vec2 pelvis, chest, head_center;
    std::vector<Capsule> parts;  // painter's order, later entries on top
};

// canonical rest angles: arms slightly below horizontal, legs slightly splayed
inline constexpr double kArmDrop = 0.35;
inline constexpr double kLegSplay = 0.12;

// two-link planar chain: each joint = parent + len * unit(accumulated angle)
inline std::vector<Vec2> chain_fk(Vec2 origin, double base_angle,
                                  const std::vector<std::pair<double, double>>& links) {
    std::vector<Vec2> out;
    out.reserve(links.size());
    Vec2 p = origin;
    double phi = base_angle;
    for (const auto& [angle, len] : links) {
        phi += angle;
        p = p + unit(phi) * len;
        out.push_back(p);
    }
    return out;
}

inline Skeleton2D forward_kinematics(const BodyShape& shape, const BodyPose& pose) {
    shape.validate();
    pose.validate();
    const auto& b = shape;
    const auto& th = pose.theta;

    Skeleton2D sk;
    sk.pelvis = {0.0, 0.0};
    const double torso_angle = 1.5707963267948966 + th[0];
    sk.chest = sk.pelvis + unit(torso_angle) * b.torso_h();

    const double neck_len = 0.5 * b.head_r();
    sk.head_center = sk.chest + unit(torso_angle + th[1]) * (neck_len + b.head_r());

    const Vec2 right_perp = unit(torso_angle - 1.5707963267948966);
    sk.joints[kShoulderL] = sk.chest - right_perp * (0.5 * b.shoulder_w());
    sk.joints[kShoulderR] = sk.chest + right_perp * (0.5 * b.shoulder_w());

    auto arm = chain_fk(sk.joints[kShoulderR], th[0] - kArmDrop,
                        {{th[3], b.arm_upper()}, {th[5], b.arm_lower()}});
    sk.joints[kElbowR] = arm[0];
    sk.joints[kWristR] = arm[1];
    arm = chain_fk(sk.joints[kShoulderL], 3.14159265358979323846 + kArmDrop + th[0],
                   {{th[2], b.arm_upper()}, {th[4], b.arm_lower()}});
    sk.joints[kElbowL] = arm[0];
    sk.joints[kWristL] = arm[1];

    const double hip_off = 0.45 * b.torso_w();
    sk.joints[kHipL] = {-hip_off, 0.0};
    sk.joints[kHipR] = {hip_off, 0.0};
    auto leg = chain_fk(sk.joints[kHipR], -1.5707963267948966 + kLegSplay,
                        {{th[7], b.leg_upper()}, {th[9], b.leg_lower()}});
    sk.joints[kKneeR] = leg[0];
    sk.joints[kAnkleR] = leg[1];
    leg = chain_fk(sk.joints[kHipL], -1.5707963267948966 - kLegSplay,
                   {{th[6], b.leg_upper()}, {th[8], b.leg_lower()}});
    sk.joints[kKneeL] = leg[0];
    sk.joints[kAnkleL] = leg[1];

    const Vec2 neck_tip = sk.chest + unit(torso_angle + th[1]) * neck_len;
    sk.parts = {
        {sk.joints[kKneeL], sk.joints[kAnkleL], 0.5 * b.leg_w(), BodyPart::lower_leg_l},
        {sk.joints[kKneeR], sk.joints[kAnkleR], 0.5 * b.leg_w(), BodyPart::lower_leg_r},
        {sk.joints[kHipL], sk.joints[kKneeL], 0.5 * b.leg_w(), BodyPart::upper_leg_l},
        {sk.joints[kHipR], sk.joints[kKneeR], 0.5 * b.leg_w(), BodyPart::upper_leg_r},
        {sk.joints[kHipL], sk.joints[kHipR], 0.6 * b.leg_w(), BodyPart::hip_bar},
        {sk.pelvis, sk.chest, 0.5 * b.torso_w(), BodyPart::torso},
        {sk.chest, neck_tip, 0.45 * b.head_r(), BodyPart::neck},
        {sk.head_center, sk.head_center, b.head_r(), BodyPart::head},
        {sk.joints[kShoulderL], sk.joints[kElbowL], 0.5 * b.arm_w(), BodyPart::upper_arm_l},
        {sk.joints[kShoulderR], sk.joints[kElbowR], 0.5 * b.arm_w(), BodyPart::upper_arm_r},
        {sk.joints[kElbowL], sk.joints[kWristL], 0.5 * b.arm_w(), BodyPart::lower_arm_l},
        {sk.joints[kElbowR], sk.joints[kWristR], 0.5 * b.arm_w(), BodyPart::lower_arm_r},
    };
    return sk;
}

// the disentanglement contract: substitute the pose, never touch the shape
inline std::pair<BodyShape, BodyPose> edit_pose(const BodyShape& shape, const BodyPose& pose_new) {
    pose_new.validate();
    return {shape, pose_new};
}

// ---- rasterization ----

struct Rgb {
    float r = 0.f, g = 0.f, b = 0.f;
};

inline Rgb rgb_bytes(int r, int g, int b) {
    return {byte_to_float(static_cast<uint8_t>(r)), byte_to_float(static_cast<uint8_t>(g)),
            byte_to_float(static_cast<uint8_t>(b))};
}

// fixed 12-color palette for the pose map (one color per BodyPart);
// byte-grid values so rendered images survive PNG roundtrips bit-exactly
inline const std::array<Rgb, kNumBodyParts>& pose_palette() {
    static const std::array<Rgb, kNumBodyParts> p = {{
        rgb_bytes(230, 26, 26),    // torso
        rgb_bytes(243, 141, 26),   // hip_bar
        rgb_bytes(243, 230, 38),   // neck
        rgb_bytes(102, 205, 38),   // head
        rgb_bytes(26, 166, 77),    // upper_arm_l
        rgb_bytes(26, 218, 192),   // upper_arm_r
        rgb_bytes(38, 115, 230),   // lower_arm_l
        rgb_bytes(77, 38, 230),    // lower_arm_r
        rgb_bytes(166, 51, 218),   // upper_leg_l
        rgb_bytes(230, 51, 179),   // upper_leg_r
        rgb_bytes(154, 102, 51),   // lower_leg_l
        rgb_bytes(218, 192, 154),  // lower_leg_r
    }};
    return p;
}

struct RenderResult {
    Tensor image;            // (3,H,W)
    TensorT<int32_t> parts;  // (1,H,W), part id per pixel or -1
    bool clipped = false;    // some body geometry fell outside the canvas
};

namespace detail {
inline double dist2_to_segment(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    const Vec2 q = a + ab * t;
    return (p - q).dot(p - q);
}
}  // namespace detail

// deterministic painter rasterizer; `color_of(capsule, body_point)` supplies
// per-pixel colors, which lets callers texture parts in their local frames
template <typename ColorFn>
RenderResult render_capsules(const std::vector<Capsule>& caps, const Camera& camera,
                             int canvas_h, int canvas_w, Rgb background, ColorFn&& color_of) {
    camera.validate();
    RenderResult r;
    r.image = make_image<float>(canvas_h, canvas_w);
    r.parts = TensorT<int32_t>({1, canvas_h, canvas_w}, -1);
    for (int y = 0; y < canvas_h; ++y)
        for (int x = 0; x < canvas_w; ++x) {
            r.image.at(0, y, x) = background.r;
            r.image.at(1, y, x) = background.g;
            r.image.at(2, y, x) = background.b;
        }

    for (const Capsule& cap : caps) {
        // conservative image-space bounding box
        const Vec2 a = camera.to_image(cap.p0), b = camera.to_image(cap.p1);
        const double rad = cap.radius * camera.scale + 1.0;
        const int x0 = static_cast<int>(std::floor(std::min(a.x, b.x) - rad));
        const int x1 = static_cast<int>(std::ceil(std::max(a.x, b.x) + rad));
        const int y0 = static_cast<int>(std::floor(std::min(a.y, b.y) - rad));
        const int y1 = static_cast<int>(std::ceil(std::max(a.y, b.y) + rad));
        if (x0 < 0 || y0 < 0 || x1 >= canvas_w || y1 >= canvas_h) r.clipped = true;
        const double r2 = cap.radius * cap.radius;
        for (int y = std::max(0, y0); y <= std::min(canvas_h - 1, y1); ++y)
            for (int x = std::max(0, x0); x <= std::min(canvas_w - 1, x1); ++x) {
                const Vec2 p = camera.to_body({x + 0.5, y + 0.5});
                if (detail::dist2_to_segment(p, cap.p0, cap.p1) <= r2) {
                    const Rgb c = color_of(cap, p);
                    r.image.at(0, y, x) = c.r;
                    r.image.at(1, y, x) = c.g;
                    r.image.at(2, y, x) = c.b;
                    r.parts.at(0, y, x) = static_cast<int32_t>(cap.part);
                }
            }
    }
    return r;
}

// structural condition map: part-colored capsules over a black background
inline RenderResult render_pose_map(const BodyShape& shape, const BodyPose& pose,
                                    const Camera& camera, int canvas_h, int canvas_w) {
    Skeleton2D sk = forward_kinematics(shape, pose);
    return render_capsules(sk.parts, camera, canvas_h, canvas_w, Rgb{0.f, 0.f, 0.f},
                           [](const Capsule& cap, Vec2) {
                               return pose_palette()[static_cast<std::size_t>(cap.part)];
                           });
}

// closed-form bounding box of the rendered figure, in image pixels
struct BBox {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

inline BBox skeleton_bbox_image(const Skeleton2D& sk, const Camera& camera) {
    double bx0 = 1e30, by0 = 1e30, bx1 = -1e30, by1 = -1e30;
    for (const Capsule& cap : sk.parts) {
        for (Vec2 p : {cap.p0, cap.p1}) {
            bx0 = std::min(bx0, p.x - cap.radius);
            bx1 = std::max(bx1, p.x + cap.radius);
            by0 = std::min(by0, p.y - cap.radius);
            by1 = std::max(by1, p.y + cap.radius);
        }
    }
    const Vec2 a = camera.to_image({bx0, by1});  // y flips
    const Vec2 b = camera.to_image({bx1, by0});
    return {a.x, a.y, b.x, b.y};
}

}  // namespace omfa
