#include "omfa/body.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "omfa/rng.hpp"

using namespace omfa;

namespace {

BodyShape random_shape(Rng& rng) {
    BodyShape s;
    for (std::size_t i = 0; i < 10; ++i)
        s.beta[i] = rng.uniform(BodyShape::kMin[i], BodyShape::kMax[i]);
    return s;
}

BodyPose random_pose(Rng& rng, double fraction = 0.9) {
    BodyPose p;
    for (std::size_t i = 0; i < 10; ++i)
        p.theta[i] = rng.uniform(fraction * BodyPose::kMin[i], fraction * BodyPose::kMax[i]);
    return p;
}

}  // namespace

TEST(ChainFk, StraightTwoLinkArm) {
    auto joints = chain_fk({0, 0}, 0.0, {{0.0, 1.0}, {0.0, 1.0}});
    ASSERT_EQ(joints.size(), 2u);
    EXPECT_NEAR(joints[1].x, 2.0, 1e-12);
    EXPECT_NEAR(joints[1].y, 0.0, 1e-12);
}

TEST(ChainFk, QuarterTurnAtRoot) {
    auto joints = chain_fk({0, 0}, 0.0, {{1.5707963267948966, 1.0}, {0.0, 1.0}});
    EXPECT_NEAR(joints[1].x, 0.0, 1e-12);
    EXPECT_NEAR(joints[1].y, 2.0, 1e-12);
}

TEST(ForwardKinematics, CanonicalPoseClosedForm) {
    BodyShape s = BodyShape::mean();
    BodyPose zero{};
    Skeleton2D sk = forward_kinematics(s, zero);

    EXPECT_NEAR(sk.pelvis.x, 0.0, 1e-12);
    EXPECT_NEAR(sk.chest.y, s.torso_h(), 1e-12);
    EXPECT_NEAR(sk.chest.x, 0.0, 1e-12);
    EXPECT_NEAR(sk.head_center.y, s.torso_h() + 1.5 * s.head_r(), 1e-12);

    // shoulders sit symmetric about the chest
    EXPECT_NEAR(sk.joints[kShoulderR].x, 0.5 * s.shoulder_w(), 1e-12);
    EXPECT_NEAR(sk.joints[kShoulderL].x, -0.5 * s.shoulder_w(), 1e-12);
    EXPECT_NEAR(sk.joints[kShoulderR].y, s.torso_h(), 1e-12);

    // right wrist: shoulder + (upper+lower) along the slightly dropped axis
    const double reach = s.arm_upper() + s.arm_lower();
    EXPECT_NEAR(sk.joints[kWristR].x, 0.5 * s.shoulder_w() + reach * std::cos(-kArmDrop), 1e-12);
    EXPECT_NEAR(sk.joints[kWristR].y, s.torso_h() + reach * std::sin(-kArmDrop), 1e-12);

    // legs point mostly down from the hips
    EXPECT_LT(sk.joints[kAnkleR].y, sk.joints[kKneeR].y);
    EXPECT_LT(sk.joints[kKneeR].y, 0.0);
    EXPECT_NEAR(sk.joints[kHipR].x, 0.45 * s.torso_w(), 1e-12);
}

TEST(ForwardKinematics, RigidChainProperty) {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        BodyShape s = random_shape(rng);
        BodyPose p = random_pose(rng);
        Skeleton2D sk = forward_kinematics(s, p);
        EXPECT_NEAR((sk.joints[kElbowR] - sk.joints[kShoulderR]).norm(), s.arm_upper(), 1e-9);
        EXPECT_NEAR((sk.joints[kWristR] - sk.joints[kElbowR]).norm(), s.arm_lower(), 1e-9);
        EXPECT_NEAR((sk.joints[kElbowL] - sk.joints[kShoulderL]).norm(), s.arm_upper(), 1e-9);
        EXPECT_NEAR((sk.joints[kWristL] - sk.joints[kElbowL]).norm(), s.arm_lower(), 1e-9);
        EXPECT_NEAR((sk.joints[kKneeR] - sk.joints[kHipR]).norm(), s.leg_upper(), 1e-9);
        EXPECT_NEAR((sk.joints[kAnkleR] - sk.joints[kKneeR]).norm(), s.leg_lower(), 1e-9);
        EXPECT_NEAR((sk.joints[kKneeL] - sk.joints[kHipL]).norm(), s.leg_upper(), 1e-9);
        EXPECT_NEAR((sk.joints[kAnkleL] - sk.joints[kKneeL]).norm(), s.leg_lower(), 1e-9);
        EXPECT_NEAR((sk.joints[kShoulderR] - sk.joints[kShoulderL]).norm(), s.shoulder_w(), 1e-9);
    }
}

TEST(ForwardKinematics, OutOfBoundsThrows) {
    BodyShape s = BodyShape::mean();
    BodyPose p{};
    s.beta[0] = 5.0;
    EXPECT_THROW(forward_kinematics(s, p), ValidationError);
    s = BodyShape::mean();
    p.theta[4] = 2.0;
    EXPECT_THROW(forward_kinematics(s, p), ValidationError);
}

TEST(EditPose, IdentityAndShapePreservation) {
    Rng rng(23);
    BodyShape s = random_shape(rng);
    BodyPose p0 = random_pose(rng);
    auto [s_same, p_same] = edit_pose(s, p0);
    for (std::size_t i = 0; i < 10; ++i) {
        ASSERT_EQ(s_same.beta[i], s.beta[i]);
        ASSERT_EQ(p_same.theta[i], p0.theta[i]);
    }

    BodyPose p1 = random_pose(rng);
    auto [s2, p2] = edit_pose(s, p1);
    for (std::size_t i = 0; i < 10; ++i) ASSERT_EQ(s2.beta[i], s.beta[i]);  // bit-identical

    // limb lengths unchanged by any pose edit
    Skeleton2D a = forward_kinematics(s, p0);
    Skeleton2D b = forward_kinematics(s2, p2);
    EXPECT_NEAR((a.joints[kElbowR] - a.joints[kShoulderR]).norm(),
                (b.joints[kElbowR] - b.joints[kShoulderR]).norm(), 1e-12);
    EXPECT_NEAR((a.joints[kAnkleL] - a.joints[kKneeL]).norm(),
                (b.joints[kAnkleL] - b.joints[kKneeL]).norm(), 1e-12);

    BodyPose bad{};
    bad.theta[0] = 9.0;
    EXPECT_THROW(edit_pose(s, bad), ValidationError);
}

TEST(RenderPoseMap, Deterministic) {
    Rng rng(31);
    BodyShape s = random_shape(rng);
    BodyPose p = random_pose(rng);
    Camera cam;
    auto a = render_pose_map(s, p, cam, 64, 64);
    auto b = render_pose_map(s, p, cam, 64, 64);
    for (std::size_t i = 0; i < a.image.numel(); ++i) ASSERT_EQ(a.image[i], b.image[i]);
    for (std::size_t i = 0; i < a.parts.numel(); ++i) ASSERT_EQ(a.parts[i], b.parts[i]);
}

TEST(RenderPoseMap, ScaleDoublingDoublesJointDistances) {
    BodyShape s = BodyShape::mean();
    BodyPose p{};
    Camera c1{.scale = 5.0, .tx = 32, .ty = 36};
    Camera c2{.scale = 10.0, .tx = 32, .ty = 36};
    Skeleton2D sk = forward_kinematics(s, p);
    const Vec2 a1 = c1.to_image(sk.joints[kWristL]), b1 = c1.to_image(sk.joints[kAnkleR]);
    const Vec2 a2 = c2.to_image(sk.joints[kWristL]), b2 = c2.to_image(sk.joints[kAnkleR]);
    EXPECT_NEAR((a2 - b2).norm(), 2.0 * (a1 - b1).norm(), 1e-9);
    Camera bad{.scale = 0.0, .tx = 0, .ty = 0};
    EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(RenderPoseMap, BoundingBoxMatchesClosedForm) {
    Rng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        BodyShape s = random_shape(rng);
        BodyPose p{};  // canonical
        Camera cam{.scale = 10.0, .tx = 32.0, .ty = 36.0};
        auto res = render_pose_map(s, p, cam, 64, 64);
        ASSERT_FALSE(res.clipped);

        BBox want = skeleton_bbox_image(forward_kinematics(s, p), cam);
        int x0 = 64, x1 = -1, y0 = 64, y1 = -1;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (res.parts.at(0, y, x) >= 0) {
                    x0 = std::min(x0, x);
                    x1 = std::max(x1, x);
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                }
        EXPECT_NEAR(x0, want.x0, 2.0);
        EXPECT_NEAR(x1, want.x1, 2.0);
        EXPECT_NEAR(y0, want.y0, 2.0);
        EXPECT_NEAR(y1, want.y1, 2.0);
    }
}

TEST(RenderPoseMap, UsesAllTwelvePartColors) {
    BodyShape s = BodyShape::mean();
    BodyPose p{};
    p.theta[4] = 0.9;  // bend elbows so lower arms do not align with uppers
    p.theta[5] = -0.9;
    auto res = render_pose_map(s, p, Camera{}, 64, 64);
    std::array<bool, kNumBodyParts> seen{};
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (res.parts.at(0, y, x) >= 0) seen[static_cast<std::size_t>(res.parts.at(0, y, x))] = true;
    for (int i = 0; i < kNumBodyParts; ++i) EXPECT_TRUE(seen[static_cast<std::size_t>(i)]) << "part " << i;
}
