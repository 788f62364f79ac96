#include "omfa/synth.hpp"

#include <gtest/gtest.h>

#include <array>
#include <filesystem>
#include <fstream>

#include "omfa/rng.hpp"

using namespace omfa;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("omfa_synth_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    EXPECT_TRUE(in.good()) << path;
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Garment, SampleDeterministic) {
    Rng a(7), b(7);
    for (int i = 0; i < 10; ++i) {
        GarmentSpec x = sample_garment(a), y = sample_garment(b);
        ASSERT_EQ(x.pattern, y.pattern);
        ASSERT_EQ(x.sleeve, y.sleeve);
        ASSERT_EQ(x.pattern_scale, y.pattern_scale);
        ASSERT_EQ(x.base_color.r, y.base_color.r);
        ASSERT_EQ(x.pattern_color.b, y.pattern_color.b);
    }
}

TEST(Garment, InvariantsHoldOverSweep) {
    Rng rng(13);
    for (int i = 0; i < 1000; ++i) {
        GarmentSpec g = sample_garment(rng);
        ASSERT_NO_THROW(g.validate());
        ASSERT_GE(g.color_distance(), 0.2);
        ASSERT_GE(g.pattern_scale, 4.0);
        ASSERT_LE(g.pattern_scale, 16.0);
    }
}

TEST(Garment, PatternDistributionUniform) {
    Rng rng(29);
    std::array<int, 5> counts{};
    const int n = 10000;
    for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(sample_garment(rng).pattern)]++;
    for (int c : counts) {
        EXPECT_GE(c, static_cast<int>(0.15 * n));  // 20% +/- 5%
        EXPECT_LE(c, static_cast<int>(0.25 * n));
    }
}

TEST(RenderSample, Deterministic) {
    Rng rng(3);
    Identity who = sample_identity(rng);
    GarmentSpec spec = sample_garment(rng);
    BodyShape shape = BodyShape::mean();
    BodyPose pose{};
    pose.theta[2] = 0.4;
    Camera cam = canonical_camera(64);
    auto a = render_sample(shape, pose, cam, spec, who, 64, 32);
    auto b = render_sample(shape, pose, cam, spec, who, 64, 32);
    for (std::size_t i = 0; i < a.person.numel(); ++i) ASSERT_EQ(a.person[i], b.person[i]);
    for (std::size_t i = 0; i < a.head.numel(); ++i) ASSERT_EQ(a.head[i], b.head[i]);
}

TEST(RenderSample, SolidGarmentPixelsEqualBaseColorExactly) {
    Rng rng(5);
    Identity who = sample_identity(rng);
    GarmentSpec spec;
    spec.base_color = rgb_bytes(30, 200, 90);
    spec.pattern_color = rgb_bytes(200, 30, 200);
    spec.pattern = Pattern::solid;
    spec.sleeve = Sleeve::long_sleeve;
    BodyShape shape = BodyShape::mean();
    BodyPose pose{};
    const double cscale = canonical_camera(64).scale;
    auto res = render_person_image(shape, pose, canonical_camera(64), spec, who, 64, cscale);
    int garment_px = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const int32_t part = res.parts.at(0, y, x);
            if (part >= 0 && garment_covers(static_cast<BodyPart>(part), spec.sleeve)) {
                ++garment_px;
                ASSERT_EQ(res.image.at(0, y, x), spec.base_color.r);
                ASSERT_EQ(res.image.at(1, y, x), spec.base_color.g);
                ASSERT_EQ(res.image.at(2, y, x), spec.base_color.b);
            }
        }
    EXPECT_GT(garment_px, 100);
}

TEST(RenderSample, CanonicalPersonMatchesGarmentImageAnchoring) {
    // shared-renderer oracle: at the canonical pose and camera, pixels that
    // show the same garment part in both renders are exactly equal
    Rng rng(8);
    for (int trial = 0; trial < 4; ++trial) {
        Identity who = sample_identity(rng);
        GarmentSpec spec = sample_garment(rng);
        BodyShape shape;
        for (std::size_t i = 0; i < 10; ++i)
            shape.beta[i] = rng.uniform(BodyShape::kMin[i], BodyShape::kMax[i]);
        const Camera cam = canonical_camera(64);
        auto person = render_person_image(shape, BodyPose{}, cam, spec, who, 64, cam.scale);
        auto garment = render_garment_image(shape, spec, 64);
        int compared = 0;
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                const int32_t pp = person.parts.at(0, y, x);
                const int32_t gp = garment.parts.at(0, y, x);
                if (pp >= 0 && pp == gp &&
                    garment_covers(static_cast<BodyPart>(pp), spec.sleeve)) {
                    ++compared;
                    for (int c = 0; c < 3; ++c)
                        ASSERT_EQ(person.image.at(c, y, x), garment.image.at(c, y, x))
                            << "trial " << trial << " at " << x << "," << y;
                }
            }
        EXPECT_GT(compared, 120) << "trial " << trial;
    }
}

TEST(Dataset, EmptyTrainSplitIsValid) {
    const std::string dir = temp_dir("empty");
    DatasetIndex idx = generate_dataset(0, 2, 11, dir, 32, 16);
    EXPECT_EQ(idx.records.size(), 2u);
    DatasetIndex loaded = load_index(dir);
    EXPECT_EQ(loaded.records.size(), 2u);
    EXPECT_EQ(loaded.split_records("train").size(), 0u);
    EXPECT_EQ(loaded.split_records("test").size(), 2u);
    fs::remove_all(dir);
}

TEST(Dataset, RecordCountAndRoundTrip) {
    const std::string dir = temp_dir("count");
    DatasetIndex idx = generate_dataset(3, 2, 5, dir, 32, 16);
    EXPECT_EQ(idx.records.size(), 5u);
    DatasetIndex loaded = load_index(dir);
    ASSERT_EQ(loaded.records.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& a = idx.records[i];
        const auto& b = loaded.records[i];
        ASSERT_EQ(a.id, b.id);
        ASSERT_EQ(a.split, b.split);
        for (int k = 0; k < 10; ++k) {
            ASSERT_EQ(a.beta[static_cast<std::size_t>(k)], b.beta[static_cast<std::size_t>(k)]);
            ASSERT_EQ(a.theta[static_cast<std::size_t>(k)], b.theta[static_cast<std::size_t>(k)]);
        }
        ASSERT_EQ(a.camera.scale, b.camera.scale);
        ASSERT_EQ(a.spec.pattern, b.spec.pattern);
        ASSERT_EQ(a.spec.base_color.r, b.spec.base_color.r);
        ASSERT_EQ(a.who.skin.g, b.who.skin.g);
    }
    // test records reference a different test record
    for (const auto* r : loaded.split_records("test")) {
        ASSERT_TRUE(r->has_multipose);
        ASSERT_NE(r->unpaired_ref, r->id);
        ASSERT_EQ(loaded.by_id(r->unpaired_ref).split, "test");
    }
    fs::remove_all(dir);
}

TEST(Dataset, RegenerationIsByteIdentical) {
    const std::string d1 = temp_dir("rega"), d2 = temp_dir("regb");
    generate_dataset(2, 2, 99, d1, 32, 16);
    generate_dataset(2, 2, 99, d2, 32, 16);
    std::vector<std::string> rels;
    for (const auto& e : fs::recursive_directory_iterator(d1))
        if (e.is_regular_file()) rels.push_back(fs::relative(e.path(), d1).string());
    ASSERT_GT(rels.size(), 8u);
    std::sort(rels.begin(), rels.end());
    for (const auto& rel : rels) {
        auto a = slurp((fs::path(d1) / rel).string());
        auto b = slurp((fs::path(d2) / rel).string());
        ASSERT_EQ(a.size(), b.size()) << rel;
        ASSERT_TRUE(a == b) << rel;
    }
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST(Dataset, ImagesSurvivePngRoundTrip) {
    const std::string dir = temp_dir("png");
    DatasetIndex idx = generate_dataset(1, 1, 3, dir, 64, 32);
    const auto& r = idx.records[0];
    // regenerate the person render in memory and compare to the file
    auto sample = render_sample(r.shape(), r.pose(), r.camera, r.spec, r.who, 64, 32);
    Tensor from_disk = read_png(idx.resolve(r.person_path));
    ASSERT_TRUE(from_disk.same_shape(sample.person));
    for (std::size_t i = 0; i < from_disk.numel(); ++i)
        ASSERT_EQ(from_disk[i], sample.person[i]);
    fs::remove_all(dir);
}
