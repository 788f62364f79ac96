#include "omfa/metrics.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "test_util.hpp"

using namespace omfa;
namespace fs = std::filesystem;

namespace {

const FeatureExtractor& extractor() {
    static FeatureExtractor e;
    return e;
}

std::vector<Tensor> random_image_set(int n, int size, uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> out;
    for (int i = 0; i < n; ++i) out.push_back(test::random_image<float>(size, size, rng));
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Ssim, SelfIsExactlyOne) {
    Rng rng(1);
    auto x = test::random_image<float>(24, 24, rng);
    EXPECT_EQ(ssim(x, x), 1.0);
}

TEST(Ssim, Symmetric) {
    Rng rng(2);
    auto a = test::random_image<float>(20, 28, rng);
    auto b = test::random_image<float>(20, 28, rng);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, BlackVsWhiteClosedForm) {
    // mu1=0, mu2=1, all variances 0: SSIM = C1/(1+C1)
    auto zeros = make_image<float>(16, 16, 0.f);
    auto ones = make_image<float>(16, 16, 1.f);
    EXPECT_NEAR(ssim(zeros, ones), 1e-4 / (1.0 + 1e-4), 1e-9);
    EXPECT_LT(ssim(zeros, ones), 1e-3);
}

TEST(Ssim, ShapeAndSizeErrors) {
    auto a = make_image<float>(16, 16, 0.5f);
    auto b = make_image<float>(16, 17, 0.5f);
    EXPECT_THROW(ssim(a, b), ShapeError);
    auto small = make_image<float>(8, 8, 0.5f);
    EXPECT_THROW(ssim(small, small), ParamError);
}

TEST(Features, DeterministicAcrossInstances) {
    Rng rng(3);
    auto img = test::random_image<float>(32, 32, rng);
    FeatureExtractor e1, e2;
    auto f1 = e1.features(img);
    auto f2 = e2.features(img);
    ASSERT_EQ(f1.size(), static_cast<std::size_t>(kFeatureDim));
    for (std::size_t i = 0; i < f1.size(); ++i) ASSERT_EQ(f1[i], f2[i]);
}

TEST(GarmentSimilarity, SelfIsExactlyOne) {
    Rng rng(4);
    auto img = test::random_image<float>(32, 32, rng);
    EXPECT_EQ(garment_similarity(img, img, extractor()), 1.0);
}

TEST(GarmentSimilarity, Symmetric) {
    Rng rng(5);
    auto a = test::random_image<float>(32, 32, rng);
    auto b = test::random_image<float>(32, 32, rng);
    EXPECT_NEAR(garment_similarity(a, b, extractor()),
                garment_similarity(b, a, extractor()), 1e-12);
}

TEST(GarmentSimilarity, ZeroNormFeatureIsZero) {
    // a constant mid-gray image maps to all-zero features
    auto gray = make_image<float>(32, 32, 0.5f);
    Rng rng(6);
    auto other = test::random_image<float>(32, 32, rng);
    EXPECT_EQ(garment_similarity(gray, other, extractor()), 0.0);
}

TEST(GarmentSimilarity, DiscriminatesGarments) {
    // self-similarity must beat similarity to a different random garment
    Rng rng(7);
    std::vector<Tensor> garments;
    for (int i = 0; i < 100; ++i) {
        GarmentSpec spec = sample_garment(rng);
        BodyShape shape;
        for (std::size_t k = 0; k < 10; ++k)
            shape.beta[k] = rng.uniform(BodyShape::kMin[k], BodyShape::kMax[k]);
        garments.push_back(render_garment_image(shape, spec, 32).image);
    }
    int wins = 0;
    for (int i = 0; i < 100; ++i) {
        const int other = (i + 37) % 100;
        const double self_sim = garment_similarity(garments[static_cast<std::size_t>(i)],
                                                   garments[static_cast<std::size_t>(i)], extractor());
        const double cross = garment_similarity(garments[static_cast<std::size_t>(i)],
                                                garments[static_cast<std::size_t>(other)], extractor());
        wins += self_sim > cross;
    }
    EXPECT_GE(wins, 95);
}

TEST(FidKid, SelfDistancesNearZero) {
    auto set = random_image_set(20, 32, 11);
    FidKid fk = fid_kid(set, set, extractor());
    EXPECT_LE(fk.fid, 1e-6);
    EXPECT_LE(std::abs(fk.kid), 1e-6);
}

TEST(FidKid, BrightnessShiftGivesPositiveFid) {
    auto a = random_image_set(20, 32, 12);
    std::vector<Tensor> b = a;
    for (auto& img : b)
        for (auto& x : img.v) x = std::min(1.f, x + 0.25f);
    FidKid fk = fid_kid(a, b, extractor());
    EXPECT_GT(fk.fid, 1e-3);
}

TEST(FidKid, KidMatchesQuadraticOracle) {
    auto a = random_image_set(32, 32, 13);
    auto b = random_image_set(32, 32, 14);
    FidKid fk = fid_kid(a, b, extractor());

    // independent O(n^2) kernel-sum oracle
    auto feats = [&](const std::vector<Tensor>& set) {
        std::vector<std::vector<double>> out;
        for (const auto& img : set) out.push_back(extractor().features(img));
        return out;
    };
    auto fa = feats(a), fb = feats(b);
    auto kernel = [](const std::vector<double>& x, const std::vector<double>& y) {
        double dot = 0;
        for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
        double v = dot / 128.0 + 1.0;
        return v * v * v;
    };
    const double m = 32.0;
    double acc = 0;
    for (std::size_t i = 0; i < 32; ++i)
        for (std::size_t j = 0; j < 32; ++j) {
            if (i == j) continue;
            acc += kernel(fa[i], fa[j]) + kernel(fb[i], fb[j]) - kernel(fa[i], fb[j]) -
                   kernel(fa[j], fb[i]);
        }
    const double oracle = acc / (m * (m - 1));
    EXPECT_NEAR(fk.kid, oracle, 1e-10);
}

TEST(FidKid, UndersizedSetsRejected) {
    auto a = random_image_set(8, 32, 15);
    EXPECT_THROW(fid_kid(a, a, extractor()), ParamError);
}

TEST(Silhouette, IouBasics) {
    auto black = make_image<float>(16, 16, 0.f);
    auto white = make_image<float>(16, 16, byte_to_float(255));
    EXPECT_EQ(silhouette_iou(black, black), 1.0);  // empty/empty
    EXPECT_EQ(silhouette_iou(white, white), 1.0);
    EXPECT_EQ(silhouette_iou(black, white), 0.0);
}

TEST(MaskedMse, OnlyForegroundCounts) {
    auto gt = make_image<float>(8, 8, 0.f);
    gt.at(0, 2, 2) = byte_to_float(200);  // one foreground pixel
    auto out = make_image<float>(8, 8, byte_to_float(128));  // wrong everywhere
    const double bg_mse = masked_mse(out, gt, Rgb{0.f, 0.f, 0.f});
    const double d0 = byte_to_float(128) - byte_to_float(200);
    const double d1 = byte_to_float(128);
    EXPECT_NEAR(bg_mse, (d0 * d0 + 2 * d1 * d1) / 3.0, 1e-12);
}

TEST(EvaluateRun, GroundTruthScoresPerfect) {
    const std::string dir =
        (fs::temp_directory_path() / "omfa_eval_gt").string();
    fs::remove_all(dir);
    DatasetIndex idx = generate_dataset(0, 16, 21, dir, 32, 16);
    const std::string results = dir + "/results";
    fs::create_directories(results);
    for (const auto* r : idx.split_records("test"))
        fs::copy_file(idx.resolve(r->garment_path), results + "/" + r->id + ".png");
    EvalReport rep = evaluate_run(results, idx, EvalMode::tryoff, extractor());
    EXPECT_EQ(rep.summary.at("ssim"), 1.0);
    EXPECT_EQ(rep.summary.at("masked_mse"), 0.0);
    EXPECT_EQ(rep.summary.at("garment_similarity"), 1.0);
    EXPECT_LE(rep.summary.at("fid"), 1e-6);
    EXPECT_LE(std::abs(rep.summary.at("kid")), 1e-6);
    fs::remove_all(dir);
}

TEST(EvaluateRun, MissingResultsEnumerated) {
    const std::string dir = (fs::temp_directory_path() / "omfa_eval_missing").string();
    fs::remove_all(dir);
    DatasetIndex idx = generate_dataset(0, 3, 22, dir, 32, 16);
    const std::string results = dir + "/results";
    fs::create_directories(results);
    try {
        evaluate_run(results, idx, EvalMode::tryoff, extractor());
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        const std::string msg = e.what();
        for (const auto* r : idx.split_records("test"))
            EXPECT_NE(msg.find(r->id), std::string::npos) << r->id;
    }
    fs::remove_all(dir);
}

TEST(EvaluateRun, ReportsAreByteIdenticalAcrossRuns) {
    const std::string dir = (fs::temp_directory_path() / "omfa_eval_repro").string();
    fs::remove_all(dir);
    DatasetIndex idx = generate_dataset(0, 16, 23, dir, 32, 16);
    const std::string results = dir + "/results";
    fs::create_directories(results);
    for (const auto* r : idx.split_records("test"))
        fs::copy_file(idx.resolve(r->person_path), results + "/" + r->id + ".png");
    evaluate_run(results, idx, EvalMode::paired, extractor());
    const std::string a = slurp(results + "/report.json");
    evaluate_run(results, idx, EvalMode::paired, extractor());
    const std::string b = slurp(results + "/report.json");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b);
    fs::remove_all(dir);
}
