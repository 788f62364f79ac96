#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "omfa/errors.hpp"
#include "omfa/image.hpp"
#include "omfa/nn.hpp"
#include "omfa/synth.hpp"
#include "omfa/tensor.hpp"

namespace omfa {

// ---- SSIM (11x11 Gaussian window, K1=0.01, K2=0.03, L=1, luminance) ----

namespace detail {

inline const std::array<double, 121>& ssim_window() {
    static const std::array<double, 121> w = [] {
        std::array<double, 121> out{};
        const double sigma = 1.5;
        double sum = 0.0;
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 11; ++x) {
                const double dy = y - 5, dx = x - 5;
                out[static_cast<std::size_t>(y * 11 + x)] =
                    std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                sum += out[static_cast<std::size_t>(y * 11 + x)];
            }
        for (double& v : out) v /= sum;
        return out;
    }();
    return w;
}

template <typename T>
std::vector<double> luminance(const TensorT<T>& img) {
    const int h = img.dim(1), w = img.dim(2);
    std::vector<double> y(static_cast<std::size_t>(h) * w);
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
            y[static_cast<std::size_t>(yy) * w + xx] = 0.299 * img.at(0, yy, xx) +
                                                       0.587 * img.at(1, yy, xx) +
                                                       0.114 * img.at(2, yy, xx);
    return y;
}

}  // namespace detail

// mean local SSIM over the luminance channel, valid windows only
template <typename T>
double ssim(const TensorT<T>& a, const TensorT<T>& b) {
    require_same_shape(a, b, "ssim inputs");
    const int h = a.dim(1), w = a.dim(2);
    if (h < 11 || w < 11) throw ParamError("ssim needs images of at least 11x11");
    const auto ya = detail::luminance(a);
    const auto yb = detail::luminance(b);
    const auto& win = detail::ssim_window();
    constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;

    double total = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + 11 <= h; ++y0)
        for (int x0 = 0; x0 + 11 <= w; ++x0) {
            double mu1 = 0, mu2 = 0, e11 = 0, e22 = 0, e12 = 0;
            for (int ky = 0; ky < 11; ++ky)
                for (int kx = 0; kx < 11; ++kx) {
                    const double wgt = win[static_cast<std::size_t>(ky * 11 + kx)];
                    const double va = ya[static_cast<std::size_t>(y0 + ky) * w + (x0 + kx)];
                    const double vb = yb[static_cast<std::size_t>(y0 + ky) * w + (x0 + kx)];
                    mu1 += wgt * va;
                    mu2 += wgt * vb;
                    e11 += wgt * (va * va);
                    e22 += wgt * (vb * vb);
                    e12 += wgt * (va * vb);
                }
            const double s11 = e11 - mu1 * mu1;
            const double s22 = e22 - mu2 * mu2;
            const double s12 = e12 - mu1 * mu2;
            const double num = (2.0 * (mu1 * mu2) + C1) * (2.0 * s12 + C2);
            const double den = (mu1 * mu1 + mu2 * mu2 + C1) * (s11 + s22 + C2);
            total += num / den;
            ++count;
        }
    return total / static_cast<double>(count);
}

// ---- fixed random-feature extractor (never trained) ----

inline constexpr uint64_t kFeatureExtractorSeed = 0x0FADED5EEDULL;
inline constexpr int kFeatureDim = 128;

// three stride-2 convolutions with tanh, global average pooling to 128-d
class FeatureExtractor {
public:
    explicit FeatureExtractor(uint64_t seed = kFeatureExtractorSeed) {
        auto xavier = [&](const std::string& name, std::vector<int> shape, int fan_in) {
            TensorT<float> t(shape);
            Rng rng = Rng(seed).child(name);
            const double std = std::sqrt(1.0 / static_cast<double>(fan_in));
            for (auto& x : t.v) x = static_cast<float>(rng.normal() * std);
            params_.add(name, std::move(t));
        };
        xavier("conv1.w", {32, 3 * 9}, 3 * 9);
        xavier("conv2.w", {64, 32 * 9}, 32 * 9);
        xavier("conv3.w", {kFeatureDim, 64 * 9}, 64 * 9);
    }

    std::vector<double> features(const Tensor& image) const {
        if (image.shape.size() != 3 || image.dim(0) != 3)
            throw ShapeError("feature extractor expects a (3,H,W) image");
        Tensor x({3, image.dim(1), image.dim(2)});
        for (std::size_t i = 0; i < x.numel(); ++i) x[i] = 2.f * image[i] - 1.f;
        const TensorT<float> no_bias;
        for (const char* name : {"conv1.w", "conv2.w", "conv3.w"}) {
            x = nn::conv2d(x, params_.at(name), no_bias, 3, 2, 1);
            for (auto& v : x.v) v = std::tanh(v);
        }
        std::vector<double> out(kFeatureDim, 0.0);
        const std::size_t hw = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
        for (int c = 0; c < kFeatureDim; ++c) {
            const float* row = x.data() + static_cast<std::size_t>(c) * hw;
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += row[i];
            out[static_cast<std::size_t>(c)] = acc / static_cast<double>(hw);
        }
        return out;
    }

private:
    nn::ParamStore<float> params_;
};

// cosine similarity of pooled features, computed as 1 - ||a^ - b^||^2 / 2 so
// identical inputs give exactly 1.0; zero-norm features map to 0 with warning
template <typename T>
double garment_similarity(const TensorT<T>& a, const TensorT<T>& b,
                          const FeatureExtractor& extractor) {
    const auto fa = extractor.features(a);
    const auto fb = extractor.features(b);
    double na = 0, nb = 0;
    for (int i = 0; i < kFeatureDim; ++i) {
        na += fa[static_cast<std::size_t>(i)] * fa[static_cast<std::size_t>(i)];
        nb += fb[static_cast<std::size_t>(i)] * fb[static_cast<std::size_t>(i)];
    }
    if (na == 0.0 || nb == 0.0) {
        std::fprintf(stderr, "[metrics] zero-norm feature vector; similarity defined as 0\n");
        return 0.0;
    }
    const double ia = 1.0 / std::sqrt(na), ib = 1.0 / std::sqrt(nb);
    double dist2 = 0.0;
    for (int i = 0; i < kFeatureDim; ++i) {
        const double d = fa[static_cast<std::size_t>(i)] * ia - fb[static_cast<std::size_t>(i)] * ib;
        dist2 += d * d;
    }
    return 1.0 - 0.5 * dist2;
}

// ---- FID / KID over extractor features ----

namespace detail {

inline void mean_cov(const std::vector<std::vector<double>>& feats, Eigen::VectorXd& mu,
                     Eigen::MatrixXd& cov) {
    const int n = static_cast<int>(feats.size());
    const int d = kFeatureDim;
    mu = Eigen::VectorXd::Zero(d);
    for (const auto& f : feats)
        for (int i = 0; i < d; ++i) mu[i] += f[static_cast<std::size_t>(i)];
    mu /= static_cast<double>(n);
    cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& f : feats) {
        Eigen::VectorXd c(d);
        for (int i = 0; i < d; ++i) c[i] = f[static_cast<std::size_t>(i)] - mu[i];
        cov.noalias() += c * c.transpose();
    }
    cov /= static_cast<double>(n - 1);
}

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd vals = es.eigenvalues();
    for (int i = 0; i < vals.size(); ++i) vals[i] = vals[i] > 0.0 ? std::sqrt(vals[i]) : 0.0;
    return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

inline double poly3_kernel(const std::vector<double>& x, const std::vector<double>& y) {
    double dot = 0.0;
    for (int i = 0; i < kFeatureDim; ++i) dot += x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
    const double v = dot / static_cast<double>(kFeatureDim) + 1.0;
    return v * v * v;
}

// Unbiased MMD^2 U-statistic over one block of paired samples:
//   1/(m(m-1)) * sum_{i!=j} [k(a_i,a_j) + k(b_i,b_j) - k(a_i,b_j) - k(a_j,b_i)]
// The paired form makes the self-distance of identical sets exactly zero.
inline double mmd2_unbiased(const std::vector<std::vector<double>>& a, std::size_t a0,
                            const std::vector<std::vector<double>>& b, std::size_t b0,
                            std::size_t m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            acc += poly3_kernel(a[a0 + i], a[a0 + j]) + poly3_kernel(b[b0 + i], b[b0 + j]) -
                   poly3_kernel(a[a0 + i], b[b0 + j]) - poly3_kernel(a[a0 + j], b[b0 + i]);
        }
    const double md = static_cast<double>(m);
    return acc / (md * (md - 1.0));
}

}  // namespace detail

struct FidKid {
    double fid = 0.0;
    double kid = 0.0;
};

// FID: Frechet distance between Gaussian feature fits. KID: unbiased MMD^2
// with kernel (x.y/d + 1)^3, averaged over consecutive blocks of at most
// `block_size` (one block at these set sizes, matching the O(n^2) sum).
inline FidKid fid_kid(const std::vector<Tensor>& set_a, const std::vector<Tensor>& set_b,
                      const FeatureExtractor& extractor, std::size_t block_size = 1024) {
    if (set_a.size() < 16 || set_b.size() < 16)
        throw ParamError("fid_kid needs at least 16 images per set");
    std::vector<std::vector<double>> fa, fb;
    fa.reserve(set_a.size());
    fb.reserve(set_b.size());
    for (const auto& img : set_a) fa.push_back(extractor.features(img));
    for (const auto& img : set_b) fb.push_back(extractor.features(img));

    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    detail::mean_cov(fa, mu_a, cov_a);
    detail::mean_cov(fb, mu_b, cov_b);

    const Eigen::MatrixXd s = detail::psd_sqrt(cov_a);
    const Eigen::MatrixXd inner = s * cov_b * s;
    const Eigen::MatrixXd sqrt_inner = detail::psd_sqrt(inner);
    const double fid = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() -
                       2.0 * sqrt_inner.trace();

    // the paired U-statistic needs equal counts; extra samples are dropped
    const std::size_t n = std::min(fa.size(), fb.size());
    const std::size_t blocks = std::max<std::size_t>(1, (n + block_size - 1) / block_size);
    double kid = 0.0;
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        const std::size_t lo = blk * n / blocks, hi = (blk + 1) * n / blocks;
        kid += detail::mmd2_unbiased(fa, lo, fb, lo, hi - lo);
    }
    kid /= static_cast<double>(blocks);
    return {fid, kid};
}

// ---- silhouettes and masked error ----

// foreground = any pixel whose brightest channel exceeds the threshold
template <typename T>
double silhouette_iou(const TensorT<T>& a, const TensorT<T>& b, double threshold = 0.1) {
    require_same_shape(a, b, "silhouette_iou inputs");
    const int h = a.dim(1), w = a.dim(2);
    std::size_t inter = 0, uni = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool fa = std::max({a.at(0, y, x), a.at(1, y, x), a.at(2, y, x)}) > threshold;
            const bool fb = std::max({b.at(0, y, x), b.at(1, y, x), b.at(2, y, x)}) > threshold;
            inter += fa && fb;
            uni += fa || fb;
        }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

// MSE over ground-truth foreground pixels (those differing from `background`)
template <typename T>
double masked_mse(const TensorT<T>& out, const TensorT<T>& gt, Rgb background) {
    require_same_shape(out, gt, "masked_mse inputs");
    const int h = gt.dim(1), w = gt.dim(2);
    double sum = 0.0;
    std::size_t n = 0;
    const float bg[3] = {background.r, background.g, background.b};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool fg = false;
            for (int c = 0; c < 3; ++c)
                if (std::abs(static_cast<double>(gt.at(c, y, x)) - bg[c]) > 1e-6) fg = true;
            if (!fg) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = static_cast<double>(out.at(c, y, x)) - gt.at(c, y, x);
                sum += d * d;
                ++n;
            }
        }
    return n ? sum / static_cast<double>(n) : 0.0;
}

// ---- run evaluation ----

enum class EvalMode { paired, unpaired, tryoff, multipose };

inline const char* eval_mode_name(EvalMode m) {
    switch (m) {
        case EvalMode::paired: return "paired";
        case EvalMode::unpaired: return "unpaired";
        case EvalMode::tryoff: return "tryoff";
        case EvalMode::multipose: return "multipose";
    }
    return "?";
}

inline EvalMode eval_mode_from_name(const std::string& s) {
    for (EvalMode m : {EvalMode::paired, EvalMode::unpaired, EvalMode::tryoff, EvalMode::multipose})
        if (s == eval_mode_name(m)) return m;
    throw ValidationError("unknown eval mode '" + s + "'");
}

struct EvalReport {
    std::string mode;
    int count = 0;
    std::map<std::string, double> summary;
    std::vector<std::pair<std::string, std::map<std::string, double>>> per_record;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["mode"] = mode;
        j["count"] = count;
        j["metrics"] = summary;
        auto arr = nlohmann::ordered_json::array();
        for (const auto& [id, m] : per_record) {
            nlohmann::ordered_json rj{{"id", id}};
            for (const auto& [k, v] : m) rj[k] = v;
            arr.push_back(std::move(rj));
        }
        j["per_record"] = std::move(arr);
        return j;
    }

    std::string to_markdown() const {
        std::string md = "# Evaluation report: " + mode + "\n\n";
        md += "records: " + std::to_string(count) + "\n\n";
        md += "| metric | value |\n|---|---|\n";
        for (const auto& [k, v] : summary) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.6f", v);
            md += "| " + k + " | " + buf + " |\n";
        }
        return md;
    }
};

// Scores a results directory ({id}.png per test record) against the dataset's
// exact ground truth and writes report.json + report.md next to the results.
inline EvalReport evaluate_run(const std::string& results_dir, const DatasetIndex& index,
                               EvalMode mode, const FeatureExtractor& extractor) {
    namespace fs = std::filesystem;
    auto tests = index.split_records("test");
    if (tests.empty()) throw ValidationError("dataset has no test records");

    std::vector<std::string> missing;
    for (const auto* r : tests)
        if (!fs::exists(fs::path(results_dir) / (r->id + ".png"))) missing.push_back(r->id);
    if (!missing.empty()) {
        std::string msg = "missing result images:";
        for (const auto& id : missing) msg += " " + id;
        throw IoError(msg);
    }

    EvalReport report;
    report.mode = eval_mode_name(mode);
    report.count = static_cast<int>(tests.size());

    std::vector<Tensor> outputs, gts;
    double sum_ssim = 0, sum_mse = 0, sum_sim = 0, sum_iou_t = 0, sum_iou_s = 0;
    int better_pose = 0;
    for (const auto* r : tests) {
        Tensor out = read_png((fs::path(results_dir) / (r->id + ".png")).string());
        std::map<std::string, double> row;
        Tensor gt;
        switch (mode) {
            case EvalMode::tryoff: gt = read_png(index.resolve(r->garment_path)); break;
            case EvalMode::paired: gt = read_png(index.resolve(r->person_path)); break;
            case EvalMode::unpaired: gt = read_png(index.resolve(r->unpaired_gt_path)); break;
            case EvalMode::multipose: gt = read_png(index.resolve(r->person2_gt_path)); break;
        }
        if (mode == EvalMode::tryoff || mode == EvalMode::paired) {
            row["ssim"] = ssim(out, gt);
            row["masked_mse"] = masked_mse(out, gt,
                                           mode == EvalMode::tryoff ? rgb_bytes(255, 255, 255)
                                                                    : rgb_bytes(0, 0, 0));
            sum_ssim += row["ssim"];
            sum_mse += row["masked_mse"];
        }
        if (mode == EvalMode::tryoff || mode == EvalMode::unpaired) {
            row["garment_similarity"] = garment_similarity(out, gt, extractor);
            sum_sim += row["garment_similarity"];
        }
        if (mode == EvalMode::multipose) {
            Tensor src = read_png(index.resolve(r->person_path));
            row["iou_target"] = silhouette_iou(out, gt);
            row["iou_source"] = silhouette_iou(out, src);
            sum_iou_t += row["iou_target"];
            sum_iou_s += row["iou_source"];
            better_pose += row["iou_target"] > row["iou_source"];
        }
        outputs.push_back(std::move(out));
        gts.push_back(std::move(gt));
        report.per_record.emplace_back(r->id, std::move(row));
    }

    const double n = static_cast<double>(tests.size());
    if (mode == EvalMode::tryoff || mode == EvalMode::paired) {
        report.summary["ssim"] = sum_ssim / n;
        report.summary["masked_mse"] = sum_mse / n;
    }
    if (mode == EvalMode::tryoff || mode == EvalMode::unpaired)
        report.summary["garment_similarity"] = sum_sim / n;
    if (mode == EvalMode::multipose) {
        report.summary["iou_target"] = sum_iou_t / n;
        report.summary["iou_source"] = sum_iou_s / n;
        report.summary["target_pose_wins"] = static_cast<double>(better_pose) / n;
    }
    if (outputs.size() >= 16) {
        FidKid fk = fid_kid(outputs, gts, extractor);
        report.summary["fid"] = fk.fid;
        report.summary["kid"] = fk.kid;
    }

    std::ofstream ja(fs::path(results_dir) / "report.json");
    if (!ja) throw IoError("cannot write report.json in " + results_dir);
    ja << report.to_json().dump(1) << "\n";
    std::ofstream md(fs::path(results_dir) / "report.md");
    if (!md) throw IoError("cannot write report.md in " + results_dir);
    md << report.to_markdown();
    return report;
}

}  // namespace omfa
