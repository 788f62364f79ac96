#include "omfa/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "omfa/rng.hpp"

using namespace omfa;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("omfa_train_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    EXPECT_TRUE(in.good()) << path;
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

DenoiserConfig tiny_model() {
    DenoiserConfig cfg;
    cfg.base_channels = 8;
    cfg.depth = 2;
    cfg.time_embed_dim = 16;
    cfg.attention_heads = 2;
    return cfg;
}

// one shared miniature dataset for the suite
const DatasetIndex& mini_dataset() {
    static DatasetIndex idx = [] {
        const std::string dir = temp_dir("data");
        return generate_dataset(70, 2, 1234, dir, 32, 16);
    }();
    return idx;
}

std::vector<const CachedRecord*> make_batch(const std::vector<CachedRecord>& cache, int n) {
    std::vector<const CachedRecord*> out;
    for (int i = 0; i < n; ++i) out.push_back(&cache[static_cast<std::size_t>(i) % cache.size()]);
    return out;
}

std::vector<CachedRecord> cache_all_train(const DatasetIndex& idx, int n) {
    std::vector<CachedRecord> cache;
    auto recs = idx.split_records("train");
    for (int i = 0; i < n && i < static_cast<int>(recs.size()); ++i)
        cache.push_back(cache_record(idx, *recs[static_cast<std::size_t>(i)]));
    return cache;
}

}  // namespace

TEST(TrainStep, FullDropoutRunsUnconditional) {
    auto cache = cache_all_train(mini_dataset(), 8);
    DenoiserT<float> model(tiny_model(), 12);
    TrainConfig cfg;
    cfg.cond_dropout_p = 1.0;
    cfg.task_mix = TaskMix::unified;
    cfg.batch_size = 8;
    auto params = model.init_params(5);
    OptState<float> opt{params.zeros_like(), params.zeros_like(), 0};
    NoiseSchedule sched = make_schedule(100, 1e-4, 0.02);
    std::vector<StepTraceEntry> trace;
    train_step(make_batch(cache, 8), model, params, opt, cfg, sched, Rng(7), &trace);
    ASSERT_EQ(trace.size(), 8u);
    for (const auto& e : trace) {
        EXPECT_FALSE(e.flags.pose);
        EXPECT_FALSE(e.flags.head);
        if (e.task == Task::try_on) {
            EXPECT_TRUE(e.flags.person);  // generation target always visible
            EXPECT_FALSE(e.flags.garment);
        } else {
            EXPECT_TRUE(e.flags.garment);
            EXPECT_FALSE(e.flags.person);
        }
    }
}

TEST(TrainStep, InitialLossNearUnitNoise) {
    // zero-init output head predicts 0, so the masked loss is E[eps^2] ~ 1
    auto cache = cache_all_train(mini_dataset(), 64);
    ASSERT_EQ(cache.size(), 64u);
    DenoiserT<float> model(tiny_model(), 12);
    TrainConfig cfg;
    cfg.batch_size = 64;
    auto params = model.init_params(11);
    OptState<float> opt{params.zeros_like(), params.zeros_like(), 0};
    NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
    StepResult res = train_step(make_batch(cache, 64), model, params, opt, cfg, sched, Rng(3));
    EXPECT_NEAR(res.loss, 1.0, 0.1);
}

TEST(TrainStep, UnifiedNeverMixesMasksWithinRecord) {
    auto cache = cache_all_train(mini_dataset(), 16);
    DenoiserT<float> model(tiny_model(), 12);
    TrainConfig cfg;
    cfg.task_mix = TaskMix::unified;
    auto params = model.init_params(5);
    OptState<float> opt{params.zeros_like(), params.zeros_like(), 0};
    NoiseSchedule sched = make_schedule(50, 1e-4, 0.02);
    std::vector<StepTraceEntry> trace;
    train_step(make_batch(cache, 16), model, params, opt, cfg, sched, Rng(19), &trace);
    int tryon = 0, tryoff = 0;
    for (const auto& e : trace) (e.task == Task::try_on ? tryon : tryoff)++;
    EXPECT_GT(tryon, 0);
    EXPECT_GT(tryoff, 0);
}

TEST(TrainStep, GradientMatchesFiniteDifferencesAtStepOne) {
    // double-precision replica of the step-1 batch loss, frozen draws
    auto cache = cache_all_train(mini_dataset(), 2);
    DenoiserT<double> model(tiny_model(), 12);
    auto params = model.init_params(21);
    Rng jitter(77);
    for (auto& [name, t] : params.arrays)
        for (auto& x : t.v) x += jitter.normal() * 0.02;
    NoiseSchedule sched = make_schedule(200, 1e-4, 0.02);

    struct Frozen {
        Task task;
        CondFlags flags;
        int t;
        JointLatentT<double> zhat;
        TensorT<double> eps;
        ComponentMaskT<double> mask;
    };
    std::vector<Frozen> frozen;
    const Rng step_rng(99);
    for (std::size_t slot = 0; slot < cache.size(); ++slot) {
        Rng rng = step_rng.child(slot + 1);
        TrainConfig cfg;
        const Task task = slot == 0 ? Task::try_on : Task::try_off;
        CondFlags flags = CondFlags::all(true);
        if (task == Task::try_off) flags.head = false;
        const int t = static_cast<int>(rng.below(200));
        auto enc = encode_record<double>(cache[slot]);
        JointLatentT<double> z0 = task == Task::try_on
                                      ? assemble<double>(enc.person, enc.pose, enc.garment, enc.head, task)
                                      : assemble<double>(enc.person, enc.pose, enc.garment, std::nullopt, task);
        auto mask = make_mask<double>(z0.layout, task);
        TensorT<double> eps(z0.data.shape);
        for (auto& x : eps.v) x = rng.normal();
        JointLatentT<double> zhat = z0;
        zhat.data = partial_noise(z0.data, q_sample(z0.data, t, eps, sched), mask);
        frozen.push_back({task, flags, t, std::move(zhat), std::move(eps), std::move(mask)});
    }

    auto batch_loss = [&](const nn::ParamStore<double>& p) {
        double total = 0.0;
        for (const auto& f : frozen)
            total += masked_loss(f.eps, model.forward(f.zhat, f.t, f.flags, p), f.mask);
        return total / static_cast<double>(frozen.size());
    };

    auto grads = params.zeros_like();
    for (const auto& f : frozen) {
        typename DenoiserT<double>::Ctx ctx;
        auto pred = model.forward(f.zhat, f.t, f.flags, params, &ctx);
        auto dpred = masked_loss_grad(f.eps, pred, f.mask);
        for (auto& x : dpred.v) x /= static_cast<double>(frozen.size());
        model.backward(ctx, dpred, params, grads);
    }

    Rng pick(3);
    const char* names[] = {"rb_d0.conv1.w", "attn.qkv.w", "proj.garment.w", "time.w2",
                           "head.person.w", "rb_mid.gain", "up0.w"};
    for (const char* name : names) {
        auto& arr = params.at(name);
        const std::size_t idx = pick.below(arr.numel());
        const double h = 1e-5;
        auto pp = params;
        pp.at(name)[idx] += h;
        auto pm = params;
        pm.at(name)[idx] -= h;
        const double fd = (batch_loss(pp) - batch_loss(pm)) / (2 * h);
        const double an = grads.at(name)[idx];
        EXPECT_NEAR(an, fd, 1e-3 * std::max({1.0, std::abs(fd), std::abs(an)})) << name;
    }
}

TEST(Train, ZeroStepsEqualsInit) {
    const std::string out = temp_dir("zero");
    TrainConfig cfg;
    cfg.total_steps = 0;
    cfg.seed = 31;
    Checkpoint ckpt = train(mini_dataset(), cfg, tiny_model(), ScheduleSpec{100, 1e-4, 0.02}, out);
    DenoiserT<float> model(tiny_model(), 12);
    auto init = model.init_params(31);
    for (const auto& [name, t] : init.arrays) {
        const auto& got = ckpt.params.at(name);
        for (std::size_t i = 0; i < t.numel(); ++i) ASSERT_EQ(t[i], got[i]) << name;
    }
    for (const auto& [name, t] : ckpt.adam_m.arrays)
        for (float x : t.v) ASSERT_EQ(x, 0.f);
    fs::remove_all(out);
}

TEST(Train, DeterministicTrajectoryAndLog) {
    TrainConfig cfg;
    cfg.total_steps = 10;
    cfg.batch_size = 2;
    cfg.seed = 7;
    cfg.learning_rate = 1e-3;
    const std::string o1 = temp_dir("det1"), o2 = temp_dir("det2");
    Checkpoint a = train(mini_dataset(), cfg, tiny_model(), ScheduleSpec{100, 1e-4, 0.02}, o1);
    Checkpoint b = train(mini_dataset(), cfg, tiny_model(), ScheduleSpec{100, 1e-4, 0.02}, o2);
    EXPECT_EQ(slurp(o1 + "/loss_log.jsonl"), slurp(o2 + "/loss_log.jsonl"));
    for (const auto& [name, t] : a.params.arrays) {
        const auto& u = b.params.at(name);
        for (std::size_t i = 0; i < t.numel(); ++i) ASSERT_EQ(t[i], u[i]) << name;
    }
    fs::remove_all(o1);
    fs::remove_all(o2);
}

TEST(Train, UnifiedLogsBothTaskLosses) {
    TrainConfig cfg;
    cfg.total_steps = 12;
    cfg.batch_size = 4;
    cfg.seed = 5;
    cfg.task_mix = TaskMix::unified;
    const std::string out = temp_dir("log");
    train(mini_dataset(), cfg, tiny_model(), ScheduleSpec{100, 1e-4, 0.02}, out);
    const std::string log = slurp(out + "/loss_log.jsonl");
    EXPECT_NE(log.find("loss_tryon"), std::string::npos);
    EXPECT_NE(log.find("loss_tryoff"), std::string::npos);
    fs::remove_all(out);
}

TEST(Checkpoint, SaveLoadSaveByteIdentical) {
    TrainConfig cfg;
    cfg.total_steps = 3;
    cfg.batch_size = 2;
    cfg.seed = 17;
    const std::string out = temp_dir("ckpt");
    Checkpoint ckpt = train(mini_dataset(), cfg, tiny_model(), ScheduleSpec{100, 1e-4, 0.02}, out);

    const std::string d1 = temp_dir("save1"), d2 = temp_dir("save2");
    save_checkpoint(ckpt, d1);
    Checkpoint loaded = load_checkpoint(d1);
    save_checkpoint(loaded, d2);
    std::vector<std::string> rels;
    for (const auto& e : fs::recursive_directory_iterator(d1))
        if (e.is_regular_file()) rels.push_back(fs::relative(e.path(), d1).string());
    std::sort(rels.begin(), rels.end());
    ASSERT_FALSE(rels.empty());
    for (const auto& rel : rels)
        ASSERT_EQ(slurp((fs::path(d1) / rel).string()), slurp((fs::path(d2) / rel).string())) << rel;

    // forward outputs reproduce bit-exactly after reload
    auto cache = cache_all_train(mini_dataset(), 1);
    auto enc = encode_record<float>(cache[0]);
    auto joint = assemble<float>(enc.person, enc.pose, enc.garment, enc.head, Task::try_on);
    DenoiserT<float> model(ckpt.model, 12);
    auto before = model.forward(joint, 42, CondFlags::all(true), ckpt.params);
    auto after = model.forward(joint, 42, CondFlags::all(true), loaded.params);
    for (std::size_t i = 0; i < before.numel(); ++i) ASSERT_EQ(before[i], after[i]);

    fs::remove_all(out);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST(Checkpoint, CorruptedArrayLengthNamesTheArray) {
    TrainConfig cfg;
    cfg.total_steps = 0;
    const std::string out = temp_dir("corrupt");
    train(mini_dataset(), cfg, tiny_model(), ScheduleSpec{100, 1e-4, 0.02}, out);
    const std::string ck = out + "/checkpoint";
    // truncate one array file
    const std::string victim = ck + "/arrays/param/rb_d0.conv1.w.f32";
    ASSERT_TRUE(fs::exists(victim));
    fs::resize_file(victim, 8);
    try {
        load_checkpoint(ck);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("rb_d0.conv1.w"), std::string::npos);
    }
    fs::remove_all(out);
}

TEST(Checkpoint, MissingArrayIsAnError) {
    TrainConfig cfg;
    cfg.total_steps = 0;
    const std::string out = temp_dir("missing");
    train(mini_dataset(), cfg, tiny_model(), ScheduleSpec{100, 1e-4, 0.02}, out);
    const std::string ck = out + "/checkpoint";
    fs::remove(ck + "/arrays/param/attn.qkv.w.f32");
    EXPECT_THROW(load_checkpoint(ck), IoError);
    fs::remove_all(out);
}

TEST(TrainConfig, Validation) {
    TrainConfig cfg;
    cfg.batch_size = 0;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    cfg.cond_dropout_p = 1.5;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0;
    EXPECT_THROW(cfg.validate(), ValidationError);
}
