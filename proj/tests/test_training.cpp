#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "pargraph/synth.hpp"
#include "pargraph/training.hpp"

using namespace pargraph;
namespace fs = std::filesystem;

namespace {

constexpr double kLn2 = 0.6931471805599453;

// Two subjects standing together in one group; anchors well inside the
// distance-mask radius.
FrameAnnotation pair_frame(int feature_dim) {
    FrameAnnotation f;
    f.frame_id = 0;
    f.image_width = 400;
    f.image_height = 300;
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g;
    for (int u = 0; u < 2; ++u) {
        SubjectAnnotation s;
        s.id = u + 1;
        s.bbox = {150.0 + 12.0 * u, 100.0, 30.0, 80.0};
        s.feature.resize(std::size_t(feature_dim));
        for (double& v : s.feature) v = g(rng);
        s.actions = {u};
        f.subjects.push_back(std::move(s));
    }
    GroupAnnotation grp;
    grp.members = {1, 2};
    grp.activities = {2};
    f.groups = {grp};
    f.global_activities = {3};
    return f;
}

void zero_params(ModelParams& p) {
    for (const NamedTensor& nt : named_tensors(p))
        std::fill(nt.tensor->data.begin(), nt.tensor->data.end(), 0.0);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& n) const { return (path / n).string(); }
};

}  // namespace

TEST_CASE("zero-initialized model sits at the ln 2 loss plateau") {
    const FrameAnnotation f = pair_frame(6);
    const LabelVocab vocab = LabelVocab::make_default();
    ModelParams p = make_model(ModelDims::from_vocab(vocab, 6), 1);
    zero_params(p);

    TrainConfig cfg;
    cfg.ablations.no_dbreve = true;  // relation = edge affinity alone
    const LossBreakdown lb = total_loss(p, f, cfg);

    // All heads emit sigmoid(0) = 0.5, and with zero edge logits the two
    // subjects split affinity evenly, so the co-member relation entry is 0.5.
    CHECK(lb.individual == doctest::Approx(kLn2).epsilon(1e-9));
    CHECK(lb.social == doctest::Approx(kLn2).epsilon(1e-9));
    CHECK(lb.global_act == doctest::Approx(kLn2).epsilon(1e-9));
    CHECK(lb.relation == doctest::Approx(kLn2).epsilon(1e-9));
    CHECK(lb.total == doctest::Approx(4 * kLn2).epsilon(1e-9));

    SUBCASE("loss weights scale the total but not the components") {
        TrainConfig wcfg = cfg;
        wcfg.w_relation = 0.25;
        wcfg.w_social = 2.0;
        const LossBreakdown wb = total_loss(p, f, wcfg);
        CHECK(wb.relation == doctest::Approx(kLn2).epsilon(1e-9));
        CHECK(wb.total ==
              doctest::Approx((1 + 2 + 1 + 0.25) * kLn2).epsilon(1e-9));
    }

    SUBCASE("frames without real groups drop the social term") {
        FrameAnnotation solo = f;
        solo.groups.clear();
        const LossBreakdown sb = total_loss(p, solo, cfg);
        CHECK(sb.social == 0.0);
        CHECK(sb.total == doctest::Approx(3 * kLn2).epsilon(1e-9));
    }
}

TEST_CASE("relation loss arithmetic on a fused entry") {
    // E(0,1) = 0.4 fused with D = 1.25 at lambda = 1/2 gives R(0,1) = 0.54499;
    // against a co-membership target of 1 the off-diagonal BCE is -ln R(0,1).
    Tensor2 e(2, 2);
    e(0, 0) = 0.6, e(0, 1) = 0.4;
    e(1, 0) = 0.4, e(1, 1) = 0.6;
    Tensor2 d(2, 2, 0.0);
    d(0, 1) = d(1, 0) = 1.25;

    ad::Tape t;
    const ad::Var r = relation_matrix(t, t.constant(e), dbreve(d), 0.5, AblationFlags{});
    Tensor2 target(2, 2, 1.0);
    const Tensor2 mask = offdiag_mask(2);
    const ad::Var ld = t.bce_mean(r, target, &mask);
    CHECK(t.scalar(ld) == doctest::Approx(0.6069928964024833).epsilon(1e-12));
}

TEST_CASE("total loss ignores subject ordering") {
    SynthConfig scfg;
    scfg.n_subjects = 6;
    scfg.n_groups = 2;
    scfg.feature_dim = 5;
    scfg.noise_sigma = 0.3;
    const FrameAnnotation f = synth_generate(scfg, 17).front();

    FrameAnnotation shuffled = f;
    std::mt19937_64 rng(2);
    std::shuffle(shuffled.subjects.begin(), shuffled.subjects.end(), rng);

    const LabelVocab vocab = LabelVocab::make_default();
    const ModelParams p = make_model(ModelDims::from_vocab(vocab, 5), 3);
    TrainConfig cfg;
    const LossBreakdown a = total_loss(p, f, cfg);
    const LossBreakdown b = total_loss(p, shuffled, cfg);
    CHECK(a.total == doctest::Approx(b.total).epsilon(1e-9));
    CHECK(a.individual == doctest::Approx(b.individual).epsilon(1e-9));
    CHECK(a.social == doctest::Approx(b.social).epsilon(1e-9));
    CHECK(a.relation == doctest::Approx(b.relation).epsilon(1e-9));
}

TEST_CASE("every parameter's gradient survives a finite-difference audit") {
    SynthConfig scfg;
    scfg.n_subjects = 5;
    scfg.n_groups = 2;
    scfg.feature_dim = 4;
    scfg.noise_sigma = 0.2;
    const LabelVocab vocab = LabelVocab::make_default(6, 4, 3);
    scfg.vocab = vocab;
    const FrameAnnotation frame = synth_generate(scfg, 23).front();

    ModelParams model = make_model(ModelDims::from_vocab(vocab, 4), 11);
    TrainConfig cfg;

    std::vector<NamedTensor> named = named_tensors(model);
    std::vector<Tensor2> base;
    for (const NamedTensor& nt : named) base.push_back(*nt.tensor);

    auto run = [&](const std::vector<Tensor2>& ps, std::vector<Tensor2>* grads) {
        ModelParams m = model;
        std::vector<NamedTensor> slots = named_tensors(m);
        for (std::size_t i = 0; i < slots.size(); ++i) *slots[i].tensor = ps[i];
        ad::Tape t;
        const ModelVars v = bind_model(t, m);
        const ad::Var loss = frame_loss(t, m, v, frame, cfg);
        if (grads) {
            t.backward(loss);
            grads->clear();
            for (ad::Var leaf : model_leaves(m, v)) grads->push_back(t.grad(leaf));
        }
        return t.scalar(loss);
    };

    std::vector<Tensor2> grads;
    run(base, &grads);
    REQUIRE(grads.size() == base.size());
    // eps 1e-4: some parameters sit on dead paths (zero true gradient), where a
    // smaller step just divides loss rounding noise by 2*eps and trips the
    // relative floor. At this step size the dead entries evaluate bit-identical.
    const double err = finite_diff_check(
        [&](const std::vector<Tensor2>& ps) { return run(ps, nullptr); }, base, grads, 1e-4);
    CHECK(err < 1e-4);
}

TEST_CASE("training mechanics") {
    SynthConfig scfg;
    scfg.n_frames = 6;
    scfg.n_subjects = 5;
    scfg.n_groups = 2;
    scfg.feature_dim = 4;
    const std::vector<FrameAnnotation> data = synth_generate(scfg, 5);

    SUBCASE("zero learning rate leaves the parameters at initialization") {
        TrainConfig cfg;
        cfg.learning_rate = 0.0;
        cfg.epochs = 2;
        cfg.seed = 9;
        TrainResult r = train(data, cfg);
        ModelParams fresh = make_model(ModelDims::from_vocab(LabelVocab::make_default(), 4), 9);
        const std::vector<NamedTensor> got = named_tensors(r.params);
        const std::vector<NamedTensor> want = named_tensors(fresh);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].name == want[i].name);
            CHECK(got[i].tensor->data == want[i].tensor->data);
        }
        CHECK(r.epoch_loss.size() == 2);
        CHECK(r.epoch_loss[0] == doctest::Approx(r.epoch_loss[1]).epsilon(1e-12));
    }

    SUBCASE("the same seed reproduces the loss trace exactly") {
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.epochs = 3;
        cfg.seed = 4;
        const TrainResult a = train(data, cfg);
        const TrainResult b = train(data, cfg);
        CHECK(a.epoch_loss == b.epoch_loss);
        CHECK(a.adam.step == b.adam.step);
    }

    SUBCASE("loss drops over the first epochs, one stumble allowed") {
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.epochs = 5;
        cfg.seed = 1;
        const TrainResult r = train(data, cfg);
        REQUIRE(r.epoch_loss.size() == 5);
        int violations = 0;
        for (std::size_t i = 1; i < r.epoch_loss.size(); ++i)
            if (r.epoch_loss[i] >= r.epoch_loss[i - 1]) ++violations;
        CHECK(violations <= 1);
        CHECK(r.epoch_loss.back() < r.epoch_loss.front());
    }

    SUBCASE("live trace survives to the caller") {
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.epochs = 2;
        cfg.seed = 4;
        std::vector<double> live;
        const TrainResult r = train(data, cfg, LabelVocab::make_default(), &live);
        CHECK(live == r.epoch_loss);
    }
}

TEST_CASE("a separable frame can be memorized") {
    const FrameAnnotation f = pair_frame(32);
    TrainConfig cfg;
    cfg.learning_rate = 5e-3;
    cfg.epochs = 500;  // one frame per epoch = 500 update steps
    cfg.batch_size = 4;
    cfg.seed = 2;
    const TrainResult r = train({f}, cfg);
    CHECK(r.epoch_loss.back() < 0.05);
}

TEST_CASE("inference decodes labels, groups and the relation") {
    const LabelVocab vocab = LabelVocab::make_default();
    const ModelParams p = make_model(ModelDims::from_vocab(vocab, 6), 21);
    TrainConfig cfg;

    SUBCASE("one subject: a lone singleton with no social output") {
        FrameAnnotation f = pair_frame(6);
        f.subjects.resize(1);
        f.groups.clear();
        const ParPrediction pred = infer(f, p, cfg);
        CHECK(pred.partition.groups.empty());
        CHECK(pred.partition.singletons == std::vector<int>{0});
        CHECK(pred.actions.size() == 1);
        CHECK(pred.social.empty());
        CHECK(pred.prob_social.rows == 0);
        CHECK(pred.prob_individual.rows == 1);
        CHECK(pred.prob_global.rows == 1);
        CHECK(pred.relation.rows == 1);
        CHECK(pred.relation(0, 0) == 1.0);
    }

    SUBCASE("an extreme threshold silences every label") {
        const FrameAnnotation f = pair_frame(6);
        TrainConfig strict = cfg;
        strict.tau = 1.0 - 1e-9;
        const ParPrediction pred = infer(f, p, strict);
        for (const auto& s : pred.actions) CHECK(s.empty());
        for (const auto& s : pred.social) CHECK(s.empty());
        CHECK(pred.global_activities.empty());
    }

    SUBCASE("a forced partition bypasses clustering") {
        const FrameAnnotation f = pair_frame(6);
        Partition forced;
        forced.groups = {{0, 1}};
        const ParPrediction pred = infer(f, p, cfg, &forced);
        REQUIRE(pred.partition.groups.size() == 1);
        CHECK(pred.partition.groups[0] == std::vector<int>{0, 1});
        CHECK(pred.prob_social.rows == 1);
        CHECK(pred.social.size() == 1);
    }

    SUBCASE("probabilities respect the threshold semantics") {
        const FrameAnnotation f = pair_frame(6);
        const ParPrediction pred = infer(f, p, cfg);
        for (int u = 0; u < pred.prob_individual.rows; ++u)
            for (int j = 0; j < pred.prob_individual.cols; ++j) {
                const bool emitted = pred.actions[std::size_t(u)].count(j) > 0;
                CHECK(emitted == (pred.prob_individual(u, j) > cfg.tau));
            }
    }
}

TEST_CASE("checkpoints round trip exactly") {
    TempDir dir("pargraph_ckpt_test");
    SynthConfig scfg;
    scfg.n_frames = 3;
    scfg.n_subjects = 4;
    scfg.n_groups = 1;
    scfg.feature_dim = 4;
    const std::vector<FrameAnnotation> data = synth_generate(scfg, 8);

    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 2;
    cfg.seed = 13;
    cfg.lambda = 0.35;
    cfg.rho_ratio = 0.3;
    cfg.tau = 0.45;
    cfg.ablations.maxpool_agg = true;
    TrainResult r = train(data, cfg);

    const std::string base = dir.file("model");
    save_checkpoint(base, r.params, r.adam, cfg, cfg.epochs);
    Checkpoint back = load_checkpoint(base);

    const std::vector<NamedTensor> got = named_tensors(back.params);
    std::vector<NamedTensor> want = named_tensors(r.params);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].name == want[i].name);
        CHECK(got[i].tensor->data == want[i].tensor->data);
    }
    CHECK(back.adam.step == r.adam.step);
    REQUIRE(back.adam.m.size() == r.adam.m.size());
    for (std::size_t i = 0; i < back.adam.m.size(); ++i) {
        CHECK(back.adam.m[i].data == r.adam.m[i].data);
        CHECK(back.adam.v[i].data == r.adam.v[i].data);
    }
    CHECK(back.epoch == cfg.epochs);
    CHECK(back.config.lambda == cfg.lambda);
    CHECK(back.config.rho_ratio == cfg.rho_ratio);
    CHECK(back.config.tau == cfg.tau);
    CHECK(back.config.ablations.maxpool_agg);
    CHECK_FALSE(back.config.ablations.no_e);

    SUBCASE("a vocabulary mismatch is refused at load time") {
        CHECK_THROWS_AS(load_checkpoint(base, LabelVocab::make_default(5, 3, 2)), DataError);
    }

    SUBCASE("resumed training continues deterministically") {
        // Same data, same config trained for 2 epochs in one go must match
        // the checkpointed state (train() is a pure function of its inputs).
        TrainResult again = train(data, cfg);
        const std::vector<NamedTensor> w2 = named_tensors(again.params);
        for (std::size_t i = 0; i < w2.size(); ++i)
            CHECK(w2[i].tensor->data == want[i].tensor->data);
    }
}
