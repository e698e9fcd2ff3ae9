#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "pargraph/graph_net.hpp"

using namespace pargraph;

namespace {

MlpParams identity_mlp(int d) {
    MlpParams p = zero_mlp({{d, d}, HiddenActivation::None, OutputActivation::None});
    for (int i = 0; i < d; ++i) p.weights[0](i, i) = 1.0;
    return p;
}

Tensor2 randt(std::mt19937_64& rng, int r, int c) {
    std::normal_distribution<double> g;
    Tensor2 t(r, c);
    for (double& v : t.data) v = g(rng);
    return t;
}

}  // namespace

TEST_CASE("edge affinity") {
    const MlpParams id2 = identity_mlp(2);

    SUBCASE("single subject is its own full neighborhood") {
        Tensor2 f(1, 2);
        f(0, 0) = 3.0, f(0, 1) = -1.0;
        const AffinityMatrix a = edge_affinity(f, id2, id2);
        CHECK(a.e.rows == 1);
        CHECK(a.e(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("inner-product logits through the softmax") {
        // Row 0 logits come out as [ln 2, 0].
        Tensor2 f(2, 2, 0.0);
        f(0, 0) = std::sqrt(std::log(2.0));
        f(1, 1) = 1.0;
        const AffinityMatrix a = edge_affinity(f, id2, id2);
        CHECK(a.logits(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(a.logits(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(a.e(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(a.e(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }

    SUBCASE("rows are stochastic for random inputs") {
        std::mt19937_64 rng(11);
        const Tensor2 f = randt(rng, 6, 4);
        const MlpParams m1 = init_mlp({{4, 4}, HiddenActivation::None, OutputActivation::None}, 1);
        const MlpParams m2 = init_mlp({{4, 4}, HiddenActivation::None, OutputActivation::None}, 2);
        const AffinityMatrix a = edge_affinity(f, m1, m2);
        for (int i = 0; i < 6; ++i) {
            double s = 0;
            for (int j = 0; j < 6; ++j) {
                CHECK(a.e(i, j) >= 0.0);
                s += a.e(i, j);
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        }
    }

    SUBCASE("all-zero additive mask changes nothing") {
        std::mt19937_64 rng(12);
        const Tensor2 f = randt(rng, 4, 2);
        Tensor2 zero_mask(4, 4, 0.0);
        const AffinityMatrix plain = edge_affinity(f, id2, id2);
        const AffinityMatrix masked = edge_affinity(f, id2, id2, &zero_mask);
        CHECK(plain.e.data == masked.e.data);
    }

    SUBCASE("masking a pair removes its weight entirely") {
        std::mt19937_64 rng(13);
        const Tensor2 f = randt(rng, 3, 2);
        Tensor2 mask(3, 3, 0.0);
        mask(0, 2) = kMaskSentinel;
        const AffinityMatrix a = edge_affinity(f, id2, id2, &mask);
        CHECK(a.e(0, 2) == 0.0);
        CHECK(a.e(0, 0) + a.e(0, 1) == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("mask shape mismatch rejected") {
        Tensor2 f(2, 2, 1.0);
        Tensor2 mask(3, 3, 0.0);
        CHECK_THROWS_AS(edge_affinity(f, id2, id2, &mask), std::invalid_argument);
    }
}

TEST_CASE("node update and residual") {
    const MlpParams id2 = identity_mlp(2);

    SUBCASE("identity affinity is a no-op") {
        Tensor2 f(2, 2);
        f(0, 0) = 1.0, f(0, 1) = 2.0, f(1, 0) = -3.0, f(1, 1) = 4.0;
        Tensor2 e(2, 2, 0.0);
        e(0, 0) = e(1, 1) = 1.0;
        CHECK(node_update(f, e, id2).data == f.data);
    }

    SUBCASE("uniform affinity averages everyone") {
        Tensor2 f(3, 2);
        f(0, 0) = 3.0, f(1, 0) = 6.0, f(2, 0) = 0.0;
        f(0, 1) = 1.0, f(1, 1) = 1.0, f(2, 1) = 4.0;
        Tensor2 e(3, 3, 1.0 / 3.0);
        const Tensor2 out = node_update(f, e, id2);
        for (int i = 0; i < 3; ++i) {
            CHECK(out(i, 0) == doctest::Approx(3.0).epsilon(1e-12));
            CHECK(out(i, 1) == doctest::Approx(2.0).epsilon(1e-12));
        }
    }

    SUBCASE("weighted mixing") {
        Tensor2 f(2, 2, 0.0);
        f(0, 0) = 3.0;
        f(1, 1) = 3.0;
        Tensor2 e(2, 2);
        e(0, 0) = 2.0 / 3.0, e(0, 1) = 1.0 / 3.0;
        e(1, 0) = 1.0 / 3.0, e(1, 1) = 2.0 / 3.0;
        const Tensor2 out = node_update(f, e, id2);
        CHECK(out(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(out(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("residual addition") {
        Tensor2 f(1, 2), fh(1, 2);
        f(0, 0) = 1.0, f(0, 1) = 2.0;
        fh(0, 0) = 3.0, fh(0, 1) = 4.0;
        const Tensor2 n = individual_repr(f, fh);
        CHECK(n(0, 0) == 4.0);
        CHECK(n(0, 1) == 6.0);
    }

    SUBCASE("dim mismatch rejected") {
        Tensor2 f(2, 2, 1.0), e(3, 3, 0.5);
        CHECK_THROWS_AS(node_update(f, e, id2), std::invalid_argument);
    }
}

TEST_CASE("residual ablations on the tape") {
    Tensor2 f(1, 2), fh(1, 2);
    f(0, 0) = 1.0, f(0, 1) = 2.0;
    fh(0, 0) = 3.0, fh(0, 1) = 4.0;
    ad::Tape t;
    const ad::Var vf = t.constant(f), vfh = t.constant(fh);

    AblationFlags flags;
    const Tensor2 full = t.value(individual_repr(t, vf, vfh, flags));
    CHECK(full(0, 0) == 4.0);

    flags.no_residual_f = true;
    CHECK(t.value(individual_repr(t, vf, vfh, flags)).data == fh.data);

    flags = {};
    flags.no_fhat = true;
    CHECK(t.value(individual_repr(t, vf, vfh, flags)).data == f.data);

    flags.no_residual_f = true;  // both dropped: nothing left to represent
    CHECK_THROWS_AS(flags.validate(), std::invalid_argument);

    AblationFlags both_rel;
    both_rel.no_dbreve = true;
    both_rel.no_e = true;
    CHECK_THROWS_AS(both_rel.validate(), std::invalid_argument);
}

TEST_CASE("permuting subjects permutes affinities and representations") {
    std::mt19937_64 rng(21);
    const int n = 5, d = 3;
    const Tensor2 f = randt(rng, n, d);
    const MlpParams m1 = init_mlp({{d, d}, HiddenActivation::ReLU, OutputActivation::None}, 31);
    const MlpParams m2 = init_mlp({{d, d}, HiddenActivation::ReLU, OutputActivation::None}, 32);
    const MlpParams mn = init_mlp({{d, d}, HiddenActivation::ReLU, OutputActivation::None}, 33);

    const std::vector<int> perm = {3, 0, 4, 1, 2};
    Tensor2 fp(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) fp(i, j) = f(perm[std::size_t(i)], j);

    const AffinityMatrix a = edge_affinity(f, m1, m2);
    const AffinityMatrix ap = edge_affinity(fp, m1, m2);
    const Tensor2 rep = individual_repr(f, node_update(f, a.e, mn));
    const Tensor2 repp = individual_repr(fp, node_update(fp, ap.e, mn));

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            CHECK(ap.e(i, j) ==
                  doctest::Approx(a.e(perm[std::size_t(i)], perm[std::size_t(j)])).epsilon(1e-12));
        for (int j = 0; j < d; ++j)
            CHECK(repp(i, j) == doctest::Approx(rep(perm[std::size_t(i)], j)).epsilon(1e-12));
    }
}

TEST_CASE("tape and plain forward passes agree; gradients check out") {
    std::mt19937_64 rng(41);
    const int n = 4, d = 3;
    const Tensor2 f = randt(rng, n, d);
    const MlpSpec spec{{d, d}, HiddenActivation::None, OutputActivation::None};
    const MlpParams m1 = init_mlp(spec, 51), m2 = init_mlp(spec, 52), mn = init_mlp(spec, 53);
    Tensor2 target(n, d, 0.0);
    target(0, 1) = target(2, 2) = target(3, 0) = 1.0;

    auto run = [&](const std::vector<Tensor2>& p, std::vector<Tensor2>* grads,
                   Tensor2* rep_out = nullptr) {
        MlpParams q1 = m1, q2 = m2, qn = mn;
        q1.weights[0] = p[0], q2.weights[0] = p[1], qn.weights[0] = p[2];
        ad::Tape t;
        const MlpVars v1 = bind_mlp(t, q1), v2 = bind_mlp(t, q2), vn = bind_mlp(t, qn);
        const ad::Var vf = t.constant(f);
        const ad::Var logits = edge_logits(t, vf, spec, v1, spec, v2);
        const ad::Var e = t.row_softmax(logits);
        const ad::Var fhat = node_update(t, vf, e, spec, vn);
        const ad::Var rep = individual_repr(t, vf, fhat, AblationFlags{});
        const ad::Var probs = t.sigmoid(rep);
        const ad::Var loss = t.bce_mean(probs, target);
        if (rep_out) *rep_out = t.value(rep);
        if (grads) {
            t.backward(loss);
            *grads = {t.grad(v1.weights[0]), t.grad(v2.weights[0]), t.grad(vn.weights[0])};
        }
        return t.scalar(loss);
    };

    std::vector<Tensor2> params = {m1.weights[0], m2.weights[0], mn.weights[0]};
    std::vector<Tensor2> grads;
    Tensor2 tape_rep;
    run(params, &grads, &tape_rep);

    const AffinityMatrix a = edge_affinity(f, m1, m2);
    const Tensor2 plain_rep = individual_repr(f, node_update(f, a.e, mn));
    REQUIRE(tape_rep.same_shape(plain_rep));
    for (std::size_t i = 0; i < plain_rep.data.size(); ++i)
        CHECK(tape_rep.data[i] == doctest::Approx(plain_rep.data[i]).epsilon(1e-12));

    const double err = finite_diff_check(
        [&](const std::vector<Tensor2>& p) { return run(p, nullptr); }, params, grads, 1e-6);
    CHECK(err < 1e-4);
}
