#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "pargraph/hierarchy.hpp"

using namespace pargraph;

namespace {

SceneGeometry two_anchor_geometry(double ax0, double ay0, double s0, double ax1, double ay1,
                                  double s1) {
    SceneGeometry g;
    g.anchors = Tensor2(2, 2);
    g.anchors(0, 0) = ax0, g.anchors(0, 1) = ay0;
    g.anchors(1, 0) = ax1, g.anchors(1, 1) = ay1;
    g.areas = {s0, s1};
    g.image_width = 100;
    return g;
}

Tensor2 randt(std::mt19937_64& rng, int r, int c) {
    std::normal_distribution<double> g;
    Tensor2 t(r, c);
    for (double& v : t.data) v = g(rng);
    return t;
}

}  // namespace

TEST_CASE("size-aware spatial distance") {
    SUBCASE("3-4-5 triangle with equal areas") {
        const SceneGeometry g = two_anchor_geometry(0, 0, 8, 3, 4, 8);
        const Tensor2 d = spatial_distance_matrix(g);
        CHECK(d(0, 1) == doctest::Approx(1.25).epsilon(1e-12));
        CHECK(d(1, 0) == doctest::Approx(1.25).epsilon(1e-12));
        CHECK(d(0, 0) == 0.0);
        CHECK(d(1, 1) == 0.0);
    }

    SUBCASE("unequal areas") {
        const SceneGeometry g = two_anchor_geometry(0, 0, 32, 6, 8, 18);
        const Tensor2 d = spatial_distance_matrix(g);
        CHECK(d(0, 1) == doctest::Approx(10.0 / std::sqrt(50.0)).epsilon(1e-12));
        CHECK(d(0, 1) == doctest::Approx(1.414213562373095).epsilon(1e-12));
    }

    SUBCASE("coincident anchors") {
        const SceneGeometry g = two_anchor_geometry(5, 5, 8, 5, 5, 4);
        CHECK(spatial_distance_matrix(g)(0, 1) == 0.0);
    }

    SUBCASE("plain Euclidean variant drops the size scaling") {
        const SceneGeometry g = two_anchor_geometry(0, 0, 8, 3, 4, 8);
        CHECK(spatial_distance_matrix(g, true)(0, 1) == doctest::Approx(5.0).epsilon(1e-12));
    }

    SUBCASE("non-positive area rejected") {
        const SceneGeometry g = two_anchor_geometry(0, 0, 0, 3, 4, 8);
        CHECK_THROWS_AS(spatial_distance_matrix(g), std::invalid_argument);
    }

    SUBCASE("boxes anchored at the bottom-edge midpoint") {
        FrameAnnotation f;
        f.frame_id = 0;
        f.image_width = 100;
        f.image_height = 100;
        SubjectAnnotation s;
        s.id = 1;
        s.bbox = {10, 20, 4, 8};
        s.feature = {0.0};
        f.subjects = {s};
        const SceneGeometry g = SceneGeometry::from_frame(f);
        CHECK(g.anchors(0, 0) == 12.0);
        CHECK(g.anchors(0, 1) == 28.0);
        CHECK(g.areas[0] == 32.0);
        CHECK(g.image_width == 100.0);
    }
}

TEST_CASE("distance mask keeps near pairs and the diagonal") {
    Tensor2 d(2, 2, 0.0);
    d(0, 1) = d(1, 0) = 1.25;
    Tensor2 m = distance_mask(d, 2.0);
    CHECK(m(0, 1) == 0.0);
    CHECK(m(0, 0) == 0.0);

    d(0, 1) = d(1, 0) = 3.0;
    m = distance_mask(d, 2.0);
    CHECK(m(0, 1) == kMaskSentinel);
    CHECK(m(1, 0) == kMaskSentinel);
    CHECK(m(0, 0) == 0.0);  // diagonal survives any radius
    CHECK(m(1, 1) == 0.0);

    m = distance_mask(d, std::numeric_limits<double>::infinity());
    CHECK(m(0, 1) == 0.0);

    SUBCASE("mask pattern is scale invariant when geometry and radius scale together") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> u(0.1, 9.0);
        Tensor2 dd(4, 4, 0.0);
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) dd(i, j) = dd(j, i) = u(rng);
        const double rho = 3.0, k = 7.5;
        Tensor2 scaled = dd;
        for (double& v : scaled.data) v *= k;
        const Tensor2 m1 = distance_mask(dd, rho), m2 = distance_mask(scaled, k * rho);
        CHECK(m1.data == m2.data);
    }
}

TEST_CASE("distance affinity and the fused relation") {
    Tensor2 d(2, 2, 0.0);
    d(0, 1) = d(1, 0) = 1.25;
    const Tensor2 db = dbreve(d);
    CHECK(db(0, 1) == doctest::Approx(0.6899744811276125).epsilon(1e-12));
    CHECK(db(0, 0) == 1.0);

    SUBCASE("half-half fusion") {
        Tensor2 e(2, 2);
        e(0, 0) = 0.6, e(0, 1) = 0.4;
        e(1, 0) = 0.4, e(1, 1) = 0.6;
        ad::Tape t;
        const ad::Var r = relation_matrix(t, t.constant(e), db, 0.5, AblationFlags{});
        CHECK(t.value(r)(0, 1) == doctest::Approx(0.5449872405638063).epsilon(1e-12));
        CHECK(t.value(r)(1, 0) == doctest::Approx(0.5449872405638063).epsilon(1e-12));
        CHECK(t.value(r)(0, 0) == 1.0);
        CHECK(t.value(r)(1, 1) == 1.0);
    }

    SUBCASE("masked-out pair keeps only the distance term") {
        Tensor2 dfar(2, 2, 0.0);
        dfar(0, 1) = dfar(1, 0) = 10.0;
        const Tensor2 dbf = dbreve(dfar);
        CHECK(dbf(0, 1) == doctest::Approx(0.52497918747894).epsilon(1e-12));
        Tensor2 e(2, 2, 0.0);
        e(0, 0) = e(1, 1) = 1.0;  // the pair got masked before the softmax
        ad::Tape t;
        const ad::Var r = relation_matrix(t, t.constant(e), dbf, 0.5, AblationFlags{});
        CHECK(t.value(r)(0, 1) == doctest::Approx(0.26248959373947).epsilon(1e-12));
    }

    SUBCASE("lambda = 1 reduces to symmetrized edge affinity") {
        Tensor2 e(2, 2);
        e(0, 0) = 0.9, e(0, 1) = 0.1;
        e(1, 0) = 0.5, e(1, 1) = 0.5;
        ad::Tape t;
        const ad::Var r = relation_matrix(t, t.constant(e), db, 1.0, AblationFlags{});
        CHECK(t.value(r)(0, 1) == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(t.value(r)(0, 0) == 1.0);
    }

    SUBCASE("single-term ablations") {
        Tensor2 e(2, 2);
        e(0, 0) = 0.9, e(0, 1) = 0.1;
        e(1, 0) = 0.5, e(1, 1) = 0.5;
        ad::Tape t;
        AblationFlags no_dist;
        no_dist.no_dbreve = true;
        const ad::Var r1 = relation_matrix(t, t.constant(e), db, 0.5, no_dist);
        CHECK(t.value(r1)(0, 1) == doctest::Approx(0.3).epsilon(1e-12));

        AblationFlags no_edge;
        no_edge.no_e = true;
        const ad::Var r2 = relation_matrix(t, t.constant(e), db, 0.5, no_edge);
        CHECK(t.value(r2)(0, 1) == doctest::Approx(db(0, 1)).epsilon(1e-12));
        CHECK(t.value(r2)(0, 0) == 1.0);
    }

    SUBCASE("relation entries stay within [0, 1]") {
        std::mt19937_64 rng(9);
        const Tensor2 e = row_softmax(randt(rng, 5, 5));
        Tensor2 dd(5, 5, 0.0);
        std::uniform_real_distribution<double> u(0.05, 20.0);
        for (int i = 0; i < 5; ++i)
            for (int j = i + 1; j < 5; ++j) dd(i, j) = dd(j, i) = u(rng);
        const Tensor2 dbb = dbreve(dd);
        ad::Tape t;
        const ad::Var r = relation_matrix(t, t.constant(e), dbb, 0.5, AblationFlags{});
        const Tensor2& rv = t.value(r);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) {
                CHECK(rv(i, j) >= 0.0);
                CHECK(rv(i, j) <= 1.0);
                CHECK(rv(i, j) == doctest::Approx(rv(j, i)).epsilon(1e-12));
            }
    }
}

namespace {

struct AioFixture {
    MlpSpec spec;
    MlpParams pa, pb;
    AioFixture(int d, bool zero) : spec{{d, d}, HiddenActivation::None, OutputActivation::None} {
        pa = zero ? zero_mlp(spec) : init_mlp(spec, 101);
        pb = zero ? zero_mlp(spec) : init_mlp(spec, 102);
    }
};

}  // namespace

TEST_CASE("attention pooling over member nodes") {
    SUBCASE("single node passes through unchanged") {
        AioFixture fx(3, false);
        ad::Tape t;
        const MlpVars va = bind_mlp(t, fx.pa), vb = bind_mlp(t, fx.pb);
        Tensor2 node(1, 3);
        node(0, 0) = 1.5, node(0, 1) = -2.0, node(0, 2) = 0.25;
        const ad::Var out = aio_aggregate(t, t.constant(node), fx.spec, va, fx.spec, vb, false);
        for (int j = 0; j < 3; ++j) CHECK(t.value(out)(0, j) == doctest::Approx(node(0, j)).epsilon(1e-12));
    }

    SUBCASE("equal logits average the members") {
        AioFixture fx(2, true);
        ad::Tape t;
        const MlpVars va = bind_mlp(t, fx.pa), vb = bind_mlp(t, fx.pb);
        Tensor2 nodes(2, 2, 0.0);
        nodes(0, 0) = 1.0;
        nodes(1, 1) = 1.0;
        const ad::Var out = aio_aggregate(t, t.constant(nodes), fx.spec, va, fx.spec, vb, false);
        CHECK(t.value(out)(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(t.value(out)(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("identical members are a fixed point") {
        AioFixture fx(3, false);
        ad::Tape t;
        const MlpVars va = bind_mlp(t, fx.pa), vb = bind_mlp(t, fx.pb);
        Tensor2 nodes(4, 3);
        for (int i = 0; i < 4; ++i) {
            nodes(i, 0) = 0.7, nodes(i, 1) = -1.1, nodes(i, 2) = 2.2;
        }
        const ad::Var out = aio_aggregate(t, t.constant(nodes), fx.spec, va, fx.spec, vb, false);
        CHECK(t.value(out)(0, 0) == doctest::Approx(0.7).epsilon(1e-9));
        CHECK(t.value(out)(0, 1) == doctest::Approx(-1.1).epsilon(1e-9));
        CHECK(t.value(out)(0, 2) == doctest::Approx(2.2).epsilon(1e-9));
    }

    SUBCASE("output stays inside the coordinate-wise member envelope") {
        std::mt19937_64 rng(55);
        AioFixture fx(4, false);
        for (int trial = 0; trial < 10; ++trial) {
            const Tensor2 nodes = randt(rng, 5, 4);
            ad::Tape t;
            const MlpVars va = bind_mlp(t, fx.pa), vb = bind_mlp(t, fx.pb);
            const ad::Var out = aio_aggregate(t, t.constant(nodes), fx.spec, va, fx.spec, vb, false);
            for (int j = 0; j < 4; ++j) {
                double lo = 1e18, hi = -1e18;
                for (int i = 0; i < 5; ++i) {
                    lo = std::min(lo, nodes(i, j));
                    hi = std::max(hi, nodes(i, j));
                }
                CHECK(t.value(out)(0, j) >= lo - 1e-12);
                CHECK(t.value(out)(0, j) <= hi + 1e-12);
            }
        }
    }

    SUBCASE("max-pool variant takes coordinate-wise maxima") {
        AioFixture fx(2, false);
        ad::Tape t;
        const MlpVars va = bind_mlp(t, fx.pa), vb = bind_mlp(t, fx.pb);
        Tensor2 nodes(2, 2);
        nodes(0, 0) = 1.0, nodes(0, 1) = 5.0;
        nodes(1, 0) = 3.0, nodes(1, 1) = 2.0;
        const ad::Var out = aio_aggregate(t, t.constant(nodes), fx.spec, va, fx.spec, vb, true);
        CHECK(t.value(out)(0, 0) == 3.0);
        CHECK(t.value(out)(0, 1) == 5.0);
    }
}

TEST_CASE("hierarchy construction") {
    AioFixture fx(3, false);

    auto build = [&](ad::Tape& t, const Tensor2& nodes, const Partition& p) {
        const MlpVars va = bind_mlp(t, fx.pa);
        const MlpVars vb = bind_mlp(t, fx.pb);
        AioParamsRef ref{&fx.spec, &va, &fx.spec, &vb};
        return build_hierarchy(t, t.constant(nodes), p, ref, ref, false);
    };

    SUBCASE("all singletons: no group nodes, global over everyone") {
        std::mt19937_64 rng(77);
        const Tensor2 nodes = randt(rng, 3, 3);
        Partition p;
        p.singletons = {0, 1, 2};
        ad::Tape t;
        const NodeHierarchy h = build(t, nodes, p);
        CHECK_FALSE(h.group_nodes.valid());
        CHECK(h.global_node.rows == 1);
        CHECK(h.global_node.cols == 3);
    }

    SUBCASE("one group holding everyone: global equals the group node") {
        std::mt19937_64 rng(78);
        const Tensor2 nodes = randt(rng, 4, 3);
        Partition p;
        p.groups = {{0, 1, 2, 3}};
        ad::Tape t;
        const NodeHierarchy h = build(t, nodes, p);
        REQUIRE(h.group_nodes.valid());
        CHECK(h.group_nodes.rows == 1);
        for (int j = 0; j < 3; ++j)
            CHECK(t.value(h.global_node)(0, j) ==
                  doctest::Approx(t.value(h.group_nodes)(0, j)).epsilon(1e-12));
    }

    SUBCASE("identical features collapse the whole hierarchy to one vector") {
        Tensor2 nodes(3, 3);
        for (int i = 0; i < 3; ++i) {
            nodes(i, 0) = 0.4, nodes(i, 1) = -0.2, nodes(i, 2) = 1.0;
        }
        Partition p;
        p.groups = {{0, 1}};
        p.singletons = {2};
        ad::Tape t;
        const NodeHierarchy h = build(t, nodes, p);
        for (int j = 0; j < 3; ++j) {
            CHECK(t.value(h.group_nodes)(0, j) == doctest::Approx(nodes(0, j)).epsilon(1e-9));
            CHECK(t.value(h.global_node)(0, j) == doctest::Approx(nodes(0, j)).epsilon(1e-9));
        }
    }

    SUBCASE("swapping group order swaps group-node rows and keeps the global node") {
        std::mt19937_64 rng(79);
        const Tensor2 nodes = randt(rng, 5, 3);
        Partition p1, p2;
        p1.groups = {{0, 1}, {2, 3}};
        p1.singletons = {4};
        p2.groups = {{2, 3}, {0, 1}};
        p2.singletons = {4};
        ad::Tape t1, t2;
        const NodeHierarchy h1 = build(t1, nodes, p1);
        const NodeHierarchy h2 = build(t2, nodes, p2);
        for (int j = 0; j < 3; ++j) {
            CHECK(t1.value(h1.group_nodes)(0, j) ==
                  doctest::Approx(t2.value(h2.group_nodes)(1, j)).epsilon(1e-12));
            CHECK(t1.value(h1.group_nodes)(1, j) ==
                  doctest::Approx(t2.value(h2.group_nodes)(0, j)).epsilon(1e-12));
        }
    }

    SUBCASE("overlapping groups rejected") {
        Partition p;
        p.groups = {{0, 1}, {1, 2}};
        CHECK_THROWS_AS(p.validate(3), std::invalid_argument);
    }
}

TEST_CASE("top-down readout") {
    const int d = 3, n_i = 4, n_p = 3, n_g = 2;
    const MlpSpec spec_i{{2 * d, n_i}, HiddenActivation::None, OutputActivation::Sigmoid};
    const MlpSpec spec_p{{2 * d, n_p}, HiddenActivation::None, OutputActivation::Sigmoid};
    const MlpSpec spec_g{{d, n_g}, HiddenActivation::None, OutputActivation::Sigmoid};
    AioFixture fx(d, false);

    auto make_h = [&](ad::Tape& t, const Tensor2& nodes, const Partition& p, MlpVars& va,
                      MlpVars& vb) {
        va = bind_mlp(t, fx.pa);
        vb = bind_mlp(t, fx.pb);
        AioParamsRef ref{&fx.spec, &va, &fx.spec, &vb};
        return build_hierarchy(t, t.constant(nodes), p, ref, ref, false);
    };

    SUBCASE("zero heads emit probability one-half everywhere, with the right shapes") {
        std::mt19937_64 rng(91);
        const Tensor2 nodes = randt(rng, 4, d);
        Partition p;
        p.groups = {{0, 1}, {2, 3}};
        ad::Tape t;
        MlpVars va, vb;
        const NodeHierarchy h = make_h(t, nodes, p, va, vb);
        const MlpParams zi = zero_mlp(spec_i), zp = zero_mlp(spec_p), zg = zero_mlp(spec_g);
        const MlpVars vi = bind_mlp(t, zi), vp = bind_mlp(t, zp), vg = bind_mlp(t, zg);
        const ReadoutProbs out =
            t2d_readout(t, h, spec_i, vi, spec_p, vp, spec_g, vg, AblationFlags{});
        REQUIRE(out.individual.rows == 4);
        REQUIRE(out.individual.cols == n_i);
        REQUIRE(out.social.rows == 2);
        REQUIRE(out.social.cols == n_p);
        REQUIRE(out.global.rows == 1);
        REQUIRE(out.global.cols == n_g);
        for (double v : t.value(out.individual).data) CHECK(v == 0.5);
        for (double v : t.value(out.social).data) CHECK(v == 0.5);
        for (double v : t.value(out.global).data) CHECK(v == 0.5);
    }

    SUBCASE("one subject, no groups: social head yields nothing") {
        Tensor2 nodes(1, d, 0.3);
        Partition p;
        p.singletons = {0};
        ad::Tape t;
        MlpVars va, vb;
        const NodeHierarchy h = make_h(t, nodes, p, va, vb);
        const MlpParams pi = init_mlp(spec_i, 7), pp = init_mlp(spec_p, 8), pg = init_mlp(spec_g, 9);
        const MlpVars vi = bind_mlp(t, pi), vp = bind_mlp(t, pp), vg = bind_mlp(t, pg);
        const ReadoutProbs out =
            t2d_readout(t, h, spec_i, vi, spec_p, vp, spec_g, vg, AblationFlags{});
        CHECK(out.individual.rows == 1);
        CHECK_FALSE(out.social.valid());
        CHECK(out.global.rows == 1);
    }

    SUBCASE("feedback ablation decouples individuals from the global node") {
        std::mt19937_64 rng(92);
        const Tensor2 base = randt(rng, 2, d);
        Partition p;
        p.singletons = {0, 1};
        const MlpParams pi = init_mlp(spec_i, 7), pp = init_mlp(spec_p, 8), pg = init_mlp(spec_g, 9);

        auto readout = [&](const Tensor2& global_value, bool ablate) {
            ad::Tape t;
            MlpVars va, vb;
            NodeHierarchy h = make_h(t, base, p, va, vb);
            h.global_node = t.constant(global_value);  // override the pooled global
            const MlpVars vi = bind_mlp(t, pi), vp = bind_mlp(t, pp), vg = bind_mlp(t, pg);
            AblationFlags flags;
            flags.no_g2i = ablate;
            const ReadoutProbs out =
                t2d_readout(t, h, spec_i, vi, spec_p, vp, spec_g, vg, flags);
            return t.value(out.individual);
        };

        Tensor2 g1(1, d, 0.2), g2(1, d, -1.7);
        const Tensor2 full_1 = readout(g1, false), full_2 = readout(g2, false);
        bool differs = false;
        for (std::size_t i = 0; i < full_1.data.size(); ++i)
            if (full_1.data[i] != full_2.data[i]) differs = true;
        CHECK(differs);  // with feedback on, the global node matters

        const Tensor2 abl_1 = readout(g1, true), abl_2 = readout(g2, true);
        CHECK(abl_1.data == abl_2.data);  // with it off, it cannot
    }
}

TEST_CASE("gradients flow through pooling, relation and readouts") {
    std::mt19937_64 rng(123);
    const int n = 5, d = 3;
    const Tensor2 features = randt(rng, n, d);
    Partition part;
    part.groups = {{0, 1}, {2, 3}};
    part.singletons = {4};

    const MlpSpec pool_spec{{d, d}, HiddenActivation::None, OutputActivation::None};
    const MlpSpec spec_i{{2 * d, 4}, HiddenActivation::ReLU, OutputActivation::Sigmoid};
    const MlpSpec spec_p{{2 * d, 3}, HiddenActivation::None, OutputActivation::Sigmoid};
    const MlpSpec spec_g{{d, 2}, HiddenActivation::None, OutputActivation::Sigmoid};
    const MlpParams pa = init_mlp(pool_spec, 1), pb = init_mlp(pool_spec, 2);
    const MlpParams pi = init_mlp(spec_i, 3), pp = init_mlp(spec_p, 4), pg = init_mlp(spec_g, 5);

    Tensor2 ti(n, 4, 0.0);
    ti(0, 1) = ti(2, 3) = ti(4, 0) = 1.0;
    Tensor2 tp(2, 3, 0.0);
    tp(0, 0) = tp(1, 2) = 1.0;
    Tensor2 tg(1, 2, 0.0);
    tg(0, 1) = 1.0;

    auto run = [&](const std::vector<Tensor2>& ps, std::vector<Tensor2>* grads) {
        MlpParams qa = pa, qb = pb, qi = pi, qp = pp, qg = pg;
        qa.weights[0] = ps[0];
        qb.weights[0] = ps[1];
        qi.weights[0] = ps[2];
        qp.weights[0] = ps[3];
        qg.weights[0] = ps[4];
        ad::Tape t;
        const MlpVars va = bind_mlp(t, qa), vb = bind_mlp(t, qb);
        const MlpVars vi = bind_mlp(t, qi), vp = bind_mlp(t, qp), vg = bind_mlp(t, qg);
        AioParamsRef ref{&pool_spec, &va, &pool_spec, &vb};
        const NodeHierarchy h = build_hierarchy(t, t.constant(features), part, ref, ref, false);
        const ReadoutProbs out =
            t2d_readout(t, h, spec_i, vi, spec_p, vp, spec_g, vg, AblationFlags{});
        const ad::Var loss = t.weighted_sum_scalars(
            {t.bce_mean(out.individual, ti), t.bce_mean(out.social, tp), t.bce_mean(out.global, tg)},
            {1.0, 1.0, 1.0});
        if (grads) {
            t.backward(loss);
            *grads = {t.grad(va.weights[0]), t.grad(vb.weights[0]), t.grad(vi.weights[0]),
                      t.grad(vp.weights[0]), t.grad(vg.weights[0])};
        }
        return t.scalar(loss);
    };

    std::vector<Tensor2> params = {pa.weights[0], pb.weights[0], pi.weights[0], pp.weights[0],
                                   pg.weights[0]};
    std::vector<Tensor2> grads;
    run(params, &grads);
    const double err = finite_diff_check(
        [&](const std::vector<Tensor2>& ps) { return run(ps, nullptr); }, params, grads, 1e-6);
    CHECK(err < 1e-4);
}
