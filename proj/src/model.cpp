#include "pargraph/model.hpp"

#include <cmath>

namespace pargraph {

namespace {

MlpSpec linear_spec(int d) { return {{d, d}, HiddenActivation::ReLU, OutputActivation::None, true}; }

// Right-hand side of a bilinear row-softmax pair: its bias would shift every
// logit in a row equally and cancel in the softmax, so it is dropped.
MlpSpec rhs_spec(int d) { return {{d, d}, HiddenActivation::ReLU, OutputActivation::None, false}; }

MlpSpec head_spec(std::vector<int> dims) {
    return {std::move(dims), HiddenActivation::ReLU, OutputActivation::Sigmoid, true};
}

// One place defines the tensor order; binding and persistence both follow it.
template <typename Mlp, typename Fn>
void visit(Mlp& f1, Mlp& f2, Mlp& fn, Mlp& pool_a, Mlp& pool_b, Mlp& gpool_a, Mlp& gpool_b,
           Mlp& fi, Mlp& fp, Mlp& fg, bool separate_global_pool, Fn&& visit_mlp) {
    visit_mlp("f1", f1);
    visit_mlp("f2", f2);
    visit_mlp("fn", fn);
    visit_mlp("pool_a", pool_a);
    visit_mlp("pool_b", pool_b);
    if (separate_global_pool) {
        visit_mlp("gpool_a", gpool_a);
        visit_mlp("gpool_b", gpool_b);
    }
    visit_mlp("fi", fi);
    visit_mlp("fp", fp);
    visit_mlp("fg", fg);
}

template <typename Fn>
void visit_params(ModelParams& p, Fn&& visit_mlp) {
    visit(p.f1, p.f2, p.fn, p.pool_a, p.pool_b, p.gpool_a, p.gpool_b, p.fi, p.fp, p.fg,
          p.separate_global_pool, visit_mlp);
}

}  // namespace

ModelParams make_model(const ModelDims& dims, std::uint64_t seed, bool separate_global_pool) {
    const int d = dims.feature_dim;
    ModelParams p;
    p.dims = dims;
    p.separate_global_pool = separate_global_pool;
    p.f1 = init_mlp(linear_spec(d), seed + 1);
    p.f2 = init_mlp(rhs_spec(d), seed + 2);
    p.fn = init_mlp(linear_spec(d), seed + 3);
    p.pool_a = init_mlp(linear_spec(d), seed + 4);
    p.pool_b = init_mlp(rhs_spec(d), seed + 5);
    if (separate_global_pool) {
        p.gpool_a = init_mlp(linear_spec(d), seed + 6);
        p.gpool_b = init_mlp(rhs_spec(d), seed + 7);
    }
    p.fi = init_mlp(head_spec({2 * d, d, d, dims.n_individual}), seed + 8);
    p.fp = init_mlp(head_spec({2 * d, d, d, dims.n_social}), seed + 9);
    p.fg = init_mlp(head_spec({d, d, dims.n_global}), seed + 10);

    // The edge and pooling affinities are bilinear forms, so with unit-variance
    // features their logits start at std ~ sqrt(d) and the row softmaxes
    // saturate before training begins; once saturated the gradients are
    // rounding noise and the relation loss cannot recover. Shrinking each map
    // of a pair by d^-1/4 puts the initial logits at O(1).
    const double temper = std::pow(double(d), -0.25);
    const auto shrink = [temper](MlpParams& m) {
        for (Tensor2& w : m.weights)
            for (double& x : w.data) x *= temper;
    };
    shrink(p.f1);
    shrink(p.f2);
    shrink(p.pool_a);
    shrink(p.pool_b);
    if (separate_global_pool) {
        shrink(p.gpool_a);
        shrink(p.gpool_b);
    }
    return p;
}

std::vector<NamedTensor> named_tensors(ModelParams& p) {
    std::vector<NamedTensor> out;
    visit_params(p, [&](const std::string& name, MlpParams& mlp) {
        for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
            out.push_back({name + ".w" + std::to_string(l), &mlp.weights[l]});
            if (l < mlp.biases.size())
                out.push_back({name + ".b" + std::to_string(l), &mlp.biases[l]});
        }
    });
    return out;
}

ModelVars bind_model(ad::Tape& t, const ModelParams& p) {
    ModelVars v;
    auto& pm = const_cast<ModelParams&>(p);
    visit_params(pm, [&](const std::string& name, MlpParams& mlp) {
        MlpVars* slot = nullptr;
        if (name == "f1") slot = &v.f1;
        else if (name == "f2") slot = &v.f2;
        else if (name == "fn") slot = &v.fn;
        else if (name == "pool_a") slot = &v.pool_a;
        else if (name == "pool_b") slot = &v.pool_b;
        else if (name == "gpool_a") slot = &v.gpool_a;
        else if (name == "gpool_b") slot = &v.gpool_b;
        else if (name == "fi") slot = &v.fi;
        else if (name == "fp") slot = &v.fp;
        else slot = &v.fg;
        *slot = bind_mlp(t, mlp);
    });
    return v;
}

std::vector<ad::Var> model_leaves(const ModelParams& p, const ModelVars& v) {
    std::vector<ad::Var> out;
    auto push_mlp = [&](const MlpVars& mv) {
        for (std::size_t l = 0; l < mv.weights.size(); ++l) {
            out.push_back(mv.weights[l]);
            if (l < mv.biases.size()) out.push_back(mv.biases[l]);
        }
    };
    push_mlp(v.f1);
    push_mlp(v.f2);
    push_mlp(v.fn);
    push_mlp(v.pool_a);
    push_mlp(v.pool_b);
    if (p.separate_global_pool) {
        push_mlp(v.gpool_a);
        push_mlp(v.gpool_b);
    }
    push_mlp(v.fi);
    push_mlp(v.fp);
    push_mlp(v.fg);
    return out;
}

Stage1 forward_stage1(ad::Tape& t, const ModelParams& p, const ModelVars& v,
                      const FrameAnnotation& frame, const PipelineSettings& s) {
    s.ablations.validate();
    const int d = p.dims.feature_dim;
    const Tensor2 f_data = frame.feature_matrix();
    if (f_data.cols != d) throw DataError("forward: feature dim mismatch with model");

    Stage1 out;
    out.features = t.constant(f_data);
    const ad::Var logits = edge_logits(t, out.features, linear_spec(d), v.f1, rhs_spec(d), v.f2);

    const SceneGeometry geom = SceneGeometry::from_frame(frame);
    const Tensor2 dist = spatial_distance_matrix(geom, s.ablations.euclid_dist);
    const Tensor2 mask = distance_mask(dist, s.rho_ratio * geom.image_width);
    const Tensor2 db = dbreve(dist);

    out.e_basic = t.row_softmax(logits);
    out.e_masked = t.row_softmax(logits, &mask);

    if (s.ablations.no_fhat) {
        out.nodes = out.features;
    } else {
        const ad::Var fhat = node_update(t, out.features, out.e_basic, linear_spec(d), v.fn);
        out.nodes = individual_repr(t, out.features, fhat, s.ablations);
    }
    out.relation = relation_matrix(t, out.e_masked, db, s.lambda, s.ablations);
    return out;
}

Stage2 forward_stage2(ad::Tape& t, const ModelParams& p, const ModelVars& v, const Stage1& s1,
                      const Partition& partition, const PipelineSettings& s) {
    const int d = p.dims.feature_dim;
    const MlpSpec lin = linear_spec(d);
    const MlpSpec rhs = rhs_spec(d);
    const AioParamsRef group_pool{&lin, &v.pool_a, &rhs, &v.pool_b};
    const AioParamsRef global_pool = p.separate_global_pool
                                         ? AioParamsRef{&lin, &v.gpool_a, &rhs, &v.gpool_b}
                                         : group_pool;

    Stage2 out;
    out.hierarchy = build_hierarchy(t, s1.nodes, partition, group_pool, global_pool,
                                    s.ablations.maxpool_agg);

    const MlpSpec spec_i = head_spec({2 * d, d, d, p.dims.n_individual});
    const MlpSpec spec_p = head_spec({2 * d, d, d, p.dims.n_social});
    const MlpSpec spec_g = head_spec({d, d, p.dims.n_global});
    out.probs = t2d_readout(t, out.hierarchy, spec_i, v.fi, spec_p, v.fp, spec_g, v.fg,
                            s.ablations);
    return out;
}

}  // namespace pargraph
