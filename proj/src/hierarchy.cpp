#include "pargraph/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pargraph {

SceneGeometry SceneGeometry::from_frame(const FrameAnnotation& frame) {
    SceneGeometry g;
    const int n = frame.n_subjects();
    g.anchors = Tensor2(n, 2);
    g.areas.resize(std::size_t(n));
    g.image_width = double(frame.image_width);
    for (int u = 0; u < n; ++u) {
        const BBox& b = frame.subjects[std::size_t(u)].bbox;
        g.anchors(u, 0) = b.anchor_x();
        g.anchors(u, 1) = b.anchor_y();
        g.areas[std::size_t(u)] = b.area();
    }
    return g;
}

Tensor2 spatial_distance_matrix(const SceneGeometry& g, bool euclid) {
    const int n = g.anchors.rows;
    for (double s : g.areas)
        if (s <= 0) throw std::invalid_argument("spatial_distance_matrix: nonpositive box area");
    Tensor2 d(n, n);
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) {
            double dist = std::hypot(g.anchors(u, 0) - g.anchors(v, 0),
                                     g.anchors(u, 1) - g.anchors(v, 1));
            if (!euclid) dist /= std::sqrt(g.areas[std::size_t(u)] + g.areas[std::size_t(v)]);
            d(u, v) = d(v, u) = dist;
        }
    return d;
}

Tensor2 distance_mask(const Tensor2& d, double rho) {
    Tensor2 m(d.rows, d.cols);
    for (int u = 0; u < d.rows; ++u)
        for (int v = 0; v < d.cols; ++v)
            m(u, v) = (u == v || d(u, v) <= rho) ? 0.0 : kMaskSentinel;
    return m;
}

Tensor2 dbreve(const Tensor2& d) {
    Tensor2 out(d.rows, d.cols);
    for (int u = 0; u < d.rows; ++u)
        for (int v = 0; v < d.cols; ++v) {
            if (u == v || d(u, v) == 0.0) out(u, v) = 1.0;
            else out(u, v) = 1.0 / (1.0 + std::exp(-1.0 / d(u, v)));
        }
    return out;
}

ad::Var relation_matrix(ad::Tape& t, ad::Var e_masked, const Tensor2& dbreve_matrix,
                        double lambda, const AblationFlags& flags) {
    if (e_masked.rows != e_masked.cols) throw std::invalid_argument("relation_matrix: E not square");
    if (dbreve_matrix.rows != e_masked.rows || dbreve_matrix.cols != e_masked.cols)
        throw std::invalid_argument("relation_matrix: shape mismatch");
    ad::Var raw;
    if (flags.no_dbreve) {
        raw = e_masked;
    } else if (flags.no_e) {
        raw = t.constant(dbreve_matrix);
    } else {
        raw = t.add_const(t.scale(e_masked, lambda), scale(dbreve_matrix, 1.0 - lambda));
    }
    return t.set_diag(t.symmetrize(raw), 1.0);
}

ad::Var aio_aggregate(ad::Tape& t, ad::Var members, const MlpSpec& spec_a, const MlpVars& va,
                      const MlpSpec& spec_b, const MlpVars& vb, bool maxpool) {
    if (!members.valid() || members.rows < 1)
        throw std::invalid_argument("aio_aggregate: empty input");
    if (maxpool) return t.rowwise_max(members);
    const ad::Var a = mlp_apply(t, spec_a, va, members);
    const ad::Var b = mlp_apply(t, spec_b, vb, members);
    const ad::Var w_local = t.row_softmax(t.matmul_nt(a, b));
    const ad::Var w = t.normalize_sum(t.col_sum(w_local));
    return t.matmul(w, members);
}

NodeHierarchy build_hierarchy(ad::Tape& t, ad::Var individual_nodes, const Partition& partition,
                              const AioParamsRef& group_pool, const AioParamsRef& global_pool,
                              bool maxpool) {
    partition.validate(individual_nodes.rows);
    NodeHierarchy h;
    h.individual_nodes = individual_nodes;
    h.partition = partition;

    std::vector<ad::Var> group_vars;
    group_vars.reserve(partition.groups.size());
    for (const std::vector<int>& members : partition.groups) {
        const ad::Var rows = t.gather_rows(individual_nodes, members);
        group_vars.push_back(aio_aggregate(t, rows, *group_pool.spec_a, *group_pool.va,
                                           *group_pool.spec_b, *group_pool.vb, maxpool));
    }
    if (!group_vars.empty()) h.group_nodes = t.concat_rows(group_vars);

    std::vector<ad::Var> global_parts;
    if (!partition.singletons.empty()) {
        std::vector<int> solo = partition.singletons;
        std::sort(solo.begin(), solo.end());
        global_parts.push_back(t.gather_rows(individual_nodes, solo));
    }
    if (h.group_nodes.valid()) global_parts.push_back(h.group_nodes);
    const ad::Var global_in =
        global_parts.size() == 1 ? global_parts.front() : t.concat_rows(global_parts);
    h.global_node = aio_aggregate(t, global_in, *global_pool.spec_a, *global_pool.va,
                                  *global_pool.spec_b, *global_pool.vb, maxpool);
    return h;
}

ReadoutProbs t2d_readout(ad::Tape& t, const NodeHierarchy& h, const MlpSpec& spec_i,
                         const MlpVars& vi, const MlpSpec& spec_p, const MlpVars& vp,
                         const MlpSpec& spec_g, const MlpVars& vg, const AblationFlags& flags) {
    const int d = h.global_node.cols;
    ReadoutProbs out;

    const ad::Var g_for_i = flags.no_g2i ? t.zeros(h.individual_nodes.rows, d)
                                         : t.repeat_rows(h.global_node, h.individual_nodes.rows);
    out.individual = mlp_apply(t, spec_i, vi, t.concat_cols(h.individual_nodes, g_for_i));

    if (h.group_nodes.valid()) {
        const ad::Var g_for_p = flags.no_g2p ? t.zeros(h.group_nodes.rows, d)
                                             : t.repeat_rows(h.global_node, h.group_nodes.rows);
        out.social = mlp_apply(t, spec_p, vp, t.concat_cols(h.group_nodes, g_for_p));
    }

    out.global = mlp_apply(t, spec_g, vg, h.global_node);
    return out;
}

}  // namespace pargraph
