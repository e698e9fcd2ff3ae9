#pragma once

#include <vector>

#include "pargraph/graph_net.hpp"
#include "pargraph/scene.hpp"

namespace pargraph {

// Geometry extracted from a frame's boxes: the anchor is the midpoint of a
// box's bottom edge, the natural ground-contact point of a standing subject.
struct SceneGeometry {
    Tensor2 anchors;            // N x 2
    std::vector<double> areas;  // box areas S_u
    double image_width = 0;

    static SceneGeometry from_frame(const FrameAnnotation& frame);
};

// D(u,v) = anchor distance / sqrt(S_u + S_v): near subjects look large, so the
// same pixel gap means less up close. The euclid flag drops the denominator.
Tensor2 spatial_distance_matrix(const SceneGeometry& g, bool euclid = false);

// Additive mask: 0 where D <= rho, -inf otherwise; diagonal always kept.
Tensor2 distance_mask(const Tensor2& d, double rho);

// Distance-aware affinity: sigmoid(1/D) off-diagonal, 1 on the diagonal.
Tensor2 dbreve(const Tensor2& d);

// Fused relation on the tape: lambda * E_masked + (1-lambda) * dbreve,
// symmetrized, unit diagonal. Ablations keep exactly one of the two terms.
ad::Var relation_matrix(ad::Tape& t, ad::Var e_masked, const Tensor2& dbreve_matrix,
                        double lambda, const AblationFlags& flags);

// Attention pooling of member rows into one row: a local bilinear affinity
// over the members is row-softmaxed, its column sums (normalized to sum 1)
// weight the member features. The maxpool flag replaces all of that by an
// elementwise max.
ad::Var aio_aggregate(ad::Tape& t, ad::Var members, const MlpSpec& spec_a, const MlpVars& va,
                      const MlpSpec& spec_b, const MlpVars& vb, bool maxpool);

struct AioParamsRef {
    const MlpSpec* spec_a = nullptr;
    const MlpVars* va = nullptr;
    const MlpSpec* spec_b = nullptr;
    const MlpVars* vb = nullptr;
};

// Group nodes from the partition plus one global node over singletons and
// group nodes. K = number of groups (>= 2 members); group_nodes is unset
// (invalid Var) when K = 0.
struct NodeHierarchy {
    ad::Var individual_nodes;  // N x d
    ad::Var group_nodes;       // K x d
    ad::Var global_node;       // 1 x d
    Partition partition;
};

NodeHierarchy build_hierarchy(ad::Tape& t, ad::Var individual_nodes, const Partition& partition,
                              const AioParamsRef& group_pool, const AioParamsRef& global_pool,
                              bool maxpool);

// Readout logits (pre-sigmoid handled inside the MLPs' output activation):
// individual and group heads see their node concatenated with the global node
// unless the corresponding feedback ablation replaces it with zeros.
struct ReadoutProbs {
    ad::Var individual;  // N x n_individual
    ad::Var social;      // K x n_social (invalid when K = 0)
    ad::Var global;      // 1 x n_global
};

ReadoutProbs t2d_readout(ad::Tape& t, const NodeHierarchy& h, const MlpSpec& spec_i,
                         const MlpVars& vi, const MlpSpec& spec_p, const MlpVars& vp,
                         const MlpSpec& spec_g, const MlpVars& vg, const AblationFlags& flags);

}  // namespace pargraph
