#pragma once

#include <cstdint>
#include <vector>

#include "pargraph/hierarchy.hpp"
#include "pargraph/labels.hpp"
#include "pargraph/scene.hpp"

namespace pargraph {

struct ModelDims {
    int feature_dim = 32;
    int n_individual = 27;
    int n_social = 11;
    int n_global = 7;

    static ModelDims from_vocab(const LabelVocab& v, int feature_dim) {
        return {feature_dim, v.n_individual(), v.n_social(), v.n_global()};
    }
};

// All trainable parameters. The pool pair drives attention aggregation at
// both hierarchy levels; a separate pair for the global level is optional.
struct ModelParams {
    ModelDims dims;
    bool separate_global_pool = false;
    MlpParams f1, f2, fn;        // edge affinity maps and node update, d -> d
    MlpParams pool_a, pool_b;    // aggregation attention pair, d -> d
    MlpParams gpool_a, gpool_b;  // global-level pair when separate_global_pool
    MlpParams fi, fp, fg;        // readout heads, sigmoid outputs
};

ModelParams make_model(const ModelDims& dims, std::uint64_t seed,
                       bool separate_global_pool = false);

// Stable enumeration used for persistence, Adam state, and gradient order.
std::vector<NamedTensor> named_tensors(ModelParams& p);

struct PipelineSettings {
    double lambda = 0.5;     // edge-affinity weight in the fused relation
    double rho_ratio = 0.2;  // distance-mask threshold as a fraction of image width
    AblationFlags ablations;
};

struct ModelVars {
    MlpVars f1, f2, fn, pool_a, pool_b, gpool_a, gpool_b, fi, fp, fg;
};

// Registers every trainable tensor as a tape leaf (same order as
// named_tensors) and returns the handles.
ModelVars bind_model(ad::Tape& t, const ModelParams& p);
std::vector<ad::Var> model_leaves(const ModelParams& p, const ModelVars& v);

// Frame-independent part of the forward pass: edge affinities, node update,
// and the fused relation matrix. The partition is not needed yet, so
// inference can read the relation, cluster, and continue on the same tape.
struct Stage1 {
    ad::Var features;  // N x d (constant)
    ad::Var e_basic;   // unmasked affinity driving the node update
    ad::Var e_masked;  // distance-masked affinity entering the relation
    ad::Var nodes;     // individual representations
    ad::Var relation;  // fused relation, symmetric, unit diagonal
};

Stage1 forward_stage1(ad::Tape& t, const ModelParams& p, const ModelVars& v,
                      const FrameAnnotation& frame, const PipelineSettings& s);

struct Stage2 {
    NodeHierarchy hierarchy;
    ReadoutProbs probs;
};

Stage2 forward_stage2(ad::Tape& t, const ModelParams& p, const ModelVars& v, const Stage1& s1,
                      const Partition& partition, const PipelineSettings& s);

}  // namespace pargraph
