#pragma once

#include "pargraph/nn.hpp"
#include "pargraph/tape.hpp"
#include "pargraph/tensor.hpp"

namespace pargraph {

// Table-3-style switches. Flags are additive; each disables one ingredient of
// the full pipeline.
struct AblationFlags {
    bool no_residual_f = false;  // drop f from the individual representation
    bool no_fhat = false;        // drop the graph-updated term
    bool euclid_dist = false;    // raw anchor distance, no area scaling
    bool no_dbreve = false;      // relation from edge affinity alone
    bool no_e = false;           // relation from distance affinity alone
    bool maxpool_agg = false;    // max-pool instead of attention pooling
    bool no_g2i = false;         // individual readout without the global node
    bool no_g2p = false;         // group readout without the global node

    void validate() const;  // throws std::invalid_argument on contradictory combinations
};

// Pairwise edge affinity over subject features: logits(u,v) = <A(f_u), B(f_v)>,
// then row softmax. Raw logits are kept for masking and debugging.
struct AffinityMatrix {
    Tensor2 e;       // row-stochastic (all-masked rows all-zero)
    Tensor2 logits;  // pre-mask, pre-softmax
};

AffinityMatrix edge_affinity(const Tensor2& f, const MlpParams& f1, const MlpParams& f2,
                             const Tensor2* additive_mask = nullptr);
Tensor2 node_update(const Tensor2& f, const Tensor2& e, const MlpParams& fn);
Tensor2 individual_repr(const Tensor2& f, const Tensor2& fhat);

// Tape-level building blocks used by the trainable forward pass.
ad::Var edge_logits(ad::Tape& t, ad::Var f, const MlpSpec& spec1, const MlpVars& v1,
                    const MlpSpec& spec2, const MlpVars& v2);
ad::Var node_update(ad::Tape& t, ad::Var f, ad::Var e, const MlpSpec& spec_n, const MlpVars& vn);
ad::Var individual_repr(ad::Tape& t, ad::Var f, ad::Var fhat, const AblationFlags& flags);

}  // namespace pargraph
