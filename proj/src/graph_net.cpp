#include "pargraph/graph_net.hpp"

#include <stdexcept>

namespace pargraph {

void AblationFlags::validate() const {
    if (no_residual_f && no_fhat)
        throw std::invalid_argument("ablation: cannot drop both f and f-hat");
    if (no_dbreve && no_e)
        throw std::invalid_argument("ablation: cannot drop both affinity terms of the relation");
}

AffinityMatrix edge_affinity(const Tensor2& f, const MlpParams& f1, const MlpParams& f2,
                             const Tensor2* additive_mask) {
    const Tensor2 a = mlp_forward(f1, f);
    const Tensor2 b = mlp_forward(f2, f);
    if (a.cols != b.cols) throw std::invalid_argument("edge_affinity: F1/F2 output dims differ");
    AffinityMatrix out;
    out.logits = matmul_nt(a, b);
    if (additive_mask) {
        if (!additive_mask->same_shape(out.logits))
            throw std::invalid_argument("edge_affinity: mask shape mismatch");
        out.e = row_softmax(add(out.logits, *additive_mask));
    } else {
        out.e = row_softmax(out.logits);
    }
    return out;
}

Tensor2 node_update(const Tensor2& f, const Tensor2& e, const MlpParams& fn) {
    if (e.rows != e.cols || e.cols != f.rows)
        throw std::invalid_argument("node_update: affinity/feature shape mismatch");
    return mlp_forward(fn, matmul(e, f));
}

Tensor2 individual_repr(const Tensor2& f, const Tensor2& fhat) {
    if (!f.same_shape(fhat)) throw std::invalid_argument("individual_repr: shape mismatch");
    return add(f, fhat);
}

ad::Var edge_logits(ad::Tape& t, ad::Var f, const MlpSpec& spec1, const MlpVars& v1,
                    const MlpSpec& spec2, const MlpVars& v2) {
    const ad::Var a = mlp_apply(t, spec1, v1, f);
    const ad::Var b = mlp_apply(t, spec2, v2, f);
    return t.matmul_nt(a, b);
}

ad::Var node_update(ad::Tape& t, ad::Var f, ad::Var e, const MlpSpec& spec_n, const MlpVars& vn) {
    return mlp_apply(t, spec_n, vn, t.matmul(e, f));
}

ad::Var individual_repr(ad::Tape& t, ad::Var f, ad::Var fhat, const AblationFlags& flags) {
    if (flags.no_fhat) return f;
    if (flags.no_residual_f) return fhat;
    return t.add(f, fhat);
}

}  // namespace pargraph
