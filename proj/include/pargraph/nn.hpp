#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pargraph/tape.hpp"
#include "pargraph/tensor.hpp"

namespace pargraph {

enum class HiddenActivation { ReLU, None };
enum class OutputActivation { None, Sigmoid };

// dims = [in, h1, ..., out]; hidden activation applies to every layer but
// the last, output activation to the last only. bias=false drops the bias
// terms entirely: the right-hand map of a bilinear row-softmax pair gains
// nothing from one (a row-constant logit shift cancels in the softmax), and
// keeping it would leave exactly-flat parameters in the model.
struct MlpSpec {
    std::vector<int> dims;
    HiddenActivation hidden = HiddenActivation::ReLU;
    OutputActivation output = OutputActivation::None;
    bool bias = true;

    int n_layers() const { return int(dims.size()) - 1; }
    int in_dim() const { return dims.front(); }
    int out_dim() const { return dims.back(); }
    void validate() const;
};

struct MlpParams {
    MlpSpec spec;
    std::vector<Tensor2> weights;  // weights[l] is dims[l] x dims[l+1]
    std::vector<Tensor2> biases;   // biases[l] is 1 x dims[l+1]
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases zero.
MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed);
MlpParams zero_mlp(const MlpSpec& spec);

// Plain forward pass (no gradient tracking).
Tensor2 mlp_forward(const MlpParams& params, const Tensor2& x);

// Tape-bound parameters for one forward/backward pass.
struct MlpVars {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
};
MlpVars bind_mlp(ad::Tape& tape, const MlpParams& params);
ad::Var mlp_apply(ad::Tape& tape, const MlpSpec& spec, const MlpVars& vars, ad::Var x);

struct AdamState {
    std::vector<Tensor2> m;  // first moments, shaped like the parameters
    std::vector<Tensor2> v;  // second moments
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct NamedTensor {
    std::string name;
    Tensor2* tensor;
};

AdamState make_adam_state(const std::vector<NamedTensor>& params);

// Bias-corrected Adam update in place; throws NumericError naming the tensor
// if a gradient is non-finite.
void adam_step(AdamState& state, const std::vector<NamedTensor>& params,
               const std::vector<Tensor2>& grads, double lr);

// Central-difference check of an analytic gradient. Returns the max over all
// parameter entries of |g_bp - g_fd| / max(1e-8, |g_bp| + |g_fd|). loss_fn
// must be deterministic in the parameter tensors it is handed.
double finite_diff_check(const std::function<double(const std::vector<Tensor2>&)>& loss_fn,
                         std::vector<Tensor2> params,
                         const std::vector<Tensor2>& analytic_grads, double eps);

}  // namespace pargraph
