#include "pargraph/nn.hpp"

#include <cmath>
#include <random>

namespace pargraph {

void MlpSpec::validate() const {
    if (dims.size() < 2) throw std::invalid_argument("MlpSpec: need at least one layer");
    for (int d : dims)
        if (d <= 0) throw std::invalid_argument("MlpSpec: non-positive layer dim");
}

MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    MlpParams p;
    p.spec = spec;
    for (int l = 0; l < spec.n_layers(); ++l) {
        const int fan_in = spec.dims[l];
        const int fan_out = spec.dims[l + 1];
        const double a = std::sqrt(6.0 / double(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-a, a);
        Tensor2 w(fan_in, fan_out);
        for (double& x : w.data) x = dist(rng);
        p.weights.push_back(std::move(w));
        if (spec.bias) p.biases.emplace_back(1, fan_out, 0.0);
    }
    return p;
}

MlpParams zero_mlp(const MlpSpec& spec) {
    spec.validate();
    MlpParams p;
    p.spec = spec;
    for (int l = 0; l < spec.n_layers(); ++l) {
        p.weights.emplace_back(spec.dims[l], spec.dims[l + 1], 0.0);
        if (spec.bias) p.biases.emplace_back(1, spec.dims[l + 1], 0.0);
    }
    return p;
}

Tensor2 mlp_forward(const MlpParams& params, const Tensor2& x) {
    if (x.cols != params.spec.in_dim())
        throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.cols) +
                                    " cols, expected " + std::to_string(params.spec.in_dim()));
    Tensor2 h = x;
    const int n = params.spec.n_layers();
    for (int l = 0; l < n; ++l) {
        h = matmul(h, params.weights[l]);
        if (params.spec.bias)
            for (int i = 0; i < h.rows; ++i)
                for (int j = 0; j < h.cols; ++j) h(i, j) += params.biases[l](0, j);
        const bool last = (l == n - 1);
        if (!last && params.spec.hidden == HiddenActivation::ReLU) {
            for (double& v : h.data) v = std::max(v, 0.0);
        } else if (last && params.spec.output == OutputActivation::Sigmoid) {
            for (double& v : h.data) v = 1.0 / (1.0 + std::exp(-v));
        }
    }
    return h;
}

MlpVars bind_mlp(ad::Tape& tape, const MlpParams& params) {
    MlpVars vars;
    for (std::size_t l = 0; l < params.weights.size(); ++l)
        vars.weights.push_back(tape.leaf(params.weights[l]));
    for (std::size_t l = 0; l < params.biases.size(); ++l)
        vars.biases.push_back(tape.leaf(params.biases[l]));
    return vars;
}

ad::Var mlp_apply(ad::Tape& tape, const MlpSpec& spec, const MlpVars& vars, ad::Var x) {
    if (x.cols != spec.in_dim())
        throw std::invalid_argument("mlp_apply: input dim mismatch");
    ad::Var h = x;
    const int n = spec.n_layers();
    for (int l = 0; l < n; ++l) {
        h = tape.matmul(h, vars.weights[l]);
        if (spec.bias) h = tape.add_bias_rows(h, vars.biases[l]);
        const bool last = (l == n - 1);
        if (!last && spec.hidden == HiddenActivation::ReLU)
            h = tape.relu(h);
        else if (last && spec.output == OutputActivation::Sigmoid)
            h = tape.sigmoid(h);
    }
    return h;
}

AdamState make_adam_state(const std::vector<NamedTensor>& params) {
    AdamState s;
    for (const NamedTensor& p : params) {
        s.m.emplace_back(p.tensor->rows, p.tensor->cols, 0.0);
        s.v.emplace_back(p.tensor->rows, p.tensor->cols, 0.0);
    }
    return s;
}

void adam_step(AdamState& state, const std::vector<NamedTensor>& params,
               const std::vector<Tensor2>& grads, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: tensor count mismatch");
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (!params[t].tensor->same_shape(grads[t]))
            throw std::invalid_argument("adam_step: shape mismatch for " + params[t].name);
        if (!all_finite(grads[t]))
            throw NumericError("adam_step: non-finite gradient for " + params[t].name);
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor2& p = *params[t].tensor;
        Tensor2& m = state.m[t];
        Tensor2& v = state.v[t];
        const Tensor2& grad = grads[t];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * grad.data[i];
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * grad.data[i] * grad.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double finite_diff_check(const std::function<double(const std::vector<Tensor2>&)>& loss_fn,
                         std::vector<Tensor2> params,
                         const std::vector<Tensor2>& analytic_grads, double eps) {
    if (params.size() != analytic_grads.size())
        throw std::invalid_argument("finite_diff_check: gradient count mismatch");
    double worst = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].data.size(); ++i) {
            const double orig = params[t].data[i];
            params[t].data[i] = orig + eps;
            const double up = loss_fn(params);
            params[t].data[i] = orig - eps;
            const double down = loss_fn(params);
            params[t].data[i] = orig;
            const double fd = (up - down) / (2.0 * eps);
            const double bp = analytic_grads[t].data[i];
            const double err = std::abs(bp - fd) / std::max(1e-8, std::abs(bp) + std::abs(fd));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace pargraph
