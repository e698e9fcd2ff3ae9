#include "pargraph/tape.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace pargraph::ad {

Var Tape::push(Tensor2 value, std::function<void()> backprop) {
    Node n;
    n.value = std::move(value);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    const Node& stored = nodes_.back();
    return Var{int(nodes_.size()) - 1, stored.value.rows, stored.value.cols};
}

Var Tape::leaf(const Tensor2& value) { return push(value); }
Var Tape::constant(const Tensor2& value) { return push(value); }
Var Tape::zeros(int rows, int cols) { return push(Tensor2(rows, cols, 0.0)); }

double Tape::scalar(Var v) const {
    if (v.rows != 1 || v.cols != 1) throw std::invalid_argument("scalar: var is not 1x1");
    return value(v)(0, 0);
}

Var Tape::matmul(Var a, Var b) {
    Tensor2 out = pargraph::matmul(v(a.id), v(b.id));
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, a, b, r] {
        const Tensor2& grad_out = g(r.id);
        Tensor2 da = pargraph::matmul_nt(grad_out, v(b.id));
        Tensor2 db = pargraph::matmul_tn(v(a.id), grad_out);
        g(a.id) = pargraph::add(g(a.id), da);
        g(b.id) = pargraph::add(g(b.id), db);
    };
    return r;
}

Var Tape::matmul_nt(Var a, Var b) {
    Tensor2 out = pargraph::matmul_nt(v(a.id), v(b.id));
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, a, b, r] {
        const Tensor2& grad_out = g(r.id);
        Tensor2 da = pargraph::matmul(grad_out, v(b.id));
        Tensor2 db = pargraph::matmul_tn(grad_out, v(a.id));
        g(a.id) = pargraph::add(g(a.id), da);
        g(b.id) = pargraph::add(g(b.id), db);
    };
    return r;
}

Var Tape::add(Var a, Var b) {
    Var r = push(pargraph::add(v(a.id), v(b.id)));
    nodes_[r.id].backprop = [this, a, b, r] {
        g(a.id) = pargraph::add(g(a.id), g(r.id));
        g(b.id) = pargraph::add(g(b.id), g(r.id));
    };
    return r;
}

Var Tape::add_bias_rows(Var x, Var bias) {
    const Tensor2& xv = v(x.id);
    const Tensor2& bv = v(bias.id);
    if (bv.rows != 1 || bv.cols != xv.cols)
        throw std::invalid_argument("add_bias_rows: bias must be 1 x cols");
    Tensor2 out = xv;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out(i, j) += bv(0, j);
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, x, bias, r] {
        const Tensor2& grad_out = g(r.id);
        g(x.id) = pargraph::add(g(x.id), grad_out);
        Tensor2& gb = g(bias.id);
        for (int i = 0; i < grad_out.rows; ++i)
            for (int j = 0; j < grad_out.cols; ++j) gb(0, j) += grad_out(i, j);
    };
    return r;
}

Var Tape::add_const(Var x, const Tensor2& c) {
    Var r = push(pargraph::add(v(x.id), c));
    nodes_[r.id].backprop = [this, x, r] { g(x.id) = pargraph::add(g(x.id), g(r.id)); };
    return r;
}

Var Tape::scale(Var x, double c) {
    Var r = push(pargraph::scale(v(x.id), c));
    nodes_[r.id].backprop = [this, x, r, c] {
        g(x.id) = pargraph::add(g(x.id), pargraph::scale(g(r.id), c));
    };
    return r;
}

Var Tape::relu(Var x) {
    Tensor2 out = v(x.id);
    for (double& val : out.data) val = std::max(val, 0.0);
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, x, r] {
        const Tensor2& xv = v(x.id);
        const Tensor2& grad_out = g(r.id);
        Tensor2& gx = g(x.id);
        for (std::size_t i = 0; i < xv.data.size(); ++i)
            if (xv.data[i] > 0.0) gx.data[i] += grad_out.data[i];
    };
    return r;
}

Var Tape::sigmoid(Var x) {
    Tensor2 out = v(x.id);
    for (double& val : out.data) val = 1.0 / (1.0 + std::exp(-val));
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, x, r] {
        const Tensor2& y = v(r.id);
        const Tensor2& grad_out = g(r.id);
        Tensor2& gx = g(x.id);
        for (std::size_t i = 0; i < y.data.size(); ++i)
            gx.data[i] += grad_out.data[i] * y.data[i] * (1.0 - y.data[i]);
    };
    return r;
}

Var Tape::row_softmax(Var x, const Tensor2* additive_mask) {
    Tensor2 logits = v(x.id);
    if (additive_mask) {
        if (!additive_mask->same_shape(logits))
            throw std::invalid_argument("row_softmax: mask shape mismatch");
        for (std::size_t i = 0; i < logits.data.size(); ++i) {
            if (additive_mask->data[i] == kMaskSentinel)
                logits.data[i] = kMaskSentinel;
            else
                logits.data[i] += additive_mask->data[i];
        }
    }
    Var r = push(pargraph::row_softmax(logits));
    nodes_[r.id].backprop = [this, x, r] {
        const Tensor2& y = v(r.id);
        const Tensor2& grad_out = g(r.id);
        Tensor2& gx = g(x.id);
        for (int i = 0; i < y.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < y.cols; ++j) dot += grad_out(i, j) * y(i, j);
            for (int j = 0; j < y.cols; ++j) gx(i, j) += y(i, j) * (grad_out(i, j) - dot);
        }
    };
    return r;
}

Var Tape::symmetrize(Var x) {
    const Tensor2& xv = v(x.id);
    if (xv.rows != xv.cols) throw std::invalid_argument("symmetrize: matrix not square");
    Tensor2 out(xv.rows, xv.cols);
    for (int i = 0; i < xv.rows; ++i)
        for (int j = 0; j < xv.cols; ++j) out(i, j) = 0.5 * (xv(i, j) + xv(j, i));
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, x, r] {
        const Tensor2& grad_out = g(r.id);
        Tensor2& gx = g(x.id);
        for (int i = 0; i < grad_out.rows; ++i)
            for (int j = 0; j < grad_out.cols; ++j)
                gx(i, j) += 0.5 * (grad_out(i, j) + grad_out(j, i));
    };
    return r;
}

Var Tape::set_diag(Var x, double value) {
    const Tensor2& xv = v(x.id);
    if (xv.rows != xv.cols) throw std::invalid_argument("set_diag: matrix not square");
    Tensor2 out = xv;
    for (int i = 0; i < out.rows; ++i) out(i, i) = value;
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, x, r] {
        const Tensor2& grad_out = g(r.id);
        Tensor2& gx = g(x.id);
        for (int i = 0; i < grad_out.rows; ++i)
            for (int j = 0; j < grad_out.cols; ++j)
                if (i != j) gx(i, j) += grad_out(i, j);
    };
    return r;
}

Var Tape::gather_rows(Var x, std::vector<int> rows) {
    const Tensor2& xv = v(x.id);
    Tensor2 out(int(rows.size()), xv.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= xv.rows)
            throw std::invalid_argument("gather_rows: row index out of range");
        for (int j = 0; j < xv.cols; ++j) out(int(i), j) = xv(rows[i], j);
    }
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, x, r, rows = std::move(rows)] {
        const Tensor2& grad_out = g(r.id);
        Tensor2& gx = g(x.id);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (int j = 0; j < grad_out.cols; ++j) gx(rows[i], j) += grad_out(int(i), j);
    };
    return r;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    int total = 0;
    const int cols = parts[0].cols;
    for (Var p : parts) {
        if (p.cols != cols) throw std::invalid_argument("concat_rows: column mismatch");
        total += p.rows;
    }
    Tensor2 out(total, cols);
    int row = 0;
    for (Var p : parts) {
        const Tensor2& pv = v(p.id);
        std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + std::size_t(row) * cols);
        row += p.rows;
    }
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, parts, r] {
        const Tensor2& grad_out = g(r.id);
        int start = 0;
        for (Var p : parts) {
            Tensor2& gp = g(p.id);
            for (int i = 0; i < p.rows; ++i)
                for (int j = 0; j < p.cols; ++j) gp(i, j) += grad_out(start + i, j);
            start += p.rows;
        }
    };
    return r;
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor2& av = v(a.id);
    const Tensor2& bv = v(b.id);
    if (av.rows != bv.rows) throw std::invalid_argument("concat_cols: row mismatch");
    Tensor2 out(av.rows, av.cols + bv.cols);
    for (int i = 0; i < av.rows; ++i) {
        for (int j = 0; j < av.cols; ++j) out(i, j) = av(i, j);
        for (int j = 0; j < bv.cols; ++j) out(i, av.cols + j) = bv(i, j);
    }
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, a, b, r] {
        const Tensor2& grad_out = g(r.id);
        Tensor2& ga = g(a.id);
        Tensor2& gb = g(b.id);
        for (int i = 0; i < a.rows; ++i) {
            for (int j = 0; j < a.cols; ++j) ga(i, j) += grad_out(i, j);
            for (int j = 0; j < b.cols; ++j) gb(i, j) += grad_out(i, a.cols + j);
        }
    };
    return r;
}

Var Tape::repeat_rows(Var x, int n) {
    const Tensor2& xv = v(x.id);
    if (xv.rows != 1) throw std::invalid_argument("repeat_rows: input must be 1 x C");
    Tensor2 out(n, xv.cols);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < xv.cols; ++j) out(i, j) = xv(0, j);
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, x, r] {
        const Tensor2& grad_out = g(r.id);
        Tensor2& gx = g(x.id);
        for (int i = 0; i < grad_out.rows; ++i)
            for (int j = 0; j < grad_out.cols; ++j) gx(0, j) += grad_out(i, j);
    };
    return r;
}

Var Tape::col_sum(Var x) {
    const Tensor2& xv = v(x.id);
    Tensor2 out(1, xv.cols, 0.0);
    for (int i = 0; i < xv.rows; ++i)
        for (int j = 0; j < xv.cols; ++j) out(0, j) += xv(i, j);
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, x, r] {
        const Tensor2& grad_out = g(r.id);
        Tensor2& gx = g(x.id);
        for (int i = 0; i < gx.rows; ++i)
            for (int j = 0; j < gx.cols; ++j) gx(i, j) += grad_out(0, j);
    };
    return r;
}

Var Tape::normalize_sum(Var x) {
    const Tensor2& xv = v(x.id);
    double sum = 0.0;
    for (double val : xv.data) sum += val;
    if (sum == 0.0) throw NumericError("normalize_sum: zero total");
    Var r = push(pargraph::scale(xv, 1.0 / sum));
    nodes_[r.id].backprop = [this, x, r, sum] {
        const Tensor2& y = v(r.id);
        const Tensor2& grad_out = g(r.id);
        Tensor2& gx = g(x.id);
        double dot = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) dot += grad_out.data[i] * y.data[i];
        for (std::size_t i = 0; i < y.data.size(); ++i)
            gx.data[i] += (grad_out.data[i] - dot) / sum;
    };
    return r;
}

Var Tape::rowwise_max(Var x) {
    const Tensor2& xv = v(x.id);
    if (xv.rows == 0) throw std::invalid_argument("rowwise_max: empty input");
    Tensor2 out(1, xv.cols);
    std::vector<int> argmax(xv.cols, 0);
    for (int j = 0; j < xv.cols; ++j) {
        double best = xv(0, j);
        for (int i = 1; i < xv.rows; ++i) {
            if (xv(i, j) > best) {
                best = xv(i, j);
                argmax[j] = i;
            }
        }
        out(0, j) = best;
    }
    Var r = push(std::move(out));
    nodes_[r.id].backprop = [this, x, r, argmax = std::move(argmax)] {
        const Tensor2& grad_out = g(r.id);
        Tensor2& gx = g(x.id);
        for (int j = 0; j < grad_out.cols; ++j) gx(argmax[j], j) += grad_out(0, j);
    };
    return r;
}

Var Tape::bce_mean(Var pred, const Tensor2& target, const Tensor2* mask) {
    const Tensor2& pv = v(pred.id);
    BceResult res = bce_loss(pv, target, mask);
    Tensor2 out(1, 1, res.value);
    Var r = push(std::move(out));
    Tensor2 mask_copy = mask ? *mask : Tensor2();
    const bool has_mask = mask != nullptr;
    nodes_[r.id].backprop = [this, pred, r, target, mask_copy = std::move(mask_copy), has_mask] {
        const Tensor2& pv2 = v(pred.id);
        std::size_t count = 0;
        for (std::size_t i = 0; i < pv2.data.size(); ++i)
            if (!has_mask || mask_copy.data[i] != 0.0) ++count;
        if (count == 0) return;
        const double go = g(r.id)(0, 0) / double(count);
        Tensor2& gp = g(pred.id);
        for (std::size_t i = 0; i < pv2.data.size(); ++i) {
            if (has_mask && mask_copy.data[i] == 0.0) continue;
            const double p = pv2.data[i];
            if (p <= kBceEps || p >= 1.0 - kBceEps) continue;  // clamped region, flat
            const double y = target.data[i];
            gp.data[i] += go * (-y / p + (1.0 - y) / (1.0 - p));
        }
    };
    return r;
}

Var Tape::weighted_sum_scalars(const std::vector<Var>& scalars, const std::vector<double>& weights) {
    if (scalars.size() != weights.size())
        throw std::invalid_argument("weighted_sum_scalars: length mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < scalars.size(); ++i) total += weights[i] * scalar(scalars[i]);
    Var r = push(Tensor2(1, 1, total));
    nodes_[r.id].backprop = [this, scalars, weights, r] {
        const double go = g(r.id)(0, 0);
        for (std::size_t i = 0; i < scalars.size(); ++i)
            g(scalars[i].id)(0, 0) += go * weights[i];
    };
    return r;
}

void Tape::backward(Var root) {
    if (root.rows != 1 || root.cols != 1)
        throw std::invalid_argument("backward: root must be a 1x1 scalar");
    for (Node& n : nodes_) n.grad = Tensor2(n.value.rows, n.value.cols, 0.0);
    nodes_[root.id].grad(0, 0) = 1.0;
    for (int i = root.id; i >= 0; --i)
        if (nodes_[i].backprop) nodes_[i].backprop();
}

}  // namespace pargraph::ad
