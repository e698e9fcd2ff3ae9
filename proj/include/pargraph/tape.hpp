#pragma once

#include <functional>
#include <vector>

#include "pargraph/tensor.hpp"

namespace pargraph::ad {

// Handle into a Tape. Shape is cached for convenience while building graphs.
struct Var {
    int id = -1;
    int rows = 0;
    int cols = 0;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over Tensor2 values. One tape per forward pass; nodes
// are created in topological order, so backward() is a reverse scan.
class Tape {
public:
    // Leaf whose gradient will be read back after backward().
    Var leaf(const Tensor2& value);
    // Leaf treated as data; gradient is tracked but normally ignored.
    Var constant(const Tensor2& value);
    Var zeros(int rows, int cols);

    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // a * b^T
    Var add(Var a, Var b);
    Var add_bias_rows(Var x, Var bias);  // bias is 1 x C, added to every row
    Var add_const(Var x, const Tensor2& c);
    Var scale(Var x, double c);
    Var relu(Var x);
    Var sigmoid(Var x);
    // Softmax per row after adding the optional 0/-inf additive mask.
    Var row_softmax(Var x, const Tensor2* additive_mask = nullptr);
    Var symmetrize(Var x);              // (x + x^T) / 2, square input
    Var set_diag(Var x, double value);  // overwrite diagonal with a constant
    Var gather_rows(Var x, std::vector<int> rows);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(Var a, Var b);
    Var repeat_rows(Var x, int n);  // x is 1 x C
    Var col_sum(Var x);             // -> 1 x C
    Var normalize_sum(Var x);       // x / sum(x)
    Var rowwise_max(Var x);         // elementwise max over rows -> 1 x C
    // Mean BCE over unmasked entries (mask nonzero = keep); returns 1x1.
    Var bce_mean(Var pred, const Tensor2& target, const Tensor2* mask = nullptr);
    // weights[i] * scalars[i], summed; all inputs 1x1.
    Var weighted_sum_scalars(const std::vector<Var>& scalars, const std::vector<double>& weights);

    void backward(Var root);  // root must be 1x1

    const Tensor2& value(Var v) const { return nodes_[v.id].value; }
    const Tensor2& grad(Var v) const { return nodes_[v.id].grad; }
    double scalar(Var v) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor2 value;
        Tensor2 grad;
        std::function<void()> backprop;  // empty for leaves
    };
    std::vector<Node> nodes_;

    Var push(Tensor2 value, std::function<void()> backprop = {});
    Tensor2& g(int id) { return nodes_[id].grad; }
    const Tensor2& v(int id) const { return nodes_[id].value; }
};

}  // namespace pargraph::ad
