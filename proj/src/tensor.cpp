#include "pargraph/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace pargraph {

Tensor2::Tensor2(int r, int c, double fill) : rows(r), cols(c) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor2: negative dimension");
    data.assign(std::size_t(r) * std::size_t(c), fill);
}

bool all_finite(const Tensor2& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

static void check_nonempty(const Tensor2& m, const char* who) {
    if (m.rows == 0 || m.cols == 0)
        throw std::invalid_argument(std::string(who) + ": empty matrix");
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols) +
                                    " vs " + std::to_string(b.rows));
    Tensor2 out(a.rows, b.cols, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[std::size_t(k) * b.cols];
            double* orow = &out.data[std::size_t(i) * out.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
    if (a.cols != b.cols)
        throw std::invalid_argument("matmul_nt: inner dimensions mismatch");
    Tensor2 out(a.rows, b.rows, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[std::size_t(i) * a.cols];
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = &b.data[std::size_t(j) * b.cols];
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            out(i, j) = s;
        }
    }
    return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
    if (a.rows != b.rows)
        throw std::invalid_argument("matmul_tn: inner dimensions mismatch");
    Tensor2 out(a.cols, b.cols, 0.0);
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = &a.data[std::size_t(k) * a.cols];
        const double* brow = &b.data[std::size_t(k) * b.cols];
        for (int i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* orow = &out.data[std::size_t(i) * out.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
        }
    }
    return out;
}

Tensor2 transpose(const Tensor2& m) {
    Tensor2 out(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
    return out;
}

Tensor2 add(const Tensor2& a, const Tensor2& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
    Tensor2 out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor2 scale(const Tensor2& a, double c) {
    Tensor2 out = a;
    for (double& v : out.data) v *= c;
    return out;
}

Tensor2 row_softmax(const Tensor2& m) {
    check_nonempty(m, "row_softmax");
    Tensor2 out(m.rows, m.cols, 0.0);
    for (int i = 0; i < m.rows; ++i) {
        double mx = kMaskSentinel;
        for (int j = 0; j < m.cols; ++j) {
            const double v = m(i, j);
            if (v != kMaskSentinel && !std::isfinite(v))
                throw NumericError("row_softmax: non-finite logit at row " + std::to_string(i));
            mx = std::max(mx, v);
        }
        if (mx == kMaskSentinel) continue;  // fully masked row stays all-zero
        double sum = 0.0;
        for (int j = 0; j < m.cols; ++j) {
            const double v = m(i, j);
            if (v == kMaskSentinel) continue;
            const double e = std::exp(v - mx);
            out(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < m.cols; ++j) out(i, j) /= sum;
    }
    return out;
}

BceResult bce_loss(const Tensor2& pred, const Tensor2& target, const Tensor2* mask) {
    if (!pred.same_shape(target)) throw std::invalid_argument("bce_loss: shape mismatch");
    if (mask && !mask->same_shape(pred)) throw std::invalid_argument("bce_loss: mask shape mismatch");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        if (mask && mask->data[i] == 0.0) continue;
        const double p = std::clamp(pred.data[i], kBceEps, 1.0 - kBceEps);
        const double y = target.data[i];
        sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        ++count;
    }
    if (count == 0) return {0.0, true};
    return {sum / double(count), false};
}

}  // namespace pargraph
