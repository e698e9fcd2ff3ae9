#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pargraph {

// Raised on malformed inputs (files, schemas, label ids).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a computation produces or receives non-finite values.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Row-major dense matrix of 64-bit reals. The only non-finite entry any
// routine accepts is the -inf mask sentinel consumed by row_softmax.
struct Tensor2 {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(int r, int c, double fill = 0.0);

    double& operator()(int i, int j) { return data[std::size_t(i) * cols + j]; }
    double operator()(int i, int j) const { return data[std::size_t(i) * cols + j]; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
};

inline constexpr double kMaskSentinel = -std::numeric_limits<double>::infinity();

bool all_finite(const Tensor2& m);

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);  // a * b^T
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);  // a^T * b
Tensor2 transpose(const Tensor2& m);
Tensor2 add(const Tensor2& a, const Tensor2& b);
Tensor2 scale(const Tensor2& a, double c);

// Softmax over each row. Entries equal to kMaskSentinel map to exactly 0;
// a fully masked row comes out all-zero.
Tensor2 row_softmax(const Tensor2& m);

struct BceResult {
    double value = 0.0;
    bool all_masked = false;
};

// Mean of -[y*ln(p) + (1-y)*ln(1-p)] over unmasked entries, with p clamped
// to [kBceEps, 1-kBceEps] before the logs. mask (same shape, nonzero = keep)
// may be null. Zero unmasked entries yields value 0 and all_masked = true.
inline constexpr double kBceEps = 1e-7;
BceResult bce_loss(const Tensor2& pred, const Tensor2& target, const Tensor2* mask = nullptr);

}  // namespace pargraph
