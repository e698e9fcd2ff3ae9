#pragma once

#include <vector>

#include "pargraph/scene.hpp"
#include "pargraph/tensor.hpp"

namespace pargraph {

// Eigenvalues ascending; vectors.col(i) is the unit eigenvector for values[i],
// sign-canonicalized so each column's largest-magnitude entry is positive.
struct EigenDecomposition {
    std::vector<double> values;
    Tensor2 vectors;
};

// Cyclic Jacobi rotations on a symmetric matrix. Deterministic; throws
// NumericError if the off-diagonal mass does not fall below tol.
EigenDecomposition jacobi_eigen(const Tensor2& sym, double tol = 1e-10, int max_sweeps = 100);

// Largest gap between consecutive eigenvalues over k in [1, k_max]; ties pick
// the smaller k.
int eigengap_count(const std::vector<double>& values, int k_max);

// Lloyd iterations with deterministic farthest-point seeding (first center:
// the point farthest from the mean; then repeatedly the point farthest from
// its nearest center; any tie picks the smallest index). Returns one cluster
// label per row; labels of empty clusters are skipped in the output range.
std::vector<int> kmeans_assign(const Tensor2& points, int k, int max_iters = 100);

// Group detection from a symmetric relation matrix with unit diagonal:
// subjects whose off-diagonal affinities are all below 1e-6 are split off as
// singletons, the rest are embedded by the first K eigenvectors of the
// symmetric normalized Laplacian (K from the eigengap) and clustered by
// k-means. Resulting one-member clusters become singletons. k_max 0 means
// ceil(N/2) over the connected subjects.
Partition cluster_groups(const Tensor2& r, int k_max = 0);

// Binary co-membership matrix of a partition: 1 iff same group, diagonal 1.
Tensor2 partition_to_relation(const Partition& p);

}  // namespace pargraph
