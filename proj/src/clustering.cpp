#include "pargraph/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pargraph {

namespace {

double offdiag_norm_sq(const Tensor2& a) {
    double s = 0;
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return s;
}

}  // namespace

EigenDecomposition jacobi_eigen(const Tensor2& sym, double tol, int max_sweeps) {
    const int n = sym.rows;
    if (n != sym.cols) throw std::invalid_argument("jacobi_eigen: matrix not square");
    Tensor2 a = sym;
    Tensor2 v(n, n);
    for (int i = 0; i < n; ++i) v(i, i) = 1.0;

    int sweep = 0;
    while (offdiag_norm_sq(a) > tol * tol) {
        if (++sweep > max_sweeps) throw NumericError("jacobi_eigen: no convergence");
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                // Smaller-angle root for stability.
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return a(x, x) < a(y, y); });

    EigenDecomposition out;
    out.values.resize(std::size_t(n));
    out.vectors = Tensor2(n, n);
    for (int j = 0; j < n; ++j) {
        const int src = order[std::size_t(j)];
        out.values[std::size_t(j)] = a(src, src);
        int peak = 0;
        for (int i = 1; i < n; ++i)
            if (std::abs(v(i, src)) > std::abs(v(peak, src))) peak = i;
        const double flip = v(peak, src) < 0 ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i) out.vectors(i, j) = flip * v(i, src);
    }
    return out;
}

int eigengap_count(const std::vector<double>& values, int k_max) {
    const int n = int(values.size());
    const int hi = std::min(k_max, n - 1);
    if (hi < 1) return 1;
    int best = 1;
    double best_gap = -1;
    for (int k = 1; k <= hi; ++k) {
        const double gap = values[std::size_t(k)] - values[std::size_t(k - 1)];
        if (gap > best_gap) {
            best_gap = gap;
            best = k;
        }
    }
    return best;
}

std::vector<int> kmeans_assign(const Tensor2& points, int k, int max_iters) {
    const int n = points.rows;
    if (n < 1 || k < 1) throw std::invalid_argument("kmeans_assign: need points and k >= 1");
    k = std::min(k, n);

    auto dist_sq = [&](int row, const std::vector<double>& c) {
        double s = 0;
        for (int j = 0; j < points.cols; ++j) {
            const double d = points(row, j) - c[std::size_t(j)];
            s += d * d;
        }
        return s;
    };

    std::vector<std::vector<double>> centers;
    {
        std::vector<double> mean(std::size_t(points.cols), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < points.cols; ++j) mean[std::size_t(j)] += points(i, j) / n;
        int first = 0;
        double best = -1;
        for (int i = 0; i < n; ++i) {
            const double d = dist_sq(i, mean);
            if (d > best) { best = d; first = i; }
        }
        auto point_row = [&](int i) {
            std::vector<double> r(std::size_t(points.cols));
            for (int j = 0; j < points.cols; ++j) r[std::size_t(j)] = points(i, j);
            return r;
        };
        centers.push_back(point_row(first));
        while (int(centers.size()) < k) {
            int far = 0;
            double far_d = -1;
            for (int i = 0; i < n; ++i) {
                double nearest = std::numeric_limits<double>::infinity();
                for (const auto& c : centers) nearest = std::min(nearest, dist_sq(i, c));
                if (nearest > far_d) { far_d = nearest; far = i; }
            }
            centers.push_back(point_row(far));
        }
    }

    std::vector<int> assign(std::size_t(n), 0);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best_c = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = dist_sq(i, centers[std::size_t(c)]);
                if (d < best_d) { best_d = d; best_c = c; }
            }
            if (assign[std::size_t(i)] != best_c) { assign[std::size_t(i)] = best_c; changed = true; }
        }
        if (!changed && iter > 0) break;
        std::vector<int> count(std::size_t(k), 0);
        std::vector<std::vector<double>> sums(std::size_t(k),
                                              std::vector<double>(std::size_t(points.cols), 0.0));
        for (int i = 0; i < n; ++i) {
            const int c = assign[std::size_t(i)];
            ++count[std::size_t(c)];
            for (int j = 0; j < points.cols; ++j) sums[std::size_t(c)][std::size_t(j)] += points(i, j);
        }
        for (int c = 0; c < k; ++c)
            if (count[std::size_t(c)] > 0)
                for (int j = 0; j < points.cols; ++j)
                    centers[std::size_t(c)][std::size_t(j)] =
                        sums[std::size_t(c)][std::size_t(j)] / count[std::size_t(c)];
    }
    return assign;
}

Partition cluster_groups(const Tensor2& r, int k_max) {
    const int n = r.rows;
    if (n != r.cols) throw std::invalid_argument("cluster_groups: matrix not square");
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(r(i, j) - r(j, i)) > 1e-9)
                throw std::invalid_argument("cluster_groups: matrix not symmetric");
    if (k_max == 0) k_max = (n + 1) / 2;
    if (k_max < 1 || k_max > n) throw std::invalid_argument("cluster_groups: k_max out of range");

    Partition p;
    if (n == 0) return p;

    // Subjects with no meaningful off-diagonal affinity cannot join any group;
    // splitting them off keeps their near-zero degree out of the Laplacian
    // scaling and frees the cluster budget (k_max assumes 2+ member groups)
    // for the subjects that are actually connected.
    constexpr double kIsolated = 1e-6;
    std::vector<int> active;
    for (int i = 0; i < n; ++i) {
        bool isolated = true;
        for (int j = 0; j < n && isolated; ++j)
            if (i != j && r(i, j) > kIsolated) isolated = false;
        if (isolated) p.singletons.push_back(i);
        else active.push_back(i);
    }
    const int m = int(active.size());
    if (m == 1) p.singletons.push_back(active[0]);
    if (m <= 1) {
        std::sort(p.singletons.begin(), p.singletons.end());
        return p;
    }

    Tensor2 sub(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) sub(i, j) = r(active[std::size_t(i)], active[std::size_t(j)]);

    std::vector<double> inv_sqrt_deg(std::size_t(m), 0.0);
    for (int i = 0; i < m; ++i) {
        double deg = 0;
        for (int j = 0; j < m; ++j) deg += sub(i, j);
        inv_sqrt_deg[std::size_t(i)] = deg > 0 ? 1.0 / std::sqrt(deg) : 0.0;
    }
    Tensor2 lap(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            lap(i, j) = (i == j ? 1.0 : 0.0) -
                        inv_sqrt_deg[std::size_t(i)] * sub(i, j) * inv_sqrt_deg[std::size_t(j)];

    const EigenDecomposition eig = jacobi_eigen(lap);
    const int k = eigengap_count(eig.values, std::min(k_max, m));

    Tensor2 embed(m, k);
    for (int i = 0; i < m; ++i) {
        double norm = 0;
        for (int j = 0; j < k; ++j) norm += eig.vectors(i, j) * eig.vectors(i, j);
        norm = std::sqrt(norm);
        for (int j = 0; j < k; ++j)
            embed(i, j) = norm > 1e-12 ? eig.vectors(i, j) / norm : eig.vectors(i, j);
    }

    const std::vector<int> assign = kmeans_assign(embed, k);
    std::vector<std::vector<int>> clusters(static_cast<std::size_t>(k));
    for (int i = 0; i < m; ++i)
        clusters[std::size_t(assign[std::size_t(i)])].push_back(active[std::size_t(i)]);

    for (std::vector<int>& c : clusters) {
        if (c.empty()) continue;
        if (c.size() == 1) p.singletons.push_back(c[0]);
        else p.groups.push_back(std::move(c));
    }
    std::sort(p.groups.begin(), p.groups.end());
    std::sort(p.singletons.begin(), p.singletons.end());
    return p;
}

Tensor2 partition_to_relation(const Partition& p) {
    const int n = p.n_covered();
    p.validate(n);
    Tensor2 rel(n, n);
    for (int i = 0; i < n; ++i) rel(i, i) = 1.0;
    for (const std::vector<int>& g : p.groups)
        for (int u : g)
            for (int v : g) rel(u, v) = 1.0;
    return rel;
}

}  // namespace pargraph
