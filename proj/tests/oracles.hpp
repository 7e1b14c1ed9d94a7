#pragma once

// Reference computations used only by the tests. They take independent
// routes from the library: Eigen for dense algebra, brute-force enumeration
// for distributions, and exact transition matrices for Markov chains.

#include <subsel/linalg.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <vector>

namespace oracle {

using subsel::PointSet;
using subsel::SubsetIds;

inline Eigen::MatrixXd to_eigen(const PointSet& points) {
    Eigen::MatrixXd m(points.size(), points.dim());
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = 0; j < points.dim(); ++j) m(i, j) = points[i][j];
    return m;
}

inline PointSet from_rows(std::vector<std::vector<double>> rows) {
    subsel::Matrix m;
    for (auto& r : rows) m.append_row(r);
    return PointSet(std::move(m));
}

// Squared distance from x to the column space of the given rows, by least
// squares through a column-pivoted QR.
inline double residual_sq(const Eigen::VectorXd& x, const Eigen::MatrixXd& rows) {
    if (rows.rows() == 0) return x.squaredNorm();
    Eigen::MatrixXd a = rows.transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    Eigen::VectorXd coef = qr.solve(x);
    return (x - a * coef).squaredNorm();
}

inline Eigen::MatrixXd gather(const PointSet& points, std::span<const std::size_t> ids) {
    Eigen::MatrixXd out(ids.size(), points.dim());
    for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t j = 0; j < points.dim(); ++j) out(r, j) = points[ids[r]][j];
    return out;
}

inline std::vector<double> residuals_sq(const PointSet& points, std::span<const std::size_t> subset) {
    const Eigen::MatrixXd rows = gather(points, subset);
    std::vector<double> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        Eigen::VectorXd x(points.dim());
        for (std::size_t j = 0; j < points.dim(); ++j) x(j) = points[i][j];
        out[i] = residual_sq(x, rows);
    }
    return out;
}

inline double err_p(const PointSet& points, std::span<const std::size_t> subset, double p) {
    double total = 0.0;
    for (double r : residuals_sq(points, subset)) total += std::pow(std::sqrt(std::max(0.0, r)), p);
    return total;
}

// vol(simplex)^2 = det(G) / (k!)^2, determinant by partial-pivot LU.
inline double volume_sq(const PointSet& points, std::span<const std::size_t> subset) {
    const Eigen::MatrixXd rows = gather(points, subset);
    const Eigen::MatrixXd g = rows * rows.transpose();
    double fact = 1.0;
    for (std::size_t i = 2; i <= subset.size(); ++i) fact *= static_cast<double>(i);
    return std::max(0.0, g.determinant()) / (fact * fact);
}

// Sum of squared singular values beyond the k-th, from the eigenvalues of
// X^T X.
inline double svd_tail(const PointSet& points, std::size_t k) {
    const Eigen::MatrixXd x = to_eigen(points);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x.transpose() * x);
    Eigen::VectorXd ev = es.eigenvalues(); // ascending
    double tail = 0.0;
    for (Eigen::Index i = 0; i + static_cast<Eigen::Index>(k) < ev.size(); ++i) tail += std::max(0.0, ev(i));
    return tail;
}

inline std::vector<double> singular_values(const PointSet& points) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(points));
    const auto s = svd.singularValues();
    return {s.data(), s.data() + s.size()};
}

// All k-subsets of [0, n) in lexicographic order.
inline std::vector<SubsetIds> subsets(std::size_t n, std::size_t k) {
    std::vector<SubsetIds> out;
    std::vector<bool> mask(n, false);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(k), true);
    do {
        SubsetIds s;
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i]) s.push_back(i);
        out.push_back(s);
    } while (std::prev_permutation(mask.begin(), mask.end()));
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<double> normalized(std::vector<double> w) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= total;
    return w;
}

inline double tv(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return 0.5 * s;
}

// Empirical law of draws over [0, n).
inline std::vector<double> frequencies(std::span<const std::size_t> draws, std::size_t n) {
    std::vector<double> f(n, 0.0);
    for (std::size_t d : draws) f[d] += 1.0;
    for (double& v : f) v /= static_cast<double>(draws.size());
    return f;
}

// Empirical law of subset draws, aligned with `support`.
inline std::vector<double> subset_frequencies(const std::vector<SubsetIds>& draws,
                                              const std::vector<SubsetIds>& support) {
    std::map<SubsetIds, double> count;
    for (const auto& d : draws) count[d] += 1.0;
    std::vector<double> f;
    for (const auto& s : support) f.push_back(count[s] / static_cast<double>(draws.size()));
    return f;
}

// Exact law after `steps` independent Metropolis-Hastings moves, started from
// the proposal law q, with unnormalized target p.
inline std::vector<double> chain_law(std::span<const double> p, std::span<const double> q, std::size_t steps) {
    const std::size_t n = p.size();
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t x = 0; x < n; ++x) {
        double stay = 1.0;
        for (std::size_t y = 0; y < n; ++y) {
            if (y == x) continue;
            double a;
            if (p[x] == 0.0) a = p[y] > 0.0 ? 1.0 : 0.0;
            else a = std::min(1.0, (p[y] * q[x]) / (p[x] * q[y]));
            t(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = q[y] * a;
            stay -= q[y] * a;
        }
        t(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(x)) = stay;
    }
    Eigen::RowVectorXd law(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) law(static_cast<Eigen::Index>(i)) = q[i];
    for (std::size_t s = 0; s < steps; ++s) law = law * t;
    return {law.data(), law.data() + law.size()};
}

// Three-sigma half-width for an empirical frequency of a probability-p event.
inline double three_sigma(double p, std::size_t trials) {
    return 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

} // namespace oracle
