#pragma once

#include <subsel/errors.hpp>
#include <subsel/matrix.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace subsel {

// Indices into a PointSet. Order matters and duplicates are allowed, since
// i.i.d. sampling may pick the same point twice.
using SubsetIds = std::vector<std::size_t>;

// Candidate basis vectors whose residual falls below this fraction of the
// largest input norm are treated as linearly dependent.
inline constexpr double kRankTolerance = 1e-9;

/// The dataset X: n points in d dimensions, one point per row.
class PointSet {
public:
    PointSet() = default;

    explicit PointSet(Matrix data) : data_(std::move(data)) {
        if (data_.rows() == 0 || data_.cols() == 0)
            throw std::invalid_argument("PointSet: need n >= 1 and d >= 1");
        for (double v : data_.data())
            if (!std::isfinite(v)) throw std::invalid_argument("PointSet: non-finite entry");
    }

    std::size_t size() const { return data_.rows(); }
    std::size_t dim() const { return data_.cols(); }
    std::span<const double> operator[](std::size_t i) const { return data_.row(i); }
    const Matrix& matrix() const { return data_; }

    // Rows picked out by ids, in id order.
    Matrix gather(std::span<const std::size_t> ids) const {
        Matrix out;
        for (std::size_t id : ids) {
            if (id >= size()) throw std::out_of_range("PointSet::gather: id out of range");
            out.append_row(data_.row(id));
        }
        return out;
    }

    friend bool operator==(const PointSet&, const PointSet&) = default;

private:
    Matrix data_;
};

/// Orthonormal spanning set of a collection of points, built incrementally by
/// modified Gram-Schmidt with one re-orthogonalization pass.
class OrthonormalBasis {
public:
    OrthonormalBasis() = default;
    explicit OrthonormalBasis(std::size_t dim) : dim_(dim), vectors_(0, dim) {}

    // reference_norm seeds the scale for the rank tolerance; it is normally
    // the largest norm among the rows that will be added.
    OrthonormalBasis(std::size_t dim, double reference_norm)
        : dim_(dim), vectors_(0, dim), max_input_norm_(reference_norm) {}

    std::size_t dim() const { return dim_; }
    std::size_t rank() const { return vectors_.rows(); }
    const Matrix& vectors() const { return vectors_; }
    const SubsetIds& source_ids() const { return source_ids_; }

    // Adds v to the span. Returns true when the rank grew. source_id is
    // recorded either way, so r <= |source_ids| holds.
    bool add(std::span<const double> v, std::size_t source_id = npos) {
        check_dim(v);
        if (source_id != npos) source_ids_.push_back(source_id);
        const double vnorm = norm(v);
        max_input_norm_ = std::max(max_input_norm_, vnorm);
        if (rank() == dim_ || vnorm == 0.0) return false;

        std::vector<double> w(v.begin(), v.end());
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < rank(); ++j) {
                auto q = vectors_.row(j);
                axpy(-dot(q, w), q, w);
            }
        }
        const double wnorm = norm(w);
        if (wnorm <= kRankTolerance * max_input_norm_) return false;
        for (double& x : w) x /= wnorm;
        vectors_.append_row(w);
        return true;
    }

    // ||x - proj(x)||_2. Residuals below the rank tolerance are reported as
    // exactly zero, consistent with how add() decides membership.
    double residual(std::span<const double> x) const {
        check_dim(x);
        if (rank() == 0) return norm(x);
        if (rank() == dim_) return 0.0;
        std::vector<double> w(x.begin(), x.end());
        for (std::size_t j = 0; j < rank(); ++j) {
            auto q = vectors_.row(j);
            axpy(-dot(q, w), q, w);
        }
        const double xnorm = norm(x);
        const double r = std::min(norm(w), xnorm);
        if (r <= kRankTolerance * std::max(max_input_norm_, xnorm)) return 0.0;
        return r;
    }

    std::vector<double> project(std::span<const double> x) const {
        check_dim(x);
        std::vector<double> out(dim_, 0.0);
        for (std::size_t j = 0; j < rank(); ++j) {
            auto q = vectors_.row(j);
            axpy(dot(q, x), q, out);
        }
        return out;
    }

    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

private:
    void check_dim(std::span<const double> x) const {
        if (x.size() != dim_) throw std::invalid_argument("OrthonormalBasis: dimension mismatch");
    }

    std::size_t dim_ = 0;
    Matrix vectors_;
    SubsetIds source_ids_;
    double max_input_norm_ = 0.0;
};

inline double max_row_norm(const Matrix& rows) {
    double best = 0.0;
    for (std::size_t i = 0; i < rows.rows(); ++i) best = std::max(best, norm(rows.row(i)));
    return best;
}

/// Basis for the span of the given rows, added in order.
inline OrthonormalBasis basis_of_rows(const Matrix& rows, std::size_t dim,
                                      std::span<const std::size_t> ids = {}) {
    OrthonormalBasis basis(dim, max_row_norm(rows));
    for (std::size_t i = 0; i < rows.rows(); ++i)
        basis.add(rows.row(i), i < ids.size() ? ids[i] : OrthonormalBasis::npos);
    return basis;
}

inline OrthonormalBasis orthonormal_basis(const PointSet& points, std::span<const std::size_t> subset) {
    return basis_of_rows(points.gather(subset), points.dim(), subset);
}

inline double residual_distance(std::span<const double> x, const OrthonormalBasis& basis) {
    return basis.residual(x);
}

/// Sum over all points of residual distance to the span, raised to p.
inline double err_p(const PointSet& points, const OrthonormalBasis& basis, double p) {
    if (!(p >= 1.0) || !std::isfinite(p)) throw std::invalid_argument("err_p: need finite p >= 1");
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) total += pow_p(basis.residual(points[i]), p);
    return total;
}

// Determinant of a symmetric positive semidefinite matrix by Cholesky.
// Pivots below (kRankTolerance * largest diagonal root)^2 mean a dependent
// row, and the determinant is reported as exactly zero.
inline double gram_determinant(const Matrix& gram) {
    const std::size_t k = gram.rows();
    if (k == 0) return 1.0;
    double max_diag = 0.0;
    for (std::size_t i = 0; i < k; ++i) max_diag = std::max(max_diag, gram(i, i));
    if (max_diag <= 0.0) return 0.0;
    const double floor = kRankTolerance * kRankTolerance * max_diag;

    Matrix l(k, k);
    double det = 1.0;
    for (std::size_t j = 0; j < k; ++j) {
        double pivot = gram(j, j);
        for (std::size_t c = 0; c < j; ++c) pivot -= l(j, c) * l(j, c);
        if (pivot <= floor) return 0.0;
        det *= pivot;
        const double root = std::sqrt(pivot);
        l(j, j) = root;
        for (std::size_t i = j + 1; i < k; ++i) {
            double s = gram(i, j);
            for (std::size_t c = 0; c < j; ++c) s -= l(i, c) * l(j, c);
            l(i, j) = s / root;
        }
    }
    return det;
}

inline Matrix gram_matrix(const Matrix& rows) {
    const std::size_t k = rows.rows();
    Matrix g(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j <= i; ++j) g(i, j) = g(j, i) = dot(rows.row(i), rows.row(j));
    return g;
}

inline double factorial(std::size_t k) {
    double f = 1.0;
    for (std::size_t i = 2; i <= k; ++i) f *= static_cast<double>(i);
    return f;
}

/// Squared volume of the simplex spanned by the subset's points and the
/// origin: det(Gram) / (k!)^2.
inline double simplex_volume_sq(const PointSet& points, std::span<const std::size_t> subset) {
    if (subset.empty()) throw std::invalid_argument("simplex_volume_sq: empty subset");
    const double f = factorial(subset.size());
    return gram_determinant(gram_matrix(points.gather(subset))) / (f * f);
}

// ---------------------------------------------------------------------------
// Spectral kernels

struct EigenDecomposition {
    std::vector<double> values; // descending
    Matrix vectors;             // row i is the eigenvector for values[i]
};

/// Cyclic Jacobi eigensolver for a symmetric matrix.
inline EigenDecomposition symmetric_eigen(Matrix a) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("symmetric_eigen: matrix not square");
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            diag += a(i, i) * a(i, i);
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        }
        if (off <= 1e-30 * diag || off == 0.0) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                // v rows hold eigenvector components per column of the rotation
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t i = 0; i < n; ++i) {
        out.values[i] = a(order[i], order[i]);
        for (std::size_t k = 0; k < n; ++k) out.vectors(i, k) = v(k, order[i]);
    }
    return out;
}

struct RightSingular {
    std::vector<double> sigma; // descending, length d
    Matrix vectors;            // row i is the right singular vector for sigma[i]
};

/// One-sided (Hestenes) Jacobi SVD of an n x d matrix. Only the singular
/// values and right singular vectors are returned.
inline RightSingular right_singular(const Matrix& x) {
    const std::size_t n = x.rows(), d = x.cols();
    // Columns of x become rows of `cols` so rotations touch contiguous memory.
    Matrix cols(d, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) cols(j, i) = x(i, j);
    Matrix v(d, d);
    for (std::size_t i = 0; i < d; ++i) v(i, i) = 1.0;

    constexpr double eps = 1e-15;
    for (int sweep = 0; sweep < 80; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                auto cp = cols.row(p), cq = cols.row(q);
                const double alpha = squared_norm(cp), beta = squared_norm(cq), gamma = dot(cp, cq);
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < n; ++k) {
                    const double a = cp[k], b = cq[k];
                    cp[k] = c * a - s * b;
                    cq[k] = s * a + c * b;
                }
                auto vp = v.row(p), vq = v.row(q);
                for (std::size_t k = 0; k < d; ++k) {
                    const double a = vp[k], b = vq[k];
                    vp[k] = c * a - s * b;
                    vq[k] = s * a + c * b;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(d);
    for (std::size_t j = 0; j < d; ++j) sigma[j] = norm(cols.row(j));
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });
    RightSingular out{std::vector<double>(d), Matrix(d, d)};
    for (std::size_t i = 0; i < d; ++i) {
        out.sigma[i] = sigma[order[i]];
        auto src = v.row(order[i]);
        std::copy(src.begin(), src.end(), out.vectors.row(i).begin());
    }
    return out;
}

struct OptimalSubspace {
    OrthonormalBasis basis;
    double error = 0.0; // sum of squared tail singular values
    std::vector<double> sigma;
};

/// Exact best k-dimensional subspace for p = 2 (top-k right singular
/// subspace). There is no exact oracle for other p.
inline OptimalSubspace optimal_subspace(const PointSet& points, std::size_t k, double p = 2.0) {
    if (p != 2.0) throw std::invalid_argument("optimal_subspace: exact oracle only exists for p = 2");
    if (k < 1 || k > points.dim()) throw std::invalid_argument("optimal_subspace: need 1 <= k <= d");
    RightSingular svd = right_singular(points.matrix());
    OptimalSubspace out{OrthonormalBasis(points.dim()), 0.0, svd.sigma};
    for (std::size_t i = 0; i < k; ++i) out.basis.add(svd.vectors.row(i));
    for (std::size_t i = k; i < svd.sigma.size(); ++i) out.error += svd.sigma[i] * svd.sigma[i];
    return out;
}

/// Best k-dimensional subspace (for p = 2) among those inside span(basis),
/// and its err_2: residual to the span plus the spectral tail of the in-span
/// coordinates. When the span has rank <= k the span itself is returned.
inline OptimalSubspace best_rank_k_in_span(const PointSet& points, const OrthonormalBasis& basis, std::size_t k) {
    double residual = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) residual += pow_p(basis.residual(points[i]), 2.0);
    const std::size_t r = basis.rank();
    if (r <= k) return {basis, residual, {}};

    Matrix gram(r, r);
    std::vector<double> y(r);
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = 0; j < r; ++j) y[j] = dot(basis.vectors().row(j), points[i]);
        for (std::size_t a = 0; a < r; ++a)
            for (std::size_t b = 0; b <= a; ++b) gram(a, b) += y[a] * y[b];
    }
    for (std::size_t a = 0; a < r; ++a)
        for (std::size_t b = 0; b < a; ++b) gram(b, a) = gram(a, b);
    EigenDecomposition eig = symmetric_eigen(std::move(gram));

    OptimalSubspace out{OrthonormalBasis(basis.dim(), 1.0), residual, {}};
    std::vector<double> v(basis.dim());
    for (std::size_t j = 0; j < k; ++j) {
        std::fill(v.begin(), v.end(), 0.0);
        for (std::size_t c = 0; c < r; ++c) axpy(eig.vectors(j, c), basis.vectors().row(c), v);
        out.basis.add(v);
    }
    for (std::size_t j = 0; j < r; ++j) out.sigma.push_back(std::sqrt(std::max(0.0, eig.values[j])));
    for (std::size_t j = k; j < r; ++j) out.error += std::max(0.0, eig.values[j]);
    return out;
}

inline double best_rank_k_error_in_span(const PointSet& points, const OrthonormalBasis& basis, std::size_t k) {
    return best_rank_k_in_span(points, basis, k).error;
}

} // namespace subsel
