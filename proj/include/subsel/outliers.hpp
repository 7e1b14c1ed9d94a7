#pragma once

#include <subsel/linalg.hpp>
#include <subsel/mcmc.hpp>
#include <subsel/pipeline.hpp>
#include <subsel/stream.hpp>
#include <subsel/synthetic.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace subsel {

struct OutlierConfig {
    double beta = 0.0;   // upper bound on the outlier fraction
    double lambda = 1.0; // assumed inlier share of the error under the inlier optimum

    void validate() const {
        if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("need 0 <= beta < 1");
        if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("need 0 < lambda <= 1");
    }
};

/// ceil((1 - beta) n), computed as n - floor(beta n) so no more than beta n
/// points are ever dropped.
inline std::size_t inlier_count(std::size_t n, double beta) { return n - outlier_count(n, beta); }

struct InlierSet {
    SubsetIds ids;             // ascending
    double inlier_error = 0.0; // sum over ids of squared distance
    double total_error = 0.0;  // same sum over all points

    friend bool operator==(const InlierSet&, const InlierSet&) = default;
};

namespace detail {
// Keep the `keep` smallest residuals; ties go to the smaller index.
inline InlierSet trim(const std::vector<double>& residual_sq, std::size_t keep) {
    std::vector<std::size_t> order(residual_sq.size());
    std::iota(order.begin(), order.end(), 0);
    auto nearer = [&](std::size_t a, std::size_t b) {
        return residual_sq[a] < residual_sq[b] || (residual_sq[a] == residual_sq[b] && a < b);
    };
    if (keep < order.size()) std::nth_element(order.begin(), order.begin() + keep, order.end(), nearer);
    order.resize(keep);
    std::sort(order.begin(), order.end());

    InlierSet out;
    out.ids = std::move(order);
    for (std::size_t i : out.ids) out.inlier_error += residual_sq[i];
    for (double r : residual_sq) out.total_error += r;
    return out;
}
} // namespace detail

/// N_beta(V): the ceil((1 - beta) n) points nearest to span(basis), with their
/// squared-distance sum. One pass.
inline InlierSet nearest_inliers(DatasetSource& source, const OrthonormalBasis& basis, double beta,
                                 std::string label = "inliers") {
    if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("nearest_inliers: need 0 <= beta < 1");
    std::vector<double> r(source.size());
    source.pass(std::move(label), [&](std::size_t i, std::span<const double> row) {
        r[i] = pow_p(basis.residual(row), 2.0);
    });
    return detail::trim(r, inlier_count(source.size(), beta));
}

inline InlierSet nearest_inliers(const PointSet& points, const OrthonormalBasis& basis, double beta) {
    DatasetSource source = DatasetSource::from_points(points);
    return nearest_inliers(source, basis, beta);
}

/// Inlier share of the squared error to a reference subspace. The inliers are
/// the given ids when known, otherwise N_beta of the reference. A zero total
/// error gives 1.
inline double check_lambda(const PointSet& points, const OrthonormalBasis& reference, double beta,
                           std::optional<std::span<const std::size_t>> inliers = std::nullopt) {
    double inlier = 0.0, total = 0.0;
    if (inliers) {
        std::vector<char> in(points.size(), 0);
        for (std::size_t id : *inliers) {
            if (id >= points.size()) throw std::out_of_range("check_lambda: inlier id out of range");
            in[id] = 1;
        }
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double r = pow_p(reference.residual(points[i]), 2.0);
            total += r;
            if (in[i]) inlier += r;
        }
    } else {
        const InlierSet set = nearest_inliers(points, reference, beta);
        inlier = set.inlier_error;
        total = set.total_error;
    }
    return total == 0.0 ? 1.0 : inlier / total;
}

struct RobustConfig {
    std::size_t k = 1;
    double epsilon = 0.5;
    OutlierConfig outliers;
    std::uint64_t seed = 1;
    InitMode init = InitMode::exact_volume;
    ParamOverrides overrides;
    ProposalSampling proposals = ProposalSampling::reservoir;
    // Known ratio from check_lambda on ground truth, compared against lambda.
    std::optional<double> observed_lambda;
};

struct RobustResult {
    SelectionResult selection; // pass_log holds the sampling passes only
    InlierSet inliers;         // N_beta(span(output)), from a reporting pass
    std::vector<std::string> warnings;
};

/// The two-pass pipeline sized for the outlier guarantee (alpha / lambda in
/// the parameters). Sampling runs over all points; beta is only used to
/// trim the reported error.
inline RobustResult robust_select(DatasetSource& source, const RobustConfig& c) {
    c.outliers.validate();
    SamplingConfig sc;
    sc.k = c.k;
    sc.p = 2.0;
    sc.epsilon = c.epsilon;
    sc.seed = c.seed;
    sc.init = c.init;
    sc.overrides = c.overrides;
    sc.proposals = c.proposals;
    sc.outlier_lambda = c.outliers.lambda;

    RobustResult out;
    if (c.observed_lambda && *c.observed_lambda < c.outliers.lambda)
        out.warnings.push_back("lambda assumption violated: observed " + detail::format_double(*c.observed_lambda) +
                               " < " + detail::format_double(c.outliers.lambda));
    out.selection = select_subset(source, sc);
    const std::size_t mark = source.log().total_passes();
    out.inliers = nearest_inliers(source, out.selection.all().basis(source.dim()), c.outliers.beta);
    out.selection.evaluation_log.append(source.log().since(mark));
    return out;
}

} // namespace subsel
