#pragma once

#include <subsel/linalg.hpp>
#include <subsel/random.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace subsel {

struct SyntheticSpec {
    std::size_t n = 1000;
    std::size_t d = 20;
    std::size_t rank = 3;
    // Expected norm of the noise vector added to each inlier. Noise is
    // isotropic, N(0, noise_sigma^2 / d) per coordinate.
    double noise_sigma = 0.1;
    double outlier_frac = 0.0;
    // Exact distance of each outlier from the planted subspace.
    double outlier_scale = 1.0;
    std::uint64_t seed = 1;
};

struct SyntheticData {
    PointSet points;
    Matrix planted;     // rank x d, orthonormal rows
    SubsetIds inliers;  // ascending
    SubsetIds outliers; // ascending
};

inline std::size_t outlier_count(std::size_t n, double beta) {
    return static_cast<std::size_t>(std::floor(beta * static_cast<double>(n) + 1e-9));
}

/// Low-rank-plus-noise instance with optional planted outliers.
///
/// Inliers are Gaussian combinations of `rank` orthonormal directions plus
/// isotropic noise. Outliers share the in-subspace component and sit at
/// distance outlier_scale along a random direction orthogonal to the planted
/// subspace. Outlier positions are a uniformly random subset of size
/// floor(outlier_frac * n).
inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n == 0 || spec.d == 0) throw std::invalid_argument("generate_synthetic: need n, d >= 1");
    if (spec.rank < 1 || spec.rank > spec.d) throw std::invalid_argument("generate_synthetic: need 1 <= rank <= d");
    if (!(spec.outlier_frac >= 0.0 && spec.outlier_frac < 1.0))
        throw std::invalid_argument("generate_synthetic: need 0 <= outlier_frac < 1");
    if (!(spec.noise_sigma >= 0.0) || !(spec.outlier_scale >= 0.0))
        throw std::invalid_argument("generate_synthetic: scales must be nonnegative");

    Rng rng(seed_for(spec.seed, Stream::synthetic));
    const std::size_t d = spec.d;

    OrthonormalBasis planted(d, 1.0);
    std::vector<double> g(d);
    while (planted.rank() < spec.rank) {
        for (auto& v : g) v = rng.normal();
        planted.add(g);
    }

    std::vector<std::size_t> order(spec.n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = spec.n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    std::vector<char> is_outlier(spec.n, 0);
    const std::size_t n_out = outlier_count(spec.n, spec.outlier_frac);
    for (std::size_t i = 0; i < n_out; ++i) is_outlier[order[i]] = 1;

    Matrix data(spec.n, d);
    const double noise_scale = spec.noise_sigma / std::sqrt(static_cast<double>(d));
    SyntheticData out;
    for (std::size_t i = 0; i < spec.n; ++i) {
        auto x = data.row(i);
        for (std::size_t j = 0; j < spec.rank; ++j) axpy(rng.normal(), planted.vectors().row(j), x);
        if (is_outlier[i]) {
            std::vector<double> dir(d);
            double len = 0.0;
            for (int attempt = 0; attempt < 100 && len == 0.0; ++attempt) {
                for (auto& v : dir) v = rng.normal();
                if (spec.rank < d) {
                    auto proj = planted.project(dir);
                    for (std::size_t c = 0; c < d; ++c) dir[c] -= proj[c];
                }
                len = norm(dir);
            }
            axpy(spec.outlier_scale / len, dir, x);
            out.outliers.push_back(i);
        } else {
            for (auto& v : x) v += noise_scale * rng.normal();
            out.inliers.push_back(i);
        }
    }
    out.points = PointSet(std::move(data));
    out.planted = planted.vectors();
    return out;
}

} // namespace subsel
