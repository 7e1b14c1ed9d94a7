#pragma once

#include <subsel/errors.hpp>
#include <subsel/linalg.hpp>
#include <subsel/random.hpp>
#include <subsel/stream.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace subsel {

/// Picked points: ids plus their coordinates, so the span can be rebuilt
/// without touching the source again.
struct SelectedPoints {
    SubsetIds ids;
    Matrix coords; // one row per id

    SelectedPoints() = default;
    explicit SelectedPoints(std::size_t dim) : coords(0, dim) {}

    std::size_t size() const { return ids.size(); }

    void add(std::size_t id, std::span<const double> row) {
        ids.push_back(id);
        coords.append_row(row);
    }

    void append(const SelectedPoints& other) {
        for (std::size_t i = 0; i < other.size(); ++i) add(other.ids[i], other.coords.row(i));
    }

    static SelectedPoints from(const PointSet& points, std::span<const std::size_t> ids) {
        SelectedPoints out(points.dim());
        for (std::size_t id : ids) {
            if (id >= points.size()) throw std::out_of_range("SelectedPoints: id out of range");
            out.add(id, points[id]);
        }
        return out;
    }

    OrthonormalBasis basis(std::size_t dim) const { return basis_of_rows(coords, dim, ids); }

    friend bool operator==(const SelectedPoints&, const SelectedPoints&) = default;
};

/// Inverse-CDF sampling from a fixed nonnegative weight vector.
class DiscreteSampler {
public:
    explicit DiscreteSampler(std::span<const double> weights) : cumulative_(weights.size()) {
        double total = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
                throw std::invalid_argument("DiscreteSampler: weights must be finite and nonnegative");
            total += weights[i];
            cumulative_[i] = total;
        }
        if (total <= 0.0) throw DegenerateWeightsError();
    }

    std::size_t operator()(Rng& rng) const {
        const double u = rng.uniform() * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        // upper_bound lands on an entry with cumulative[i] > cumulative[i-1],
        // i.e. positive weight, unless rounding pushed u past the end.
        std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
        if (i == cumulative_.size()) {
            i = cumulative_.size() - 1;
            while (i > 0 && cumulative_[i] == cumulative_[i - 1]) --i;
        }
        return i;
    }

    double total() const { return cumulative_.back(); }

private:
    std::vector<double> cumulative_;
};

// ---------------------------------------------------------------------------
// Adaptive sampling

struct AdaptiveRound {
    SelectedPoints picked;
    bool exact_fit = false; // every residual was zero; nothing was picked
};

/// t i.i.d. draws with probability proportional to d(x, span(current))^p, in
/// one pass over the source.
inline AdaptiveRound adaptive_sample_round(DatasetSource& source, const SelectedPoints& current, std::size_t t,
                                           double p, std::uint64_t seed, std::string label = "adaptive-round") {
    if (t < 1) throw std::invalid_argument("adaptive_sample_round: need t >= 1");
    const OrthonormalBasis basis = current.basis(source.dim());
    ReservoirBank bank(t, seed);
    source.pass(std::move(label), [&](std::size_t i, std::span<const double> row) {
        bank.offer(i, row, pow_p(basis.residual(row), p));
    });
    AdaptiveRound out{SelectedPoints(source.dim()), bank.degenerate()};
    if (out.exact_fit) return out;
    for (std::size_t s = 0; s < t; ++s) {
        const std::size_t id = bank.slot_id(s);
        out.picked.add(id, bank.row(id));
    }
    return out;
}

/// count i.i.d. draws with probability proportional to ||x||^p (squared-length
/// sampling for p = 2). One pass.
inline SelectedPoints squared_length_sample(DatasetSource& source, std::size_t count, double p, std::uint64_t seed) {
    AdaptiveRound r = adaptive_sample_round(source, SelectedPoints(source.dim()), count, p, seed, "squared-length");
    if (r.exact_fit) throw DegenerateWeightsError();
    return r.picked;
}

inline SubsetIds squared_length_sample(const PointSet& points, std::size_t count, double p, std::uint64_t seed) {
    DatasetSource source = DatasetSource::from_points(points);
    return squared_length_sample(source, count, p, seed).ids;
}

/// k rounds of adaptive sampling with one point per round (k passes). The
/// result is a k!-approximate volume sample; it is used as the initial subset
/// when p > 2. Stops early, with fewer than k points, on an exact fit.
inline AdaptiveRound adaptive_volume_init(DatasetSource& source, std::size_t k, double p, std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("adaptive_volume_init: need k >= 1");
    AdaptiveRound out{SelectedPoints(source.dim()), false};
    for (std::size_t r = 0; r < k; ++r) {
        AdaptiveRound round = adaptive_sample_round(source, out.picked, 1, p, seed_for(seed, Stream::init, r),
                                                    "init-adaptive-" + std::to_string(r + 1));
        if (round.exact_fit) {
            out.exact_fit = true;
            break;
        }
        out.picked.append(round.picked);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Volume sampling

inline double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    k = std::min(k, n - k);
    double c = 1.0;
    for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    return std::round(c);
}

inline constexpr double kEnumerationLimit = 1e6;

namespace detail {

// Calls fn(subset) for every k-subset of [0, n) in lexicographic order.
template <class Fn>
void for_each_subset(std::size_t n, std::size_t k, Fn&& fn) {
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
        fn(std::span<const std::size_t>(idx));
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
        if (i == 0) return;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

// Exact k-subset draw with probability proportional to det(X_S X_S^T): a k-DPP
// with L = X X^T, sampled through the d x d dual kernel X^T X.
inline SubsetIds volume_sample_spectral(const PointSet& points, std::size_t k, Rng& rng) {
    const std::size_t n = points.size(), d = points.dim();
    Matrix cov(d, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto x = points[i];
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b <= a; ++b) cov(a, b) += x[a] * x[b];
    }
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < a; ++b) cov(b, a) = cov(a, b);
    EigenDecomposition eig = symmetric_eigen(std::move(cov));

    const double top = eig.values.empty() ? 0.0 : eig.values[0];
    std::vector<double> mu(d, 0.0);
    std::size_t rank = 0;
    for (std::size_t j = 0; j < d; ++j) {
        if (top > 0.0 && eig.values[j] > kRankTolerance * kRankTolerance * top) {
            mu[j] = eig.values[j] / top;
            ++rank;
        }
    }
    if (rank < k) throw RankDeficientError();

    // Elementary symmetric polynomials e[l][j] of mu[0..j).
    std::vector<std::vector<double>> e(k + 1, std::vector<double>(d + 1, 0.0));
    std::fill(e[0].begin(), e[0].end(), 1.0);
    for (std::size_t l = 1; l <= k; ++l)
        for (std::size_t j = 1; j <= d; ++j) e[l][j] = e[l][j - 1] + mu[j - 1] * e[l - 1][j - 1];

    std::vector<std::size_t> chosen;
    std::size_t remaining = k;
    for (std::size_t j = d; j >= 1 && remaining > 0; --j) {
        const double accept = mu[j - 1] * e[remaining - 1][j - 1] / e[remaining][j];
        if (rng.uniform() < accept) {
            chosen.push_back(j - 1);
            --remaining;
        }
    }

    // Rows of y are the points' coordinates in the chosen eigenbasis, scaled
    // so the columns of y are orthonormal: a rank-k projection DPP.
    Matrix y(n, k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c)
            y(i, c) = dot(points[i], eig.vectors.row(chosen[c])) / std::sqrt(eig.values[chosen[c]]);

    SubsetIds picked;
    std::vector<double> weight(n);
    std::vector<double> e_dir(k);
    for (std::size_t step = 0; step < k; ++step) {
        for (std::size_t i = 0; i < n; ++i) weight[i] = squared_norm(y.row(i));
        for (std::size_t id : picked) weight[id] = 0.0;
        const std::size_t pick = DiscreteSampler(weight)(rng);
        picked.push_back(pick);
        const double len = norm(y.row(pick));
        for (std::size_t c = 0; c < k; ++c) e_dir[c] = y(pick, c) / len;
        for (std::size_t i = 0; i < n; ++i) axpy(-dot(y.row(i), e_dir), e_dir, y.row(i));
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

} // namespace detail

/// One k-subset with probability vol(simplex_S)^p / sum_T vol(simplex_T)^p.
///
/// p = 2 is sampled exactly for any n through the spectral (k-DPP)
/// construction. Other p fall back to enumerating all C(n, k) subsets, which
/// is refused beyond one million subsets.
inline SubsetIds volume_sample_exact(const PointSet& points, std::size_t k, double p, std::uint64_t seed) {
    if (k < 1 || k > points.size()) throw std::invalid_argument("volume_sample_exact: need 1 <= k <= n");
    Rng rng(seed);
    if (p == 2.0) return detail::volume_sample_spectral(points, k, rng);

    if (binomial(points.size(), k) > kEnumerationLimit)
        throw EnumerationGuardError("volume_sample_exact: C(n, k) exceeds the enumeration limit");
    std::vector<SubsetIds> subsets;
    std::vector<double> weight;
    detail::for_each_subset(points.size(), k, [&](std::span<const std::size_t> s) {
        subsets.emplace_back(s.begin(), s.end());
        weight.push_back(std::pow(simplex_volume_sq(points, s), p / 2.0));
    });
    if (std::all_of(weight.begin(), weight.end(), [](double w) { return w == 0.0; })) throw RankDeficientError();
    return subsets[DiscreteSampler(weight)(rng)];
}

/// Greedy start for the volume walk: k rounds of picking the point farthest
/// from the span of those already picked.
inline SubsetIds greedy_volume_start(const PointSet& points, std::size_t k) {
    OrthonormalBasis basis(points.dim(), max_row_norm(points.matrix()));
    SubsetIds picked;
    for (std::size_t r = 0; r < k; ++r) {
        std::size_t best = 0;
        double best_res = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double res = basis.residual(points[i]);
            if (res > best_res) best_res = res, best = i;
        }
        if (best_res <= 0.0 || !basis.add(points[best], best))
            throw RankDeficientError("volume_sample_mcmc: cannot find a full-rank initial subset");
        picked.push_back(best);
    }
    return picked;
}

struct VolumeWalkStats {
    std::size_t proposals = 0;
    std::size_t accepted = 0;
};

/// Lazy swap walk over k-subsets whose stationary law is volume sampling
/// (p = 2). Each step stays put with probability 1/2; otherwise it proposes
/// swapping a uniform member for a uniform non-member and accepts with
/// probability min(1, vol(T)^2 / vol(S)^2).
inline SubsetIds volume_sample_mcmc(const PointSet& points, std::size_t k, std::size_t walk_steps, std::uint64_t seed,
                                    VolumeWalkStats* stats = nullptr) {
    const std::size_t n = points.size();
    if (k < 1 || k > n) throw std::invalid_argument("volume_sample_mcmc: need 1 <= k <= n");
    SubsetIds current = greedy_volume_start(points, k);
    if (k == n) {
        std::sort(current.begin(), current.end());
        return current;
    }

    std::vector<char> member(n, 0);
    for (std::size_t id : current) member[id] = 1;
    SubsetIds outside;
    for (std::size_t i = 0; i < n; ++i)
        if (!member[i]) outside.push_back(i);

    Matrix gram = gram_matrix(points.gather(current));
    double det = gram_determinant(gram);
    Rng rng(seed);
    Matrix proposal = gram;
    for (std::size_t step = 0; step < walk_steps; ++step) {
        if (rng.coin()) continue;
        const std::size_t slot = rng.index(k);
        const std::size_t pos = rng.index(outside.size());
        const std::size_t incoming = outside[pos];

        proposal = gram;
        for (std::size_t c = 0; c < k; ++c) {
            const double g = c == slot ? squared_norm(points[incoming]) : dot(points[incoming], points[current[c]]);
            proposal(slot, c) = proposal(c, slot) = g;
        }
        const double det_new = gram_determinant(proposal);
        if (stats) ++stats->proposals;
        if (det_new == 0.0) continue;
        if (det_new >= det || rng.uniform() < det_new / det) {
            outside[pos] = current[slot];
            current[slot] = incoming;
            gram = proposal;
            det = det_new;
            if (stats) ++stats->accepted;
        }
    }
    std::sort(current.begin(), current.end());
    return current;
}

// ---------------------------------------------------------------------------
// Multi-pass adaptive baseline

struct AdaptiveResult {
    SelectedPoints s0;
    std::vector<SelectedPoints> blocks;
    double error = 0.0;
    PassLog pass_log;       // sampling passes
    PassLog evaluation_log; // the reporting pass that computed `error`
    bool exact_fit = false;

    SelectedPoints all() const {
        SelectedPoints out = s0;
        for (const auto& b : blocks) out.append(b);
        return out;
    }
};

/// err_p of span(selected) over the whole source, in one pass.
inline double evaluate_error(DatasetSource& source, const SelectedPoints& selected, double p,
                             std::string label = "evaluate") {
    const OrthonormalBasis basis = selected.basis(source.dim());
    double total = 0.0;
    source.pass(std::move(label), [&](std::size_t, std::span<const double> row) {
        total += pow_p(basis.residual(row), p);
    });
    return total;
}

/// l sequential rounds of t adaptive draws, each conditioned on everything
/// picked so far; one pass per round. Stops early on an exact fit.
inline AdaptiveResult adaptive_sample(DatasetSource& source, const SelectedPoints& s0, std::size_t t, std::size_t l,
                                      double p, std::uint64_t seed) {
    AdaptiveResult out;
    out.s0 = s0;
    const std::size_t mark = source.log().total_passes();
    SelectedPoints current = s0;
    for (std::size_t r = 0; r < l; ++r) {
        AdaptiveRound round = adaptive_sample_round(source, current, t, p, seed_for(seed, Stream::adaptive_round, r),
                                                    "adaptive-" + std::to_string(r + 1));
        if (round.exact_fit) {
            out.exact_fit = true;
            break;
        }
        current.append(round.picked);
        out.blocks.push_back(std::move(round.picked));
    }
    out.pass_log = source.log().since(mark);
    const std::size_t eval_mark = source.log().total_passes();
    out.error = evaluate_error(source, current, p);
    out.evaluation_log = source.log().since(eval_mark);
    return out;
}

} // namespace subsel
