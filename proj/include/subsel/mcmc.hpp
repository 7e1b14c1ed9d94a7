#pragma once

#include <subsel/errors.hpp>
#include <subsel/linalg.hpp>
#include <subsel/params.hpp>
#include <subsel/random.hpp>
#include <subsel/samplers.hpp>
#include <subsel/stream.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace subsel {

/// Proposal mass of a point under the pivot mixture
///   q(x) = 1/2 * d(x, span S0)^p / err_p(X, S0) + 1/(2n).
inline double proposal_q(double residual_p, double pivot_error, std::size_t n) {
    if (!(pivot_error > 0.0)) throw std::invalid_argument("proposal_q: pivot error must be positive");
    return 0.5 * residual_p / pivot_error + 0.5 / static_cast<double>(n);
}

/// Metropolis-Hastings test p(y) q(x) / (p(x) q(y)) > u, cross-multiplied so a
/// zero-mass current state always moves to a positive-mass proposal.
inline bool mh_accept(double p_y, double q_x, double p_x, double q_y, double u) {
    return p_y * q_x > u * p_x * q_y;
}

struct ChainState {
    std::size_t id = 0;   // source index of the current point
    double p_x = 0.0;     // unnormalized target weight d(x, span S_cur)^p
    double q_x = 0.0;     // proposal probability
    std::size_t steps = 0;
};

struct ChainStats {
    std::size_t proposed = 0;
    std::size_t accepted = 0;
    friend bool operator==(const ChainStats&, const ChainStats&) = default;
};

/// How the proposal draws are produced.
///  reservoir:   one streaming pass fills two reservoir banks (residual-
///               weighted and uniform) and a fair coin per slot picks the bank.
///  inverse_cdf: in-memory only; q is computed exactly after the pass and
///               sampled directly. Same distribution, different draws.
enum class ProposalSampling { reservoir, inverse_cdf };

struct SelectionResult {
    SelectedPoints s0;
    std::vector<SelectedPoints> blocks; // A_1 .. A_l, t points each
    DerivedParams params;
    double pivot_error = 0.0; // err_p(X, S0), accumulated in the proposal pass
    double error = 0.0;       // err_p(X, span(S0 and all blocks))
    PassLog pass_log;         // sampling passes, initialization included when run as a pipeline
    PassLog evaluation_log;   // reporting pass for `error`
    std::vector<ChainStats> chains;
    bool exact_fit = false;

    SelectedPoints all() const {
        SelectedPoints out = s0;
        for (const auto& b : blocks) out.append(b);
        return out;
    }
    std::size_t size() const {
        std::size_t s = s0.size();
        for (const auto& b : blocks) s += b.size();
        return s;
    }
    double acceptance_rate() const {
        std::size_t prop = 0, acc = 0;
        for (const auto& c : chains) prop += c.proposed, acc += c.accepted;
        return prop ? static_cast<double>(acc) / static_cast<double>(prop)
                    : std::numeric_limits<double>::quiet_NaN();
    }
};

namespace detail {

// Candidate pool left behind by the proposal pass.
struct ProposalPool {
    std::vector<std::size_t> slot_ids;   // t*l*m proposal draws from q
    std::vector<std::size_t> floor_ids;  // one uniform draw per chain
    std::map<std::size_t, std::vector<double>> rows;
    double pivot_error = 0.0;

    std::span<const double> row(std::size_t id) const { return rows.at(id); }
};

inline std::size_t slot_count(const DerivedParams& params) {
    const double slots = static_cast<double>(params.t) * static_cast<double>(params.l) * static_cast<double>(params.m);
    if (slots > 1e9) throw std::invalid_argument("mcmc_select: t*l*m proposal slots exceed 1e9; override m");
    return params.t * params.l * params.m;
}

inline ProposalPool reservoir_pool(DatasetSource& source, const OrthonormalBasis& pivot, const DerivedParams& params,
                                   double p, std::uint64_t seed) {
    ProposalPool pool;
    const std::size_t slots = slot_count(params);
    const std::size_t chains = params.t * params.l;
    if (slots == 0) return pool;

    ReservoirBank residual_bank(slots, seed_for(seed, Stream::residual_bank));
    ReservoirBank uniform_bank(slots, seed_for(seed, Stream::uniform_bank));
    double err = 0.0;
    source.pass("mcmc-proposals", [&](std::size_t i, std::span<const double> row) {
        const double w = pow_p(pivot.residual(row), p);
        err += w;
        residual_bank.offer(i, row, w);
        uniform_bank.offer(i, row, 1.0);
    });
    pool.pivot_error = err;

    auto keep = [&](std::size_t id, const ReservoirBank& bank) {
        if (!pool.rows.count(id)) {
            auto r = bank.row(id);
            pool.rows.emplace(id, std::vector<double>(r.begin(), r.end()));
        }
    };
    for (std::size_t c = 0; c < chains; ++c) {
        const std::size_t id = uniform_bank.slot_id(c * params.m);
        pool.floor_ids.push_back(id);
        keep(id, uniform_bank);
    }
    if (residual_bank.degenerate()) return pool;

    Rng coins(seed_for(seed, Stream::bank_coins));
    pool.slot_ids.resize(slots);
    for (std::size_t s = 0; s < slots; ++s) {
        const ReservoirBank& bank = coins.coin() ? residual_bank : uniform_bank;
        pool.slot_ids[s] = bank.slot_id(s);
        keep(pool.slot_ids[s], bank);
    }
    return pool;
}

inline ProposalPool inverse_cdf_pool(DatasetSource& source, const OrthonormalBasis& pivot,
                                     const DerivedParams& params, double p, std::uint64_t seed) {
    const PointSet& points = source.points();
    ProposalPool pool;
    const std::size_t slots = slot_count(params);
    const std::size_t chains = params.t * params.l;
    const std::size_t n = source.size();
    std::vector<double> residual(n);
    double err = 0.0;
    source.pass("mcmc-proposals", [&](std::size_t i, std::span<const double> row) {
        residual[i] = pow_p(pivot.residual(row), p);
        err += residual[i];
    });
    pool.pivot_error = err;
    if (slots == 0) return pool;

    auto keep = [&](std::size_t id) {
        if (!pool.rows.count(id)) pool.rows.emplace(id, std::vector<double>(points[id].begin(), points[id].end()));
    };
    Rng uniform(seed_for(seed, Stream::uniform_bank));
    for (std::size_t c = 0; c < chains; ++c) {
        pool.floor_ids.push_back(uniform.index(n));
        keep(pool.floor_ids.back());
    }
    if (err == 0.0) return pool;

    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = proposal_q(residual[i], err, n);
    DiscreteSampler sampler(q);
    Rng rng(seed_for(seed, Stream::residual_bank));
    pool.slot_ids.resize(slots);
    for (std::size_t s = 0; s < slots; ++s) {
        pool.slot_ids[s] = sampler(rng);
        keep(pool.slot_ids[s]);
    }
    return pool;
}

} // namespace detail

/// Picks l blocks of t points each with a single pass over the source.
///
/// The pass computes err_p(X, S0) and prefetches all t*l*m proposal draws from
/// q. Round i then runs t independent Metropolis chains of m states each
/// (a start drawn from q plus m-1 proposals) targeting
/// d(x, span(S0, A_1..A_{i-1}))^p; each chain's final point joins A_i. Target
/// weights are unnormalized because the normalizer cancels in the acceptance
/// ratio. The reported `error` comes from a separate evaluation pass.
///
/// When S0 already fits exactly, or every pooled candidate has zero target
/// weight in some round, the remaining blocks take the chains' uniform floor
/// draws instead.
inline SelectionResult mcmc_select(DatasetSource& source, const SelectedPoints& s0, const DerivedParams& params,
                                   double p, std::uint64_t seed,
                                   ProposalSampling sampling = ProposalSampling::reservoir) {
    if (!(p >= 1.0) || !std::isfinite(p)) throw std::invalid_argument("mcmc_select: need finite p >= 1");
    if (s0.coords.rows() && s0.coords.cols() != source.dim())
        throw std::invalid_argument("mcmc_select: dimension mismatch between s0 and source");
    if (params.t < 1 || params.m < 1) throw std::invalid_argument("mcmc_select: need t, m >= 1");

    SelectionResult out;
    out.s0 = s0;
    out.params = params;
    const std::size_t n = source.size();
    const std::size_t dim = source.dim();
    const std::size_t mark = source.log().total_passes();

    OrthonormalBasis current = s0.basis(dim);
    const detail::ProposalPool pool = sampling == ProposalSampling::reservoir
                                          ? detail::reservoir_pool(source, current, params, p, seed)
                                          : detail::inverse_cdf_pool(source, current, params, p, seed);
    out.pass_log = source.log().since(mark);
    out.pivot_error = pool.pivot_error;
    out.exact_fit = pool.pivot_error == 0.0;

    std::unordered_map<std::size_t, double> q_of;
    if (!out.exact_fit) {
        const OrthonormalBasis pivot = s0.basis(dim);
        q_of.reserve(pool.rows.size());
        for (const auto& [id, row] : pool.rows)
            q_of.emplace(id, proposal_q(pow_p(pivot.residual(row), p), pool.pivot_error, n));
    }

    std::unordered_map<std::size_t, double> target;
    target.reserve(pool.rows.size());
    for (std::size_t round = 0; round < params.l; ++round) {
        SelectedPoints block(dim);
        const std::size_t first_chain = round * params.t;

        if (!out.exact_fit) {
            target.clear();
            bool any_mass = false;
            for (const auto& [id, row] : pool.rows) {
                const double w = pow_p(current.residual(row), p);
                target.emplace(id, w);
                any_mass = any_mass || w > 0.0;
            }
            out.exact_fit = !any_mass;
        }

        for (std::size_t c = 0; c < params.t; ++c) {
            const std::size_t chain = first_chain + c;
            if (out.exact_fit) {
                const std::size_t id = pool.floor_ids[chain];
                block.add(id, pool.row(id));
                out.chains.push_back({});
                continue;
            }
            Rng rng(seed_for(seed, Stream::chain, chain));
            const std::size_t base = chain * params.m;
            ChainState state{pool.slot_ids[base], 0.0, 0.0, 0};
            state.p_x = target.at(state.id);
            state.q_x = q_of.at(state.id);
            ChainStats stats;
            for (std::size_t j = 1; j < params.m; ++j) {
                const std::size_t y = pool.slot_ids[base + j];
                const double p_y = target.at(y);
                const double q_y = q_of.at(y);
                ++stats.proposed;
                if (mh_accept(p_y, state.q_x, state.p_x, q_y, rng.uniform())) {
                    state = {y, p_y, q_y, state.steps};
                    ++stats.accepted;
                }
                ++state.steps;
            }
            block.add(state.id, pool.row(state.id));
            out.chains.push_back(stats);
        }

        for (std::size_t i = 0; i < block.size(); ++i) current.add(block.coords.row(i), block.ids[i]);
        out.blocks.push_back(std::move(block));
    }

    const std::size_t eval_mark = source.log().total_passes();
    out.error = evaluate_error(source, out.all(), p);
    out.evaluation_log = source.log().since(eval_mark);
    return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct TvDiagnostic {
    double tv = 0.0;              // empirical end-state law vs exact target
    double gamma = 0.0;           // max_x p(x) / q(x), normalized p
    double acceptance_rate = 0.0;
    double error_ratio = 0.0;     // err_p(X, S_current) / err_p(X, S0)
    std::vector<double> empirical;
    std::vector<double> target;
    std::vector<double> proposal;
};

inline constexpr std::size_t kDiagnosticLimit = 4096;

/// Runs `trials` independent single-point chains of m states with pivot s0
/// and target d(., span(s_current))^p, and compares the law of their final
/// states with the exact adaptive distribution. s_current must contain s0.
inline TvDiagnostic tv_distance_diag(const PointSet& points, std::span<const std::size_t> s0,
                                     std::span<const std::size_t> s_current, std::size_t m, double p,
                                     std::size_t trials, std::uint64_t seed) {
    const std::size_t n = points.size();
    if (n > kDiagnosticLimit) throw EnumerationGuardError("tv_distance_diag: n exceeds the enumeration limit");
    if (m < 1 || trials < 1) throw std::invalid_argument("tv_distance_diag: need m, trials >= 1");
    {
        std::vector<std::size_t> a(s0.begin(), s0.end()), b(s_current.begin(), s_current.end());
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (!std::includes(b.begin(), b.end(), a.begin(), a.end()))
            throw std::invalid_argument("tv_distance_diag: s_current must contain s0");
    }

    const OrthonormalBasis pivot = orthonormal_basis(points, s0);
    const OrthonormalBasis cur = orthonormal_basis(points, s_current);
    std::vector<double> r0(n), r(n);
    double err0 = 0.0, err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r0[i] = pow_p(pivot.residual(points[i]), p);
        r[i] = pow_p(cur.residual(points[i]), p);
        err0 += r0[i];
        err += r[i];
    }
    if (err == 0.0) throw Error("tv_distance_diag: s_current already fits exactly");

    TvDiagnostic out;
    out.error_ratio = err / err0;
    out.target.resize(n);
    out.proposal.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.target[i] = r[i] / err;
        out.proposal[i] = proposal_q(r0[i], err0, n);
        out.gamma = std::max(out.gamma, out.target[i] / out.proposal[i]);
    }

    DiscreteSampler draw(out.proposal);
    Rng rng(seed_for(seed, Stream::diagnostic));
    std::vector<std::size_t> counts(n, 0);
    std::size_t accepted = 0, proposed = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::size_t x = draw(rng);
        for (std::size_t j = 1; j < m; ++j) {
            const std::size_t y = draw(rng);
            ++proposed;
            if (mh_accept(r[y], out.proposal[x], r[x], out.proposal[y], rng.uniform())) {
                x = y;
                ++accepted;
            }
        }
        ++counts[x];
    }
    out.empirical.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.empirical[i] = static_cast<double>(counts[i]) / static_cast<double>(trials);
        out.tv += 0.5 * std::abs(out.empirical[i] - out.target[i]);
    }
    out.acceptance_rate = proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
    return out;
}

} // namespace subsel
