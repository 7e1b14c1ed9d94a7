#pragma once

#include <subsel/linalg.hpp>
#include <subsel/mcmc.hpp>
#include <subsel/params.hpp>
#include <subsel/random.hpp>
#include <subsel/samplers.hpp>
#include <subsel/stream.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace subsel {

enum class InitMode { exact_volume, mcmc_volume, adaptive_k_pass };

inline std::string to_string(InitMode m) {
    switch (m) {
    case InitMode::exact_volume: return "exact-volume";
    case InitMode::mcmc_volume: return "mcmc-volume";
    case InitMode::adaptive_k_pass: return "adaptive-k-pass";
    }
    return "?";
}

inline InitMode parse_init_mode(const std::string& s) {
    if (s == "exact-volume") return InitMode::exact_volume;
    if (s == "mcmc-volume") return InitMode::mcmc_volume;
    if (s == "adaptive-k-pass") return InitMode::adaptive_k_pass;
    throw std::invalid_argument("unknown init mode: " + s);
}

struct SamplingConfig {
    std::size_t k = 1;
    double p = 2.0;
    double epsilon = 0.5;
    std::uint64_t seed = 1;
    InitMode init = InitMode::exact_volume;
    ParamOverrides overrides;
    std::optional<std::size_t> volume_walk_steps; // mcmc-volume; default 10 n k
    ProposalSampling proposals = ProposalSampling::reservoir;
    std::optional<double> outlier_lambda;         // sizes parameters for the outlier guarantee
};

/// Default init for an exponent: volume sampling for p = 2, the k-pass
/// adaptive scheme otherwise.
inline InitMode default_init(double p) { return p == 2.0 ? InitMode::exact_volume : InitMode::adaptive_k_pass; }

inline void validate(const SamplingConfig& c, std::size_t dim) {
    if (c.k < 1 || c.k > dim) throw std::invalid_argument("need 1 <= k <= d");
    if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw std::invalid_argument("need epsilon in (0, 1)");
    if (!(c.p >= 2.0) || !std::isfinite(c.p)) throw std::invalid_argument("need finite p >= 2");
    if (c.init == InitMode::mcmc_volume && c.p != 2.0)
        throw std::invalid_argument("mcmc-volume init is only defined for p = 2");
    if (c.outlier_lambda) {
        if (c.p != 2.0) throw std::invalid_argument("the outlier variant is only defined for p = 2");
        if (!(*c.outlier_lambda > 0.0 && *c.outlier_lambda <= 1.0))
            throw std::invalid_argument("need lambda in (0, 1]");
    }
}

/// Approximation factor of the initial subset: 1 for volume sampling, k! for
/// the k-pass adaptive scheme.
inline double init_alpha(InitMode init, std::size_t k) {
    return init == InitMode::adaptive_k_pass ? factorial(k) : 1.0;
}

inline DerivedParams params_for(const SamplingConfig& c) {
    ParamMode mode = ParamMode::l2();
    if (c.outlier_lambda) mode = ParamMode::l2_outlier(*c.outlier_lambda);
    else if (c.p != 2.0) mode = ParamMode::lp(c.p);
    return with_overrides(derive_params(c.k, c.epsilon, init_alpha(c.init, c.k), mode), c.overrides);
}

/// The initial subset S0. Volume inits read the rows in one pass and sample
/// from them in memory; the adaptive init takes k passes.
inline SelectedPoints initial_subset(DatasetSource& source, const SamplingConfig& c) {
    const std::uint64_t seed = seed_for(c.seed, Stream::init);
    if (c.init == InitMode::adaptive_k_pass) return adaptive_volume_init(source, c.k, c.p, seed).picked;

    Matrix rows(0, source.dim());
    rows.reserve(source.size());
    source.pass("init-volume", [&](std::size_t, std::span<const double> row) { rows.append_row(row); });
    const PointSet points(std::move(rows));
    SubsetIds ids;
    if (c.init == InitMode::exact_volume) {
        ids = volume_sample_exact(points, c.k, c.p, seed);
    } else {
        const std::size_t steps = c.volume_walk_steps.value_or(10 * points.size() * c.k);
        ids = volume_sample_mcmc(points, c.k, steps, seed_for(c.seed, Stream::volume_walk));
    }
    return SelectedPoints::from(points, ids);
}

/// Initial subset followed by mcmc_select. For p = 2 with a volume init this
/// is two passes; with the adaptive init it is k + 1.
inline SelectionResult select_subset(DatasetSource& source, const SamplingConfig& c) {
    validate(c, source.dim());
    const DerivedParams params = params_for(c);
    const std::size_t mark = source.log().total_passes();
    SelectedPoints s0 = initial_subset(source, c);
    PassLog passes = source.log().since(mark);
    SelectionResult out = mcmc_select(source, s0, params, c.p, c.seed, c.proposals);
    passes.append(out.pass_log);
    out.pass_log = std::move(passes);
    return out;
}

/// Pass count the pipeline must produce for a config.
inline std::size_t expected_pipeline_passes(const SamplingConfig& c) {
    return (c.init == InitMode::adaptive_k_pass ? c.k : 1) + 1;
}

} // namespace subsel
