#pragma once

#include <subsel/linalg.hpp>
#include <subsel/mcmc.hpp>
#include <subsel/outliers.hpp>
#include <subsel/params.hpp>
#include <subsel/pipeline.hpp>
#include <subsel/samplers.hpp>
#include <subsel/stream.hpp>
#include <subsel/synthetic.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace subsel {

enum class Algorithm { mcmc, adaptive, fkv, svd_oracle, volume_exact, volume_mcmc };

inline std::string to_string(Algorithm a) {
    switch (a) {
    case Algorithm::mcmc: return "mcmc";
    case Algorithm::adaptive: return "adaptive";
    case Algorithm::fkv: return "fkv";
    case Algorithm::svd_oracle: return "svd-oracle";
    case Algorithm::volume_exact: return "volume-exact";
    case Algorithm::volume_mcmc: return "volume-mcmc";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
    for (Algorithm a : {Algorithm::mcmc, Algorithm::adaptive, Algorithm::fkv, Algorithm::svd_oracle,
                        Algorithm::volume_exact, Algorithm::volume_mcmc})
        if (to_string(a) == s) return a;
    throw std::invalid_argument("unknown algorithm: " + s);
}

struct ExperimentSpec {
    // Dataset: a file when `path` is set, otherwise a synthetic instance.
    std::optional<std::filesystem::path> path;
    SyntheticSpec synthetic;
    std::optional<SubsetIds> true_inliers; // ground truth for the outlier optimum
    AccessMode mode = AccessMode::in_memory;

    Algorithm algorithm = Algorithm::mcmc;
    std::size_t k = 1;
    double p = 2.0;
    double epsilon = 0.5;
    double beta = 0.0;
    double lambda = 1.0;
    std::size_t trials = 1;
    std::uint64_t seed = 1;
    std::optional<InitMode> init;
    ParamOverrides overrides;
    std::optional<std::size_t> volume_walk_steps;
    ProposalSampling proposals = ProposalSampling::reservoir;
    std::size_t threads = 1;
    bool timing = true;
};

/// Compatibility checks that need only the dimension, so they run before
/// any pass.
inline void validate(const ExperimentSpec& s, std::size_t dim) {
    if (s.trials < 1) throw std::invalid_argument("need trials >= 1");
    if (s.k < 1 || s.k > dim) throw std::invalid_argument("need 1 <= k <= d");
    if (!(s.epsilon > 0.0 && s.epsilon < 1.0)) throw std::invalid_argument("need epsilon in (0, 1)");
    if (!(s.p >= 2.0) || !std::isfinite(s.p)) throw std::invalid_argument("need finite p >= 2");
    if (!(s.beta >= 0.0 && s.beta < 1.0)) throw std::invalid_argument("need 0 <= beta < 1");
    if (!(s.lambda > 0.0 && s.lambda <= 1.0)) throw std::invalid_argument("need 0 < lambda <= 1");
    if (s.threads < 1) throw std::invalid_argument("need threads >= 1");
    const bool l2_only = s.algorithm == Algorithm::svd_oracle || s.algorithm == Algorithm::volume_mcmc;
    if (l2_only && s.p != 2.0) throw std::invalid_argument(to_string(s.algorithm) + " needs p = 2");
    if (s.beta > 0.0 && (s.algorithm != Algorithm::mcmc || s.p != 2.0))
        throw std::invalid_argument("beta > 0 is only supported by mcmc with p = 2");
    const InitMode init = s.init.value_or(default_init(s.p));
    if (init == InitMode::mcmc_volume && s.p != 2.0) throw std::invalid_argument("mcmc-volume init needs p = 2");
    if (s.proposals == ProposalSampling::inverse_cdf && s.mode == AccessMode::streaming)
        throw std::invalid_argument("inverse-cdf proposals need in-memory mode");
    if (s.algorithm != Algorithm::adaptive && s.overrides.l && *s.overrides.l == 0)
        throw std::invalid_argument("l = 0 is only meaningful for the adaptive baseline");
}

struct ReportRow {
    std::size_t trial = 0;
    std::string algorithm;
    std::uint64_t seed = 0;
    double err = 0.0;        // err_p of the span of the output (over N_beta when beta > 0)
    double err_rank_k = 0.0; // best k-dimensional subspace inside that span
    double opt = 0.0;        // exact optimum, p = 2 only
    double ratio = 0.0;      // err_rank_k / opt
    std::size_t passes = 0;
    std::size_t subset_size = 0;
    double acceptance_rate = 0.0;
    double wall_ms = 0.0;
};

inline bool same_value(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

inline bool operator==(const ReportRow& a, const ReportRow& b) {
    return a.trial == b.trial && a.algorithm == b.algorithm && a.seed == b.seed && same_value(a.err, b.err) &&
           same_value(a.err_rank_k, b.err_rank_k) && same_value(a.opt, b.opt) && same_value(a.ratio, b.ratio) &&
           a.passes == b.passes && a.subset_size == b.subset_size &&
           same_value(a.acceptance_rate, b.acceptance_rate) && same_value(a.wall_ms, b.wall_ms);
}

inline constexpr const char* kReportHeader =
    "trial,algorithm,seed,err,err_rank_k,opt,ratio,passes,subset_size,acceptance_rate,wall_ms";

inline void write_report(std::ostream& out, const std::vector<ReportRow>& rows) {
    using detail::format_double;
    out << kReportHeader << '\n';
    for (const auto& r : rows) {
        out << r.trial << ',' << r.algorithm << ',' << r.seed << ',' << format_double(r.err) << ','
            << format_double(r.err_rank_k) << ',' << format_double(r.opt) << ',' << format_double(r.ratio) << ','
            << r.passes << ',' << r.subset_size << ',' << format_double(r.acceptance_rate) << ','
            << format_double(r.wall_ms) << '\n';
    }
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    write_report(out, rows);
    return out.str();
}

namespace detail {
template <class T>
T parse_field(std::string_view field, std::size_t line_no) {
    T value{};
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size())
        throw FormatError("malformed report field '" + std::string(field) + "'", line_no);
    return value;
}
} // namespace detail

inline std::vector<ReportRow> read_report(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != kReportHeader) throw FormatError("bad report header", 1);
    std::vector<ReportRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        std::vector<std::string_view> f;
        std::string_view rest = detail::trim(line);
        while (true) {
            const std::size_t c = rest.find(',');
            f.push_back(rest.substr(0, c));
            if (c == std::string_view::npos) break;
            rest.remove_prefix(c + 1);
        }
        if (f.size() != 11) throw FormatError("report row needs 11 fields", line_no);
        using detail::parse_field;
        ReportRow r;
        r.trial = parse_field<std::size_t>(f[0], line_no);
        r.algorithm = std::string(f[1]);
        r.seed = parse_field<std::uint64_t>(f[2], line_no);
        r.err = parse_field<double>(f[3], line_no);
        r.err_rank_k = parse_field<double>(f[4], line_no);
        r.opt = parse_field<double>(f[5], line_no);
        r.ratio = parse_field<double>(f[6], line_no);
        r.passes = parse_field<std::size_t>(f[7], line_no);
        r.subset_size = parse_field<std::size_t>(f[8], line_no);
        r.acceptance_rate = parse_field<double>(f[9], line_no);
        r.wall_ms = parse_field<double>(f[10], line_no);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<ReportRow> parse_report(const std::string& text) {
    std::istringstream in(text);
    return read_report(in);
}

// ---------------------------------------------------------------------------
// Running experiments

struct TrialOutcome {
    ReportRow row;
    std::size_t expected_passes = 0;
    bool passes_ok = false;
    std::vector<std::string> warnings;
};

struct ExperimentReport {
    std::vector<ReportRow> rows; // ordered by trial id
    std::vector<TrialOutcome> outcomes;
    DerivedParams params;
    bool passes_ok = true;
    std::vector<std::string> warnings;
};

/// A loaded dataset plus everything the reporting columns need from it.
struct PreparedDataset {
    std::shared_ptr<const PointSet> points;
    std::optional<std::filesystem::path> path;
    std::optional<SubsetIds> true_inliers;
    std::optional<double> opt; // p = 2 only
};

inline PreparedDataset prepare_dataset(const ExperimentSpec& s) {
    PreparedDataset out;
    if (s.path) {
        out.points = std::make_shared<const PointSet>(read_points(*s.path));
        out.path = s.path;
        out.true_inliers = s.true_inliers;
    } else {
        SyntheticData data = generate_synthetic(s.synthetic);
        out.points = std::make_shared<const PointSet>(std::move(data.points));
        out.true_inliers = s.true_inliers ? s.true_inliers : std::optional<SubsetIds>(data.inliers);
    }
    validate(s, out.points->dim());
    if (s.p == 2.0) {
        if (s.beta > 0.0) {
            if (out.true_inliers) {
                const PointSet inliers(out.points->gather(*out.true_inliers));
                out.opt = optimal_subspace(inliers, s.k).error;
            }
        } else {
            out.opt = optimal_subspace(*out.points, s.k).error;
        }
    }
    return out;
}

inline SamplingConfig sampling_config(const ExperimentSpec& s, std::uint64_t seed) {
    SamplingConfig c;
    c.k = s.k;
    c.p = s.p;
    c.epsilon = s.epsilon;
    c.seed = seed;
    c.init = s.init.value_or(default_init(s.p));
    c.overrides = s.overrides;
    c.volume_walk_steps = s.volume_walk_steps;
    c.proposals = s.proposals;
    if (s.beta > 0.0 || s.lambda < 1.0) c.outlier_lambda = s.lambda;
    return c;
}

inline std::uint64_t trial_seed(std::uint64_t master, std::size_t trial) {
    return seed_for(master, Stream::trial, trial);
}

/// One trial. Every number in the row is a function of (spec, trial) only.
inline TrialOutcome run_trial(const ExperimentSpec& s, const PreparedDataset& data, std::size_t trial) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const std::uint64_t seed = trial_seed(s.seed, trial);
    const PointSet& points = *data.points;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    DatasetSource source = data.path ? DatasetSource::open(*data.path, s.mode)
                                     : DatasetSource::from_points(data.points, s.mode);
    const SamplingConfig config = sampling_config(s, seed);

    TrialOutcome out;
    ReportRow& row = out.row;
    row.trial = trial;
    row.algorithm = to_string(s.algorithm);
    row.seed = seed;
    row.acceptance_rate = nan;

    SelectedPoints selected(points.dim());
    PassLog sampling_log;
    bool reported = false;

    switch (s.algorithm) {
    case Algorithm::mcmc: {
        if (s.beta > 0.0) {
            RobustConfig rc;
            rc.k = s.k;
            rc.epsilon = s.epsilon;
            rc.outliers = {s.beta, s.lambda};
            rc.seed = seed;
            rc.init = config.init;
            rc.overrides = s.overrides;
            rc.proposals = s.proposals;
            if (data.true_inliers) {
                const OrthonormalBasis ref = optimal_subspace(PointSet(points.gather(*data.true_inliers)), s.k).basis;
                rc.observed_lambda = check_lambda(points, ref, s.beta, std::span<const std::size_t>(*data.true_inliers));
            }
            RobustResult r = robust_select(source, rc);
            selected = r.selection.all();
            sampling_log = r.selection.pass_log;
            row.err = r.inliers.inlier_error;
            row.acceptance_rate = r.selection.acceptance_rate();
            out.expected_passes = expected_pipeline_passes(config);
            out.warnings = r.warnings;
            const OrthonormalBasis v = best_rank_k_in_span(points, selected.basis(points.dim()), s.k).basis;
            row.err_rank_k = nearest_inliers(points, v, s.beta).inlier_error;
            reported = true;
        } else {
            SelectionResult r = select_subset(source, config);
            selected = r.all();
            sampling_log = r.pass_log;
            row.err = r.error;
            row.acceptance_rate = r.acceptance_rate();
            out.expected_passes = expected_pipeline_passes(config);
        }
        break;
    }
    case Algorithm::adaptive: {
        const DerivedParams params = params_for(config);
        const std::size_t mark = source.log().total_passes();
        SelectedPoints s0 = initial_subset(source, config);
        sampling_log = source.log().since(mark);
        const std::size_t init_passes = sampling_log.total_passes();
        AdaptiveResult r = adaptive_sample(source, s0, params.t, params.l, s.p, seed);
        selected = r.all();
        sampling_log.append(r.pass_log);
        row.err = r.error;
        out.expected_passes = init_passes + r.blocks.size() + (r.exact_fit ? 1 : 0);
        break;
    }
    case Algorithm::fkv: {
        const DerivedParams params = params_for(config);
        const std::size_t mark = source.log().total_passes();
        selected = squared_length_sample(source, s.k + params.t * params.l, s.p, seed_for(seed, Stream::init));
        sampling_log = source.log().since(mark);
        row.err = evaluate_error(source, selected, s.p);
        out.expected_passes = 1;
        break;
    }
    case Algorithm::volume_exact:
    case Algorithm::volume_mcmc: {
        SamplingConfig c = config;
        c.init = s.algorithm == Algorithm::volume_exact ? InitMode::exact_volume : InitMode::mcmc_volume;
        const std::size_t mark = source.log().total_passes();
        selected = initial_subset(source, c);
        sampling_log = source.log().since(mark);
        row.err = evaluate_error(source, selected, s.p);
        out.expected_passes = 1;
        break;
    }
    case Algorithm::svd_oracle: {
        const std::size_t mark = source.log().total_passes();
        source.pass("svd-oracle", [](std::size_t, std::span<const double>) {});
        sampling_log = source.log().since(mark);
        row.err = row.err_rank_k = data.opt.value_or(nan);
        row.subset_size = s.k;
        out.expected_passes = 1;
        reported = true;
        break;
    }
    }

    if (s.algorithm != Algorithm::svd_oracle) row.subset_size = selected.size();
    if (!reported) {
        row.err_rank_k = s.p == 2.0 ? best_rank_k_error_in_span(points, selected.basis(points.dim()), s.k) : nan;
    }
    row.opt = data.opt.value_or(nan);
    if (!data.opt) row.ratio = nan;
    else if (*data.opt > 0.0) row.ratio = row.err_rank_k / *data.opt;
    else row.ratio = row.err_rank_k == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    row.passes = sampling_log.total_passes();
    out.passes_ok = passes_ok(sampling_log, out.expected_passes);
    row.wall_ms = s.timing ? std::chrono::duration<double, std::milli>(clock::now() - start).count() : 0.0;
    return out;
}

inline ExperimentReport run_experiment(const ExperimentSpec& s, const PreparedDataset& data) {
    ExperimentReport report;
    report.params = params_for(sampling_config(s, s.seed));
    report.outcomes.resize(s.trials);

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        while (!failed) {
            const std::size_t trial = next++;
            if (trial >= s.trials) return;
            try {
                report.outcomes[trial] = run_trial(s, data, trial);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(s.threads, s.trials);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (const auto& o : report.outcomes) {
        report.rows.push_back(o.row);
        report.passes_ok = report.passes_ok && o.passes_ok;
        for (const auto& w : o.warnings)
            if (std::find(report.warnings.begin(), report.warnings.end(), w) == report.warnings.end())
                report.warnings.push_back(w);
    }
    return report;
}

inline ExperimentReport run_experiment(const ExperimentSpec& s) { return run_experiment(s, prepare_dataset(s)); }

inline double median(std::vector<double> v) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline double median_ratio(const std::vector<ReportRow>& rows) {
    std::vector<double> r;
    for (const auto& row : rows) r.push_back(row.ratio);
    return median(r);
}

/// One-line summary: median ratio, pass count and the pass-count verdict.
inline std::string summary_line(const ExperimentSpec& s, const ExperimentReport& report) {
    std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0;
    for (const auto& r : report.rows) lo = std::min(lo, r.passes), hi = std::max(hi, r.passes);
    std::ostringstream out;
    out << "summary alg=" << to_string(s.algorithm) << " trials=" << report.rows.size()
        << " median_ratio=" << detail::format_double(median_ratio(report.rows)) << " passes=";
    if (lo == hi) out << lo;
    else out << lo << ".." << hi;
    out << " t=" << report.params.t << " l=" << report.params.l << " m=" << report.params.m
        << " pass_check=" << (report.passes_ok ? "ok" : "FAILED");
    return out.str();
}

} // namespace subsel
