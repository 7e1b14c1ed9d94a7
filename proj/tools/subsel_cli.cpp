// subsel_cli: generate datasets, run selection experiments, and print
// sampler diagnostics.
//
// Exit codes: 0 success, 1 a pass-count or guarantee check failed, 2 usage
// or input error.

#include <subsel/subsel.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace subsel;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

fs::path truth_path(const fs::path& data) { return fs::path(data.string() + ".truth.json"); }

// "t=32,l=1,m=200"
ParamOverrides parse_overrides(const std::string& text, ParamOverrides base) {
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError("bad --params-override item '" + item + "'");
        const std::string key = item.substr(0, eq);
        std::size_t value = 0;
        try {
            value = std::stoull(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw UsageError("bad --params-override value in '" + item + "'");
        }
        if (key == "t") base.t = value;
        else if (key == "l") base.l = value;
        else if (key == "m") base.m = value;
        else throw UsageError("unknown --params-override key '" + key + "'");
    }
    return base;
}

void add_synthetic_flags(CLI::App* cmd, SyntheticSpec& s) {
    cmd->add_option("--n", s.n, "number of points")->check(CLI::PositiveNumber);
    cmd->add_option("--d", s.d, "dimension")->check(CLI::PositiveNumber);
    cmd->add_option("--rank", s.rank, "planted rank")->check(CLI::PositiveNumber);
    cmd->add_option("--noise", s.noise_sigma, "noise norm per inlier")->check(CLI::NonNegativeNumber);
    cmd->add_option("--outlier-frac", s.outlier_frac, "outlier fraction")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--outlier-scale", s.outlier_scale, "outlier distance from the planted subspace")
        ->check(CLI::NonNegativeNumber);
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
    SyntheticSpec spec;
    fs::path out;
    std::string format = "csv";
};

int cmd_gen(const GenArgs& a) {
    if (a.spec.rank > a.spec.d) throw UsageError("--rank must not exceed --d");
    SyntheticData data = generate_synthetic(a.spec);
    write_points(a.out, data.points, a.format == "bin" ? FileFormat::binary : FileFormat::csv);

    OrthonormalBasis planted = basis_of_rows(data.planted, a.spec.d);
    const double lambda = check_lambda(data.points, planted, a.spec.outlier_frac, std::span<const std::size_t>(data.inliers));

    nlohmann::json truth;
    truth["n"] = a.spec.n;
    truth["d"] = a.spec.d;
    truth["rank"] = a.spec.rank;
    truth["noise_sigma"] = a.spec.noise_sigma;
    truth["outlier_frac"] = a.spec.outlier_frac;
    truth["outlier_scale"] = a.spec.outlier_scale;
    truth["seed"] = a.spec.seed;
    truth["lambda"] = lambda;
    truth["inliers"] = data.inliers;
    truth["outliers"] = data.outliers;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < data.planted.rows(); ++i)
        rows.emplace_back(data.planted.row(i).begin(), data.planted.row(i).end());
    truth["planted"] = rows;
    std::ofstream(truth_path(a.out)) << truth.dump(2) << '\n';

    std::cout << "wrote " << a.out.string() << " n=" << a.spec.n << " d=" << a.spec.d
              << " planted_rank=" << a.spec.rank << " inliers=" << data.inliers.size()
              << " lambda=" << detail::format_double(lambda) << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
    std::optional<fs::path> input;
    std::optional<fs::path> truth;
    SyntheticSpec synthetic;
    std::string alg = "mcmc";
    std::size_t k = 1;
    double p = 2.0;
    double epsilon = 0.5;
    double beta = 0.0;
    double lambda = 1.0;
    std::size_t trials = 1;
    std::uint64_t seed = 1;
    std::string init;
    std::optional<std::size_t> t, l, m, walk_steps;
    std::string overrides;
    std::string mode = "in-memory";
    std::string proposals = "reservoir";
    std::size_t threads = 1;
    bool no_timing = false;
    std::optional<fs::path> out;
    std::optional<double> max_ratio;
};

ExperimentSpec build_spec(const RunArgs& a) {
    ExperimentSpec s;
    try {
        s.algorithm = parse_algorithm(a.alg);
        if (!a.init.empty()) s.init = parse_init_mode(a.init);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (a.input) {
        s.path = *a.input;
        const fs::path tp = a.truth ? *a.truth : truth_path(*a.input);
        if (fs::exists(tp)) {
            nlohmann::json truth;
            std::ifstream(tp) >> truth;
            s.true_inliers = truth.at("inliers").get<SubsetIds>();
        } else if (a.truth) {
            throw UsageError("cannot read " + tp.string());
        }
    } else {
        s.synthetic = a.synthetic;
        if (s.synthetic.rank > s.synthetic.d) throw UsageError("--rank must not exceed --d");
    }
    s.mode = a.mode == "streaming" ? AccessMode::streaming : AccessMode::in_memory;
    s.proposals = a.proposals == "inverse-cdf" ? ProposalSampling::inverse_cdf : ProposalSampling::reservoir;
    s.k = a.k;
    s.p = a.p;
    s.epsilon = a.epsilon;
    s.beta = a.beta;
    s.lambda = a.lambda;
    s.trials = a.trials;
    s.seed = a.seed;
    s.overrides.t = a.t;
    s.overrides.l = a.l;
    s.overrides.m = a.m;
    if (!a.overrides.empty()) s.overrides = parse_overrides(a.overrides, s.overrides);
    s.volume_walk_steps = a.walk_steps;
    s.threads = a.threads;
    s.timing = !a.no_timing;
    return s;
}

int cmd_run(const RunArgs& a) {
    const ExperimentSpec spec = build_spec(a);
    PreparedDataset data;
    try {
        data = prepare_dataset(spec);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const ExperimentReport report = run_experiment(spec, data);
    if (a.out) {
        std::ofstream out(*a.out);
        write_report(out, report.rows);
    } else {
        write_report(std::cout, report.rows);
    }
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << summary_line(spec, report) << '\n';

    if (!report.passes_ok) {
        std::cerr << "pass-count check failed\n";
        return kCheckFailed;
    }
    if (a.max_ratio) {
        const double med = median_ratio(report.rows);
        if (!(med <= *a.max_ratio)) {
            std::cerr << "median ratio " << detail::format_double(med) << " exceeds " << *a.max_ratio << '\n';
            return kCheckFailed;
        }
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// diag

struct DiagTvArgs {
    std::size_t n = 8, d = 4, rank = 2, extra = 1, m = 64, trials = 100000;
    double p = 2.0, noise = 0.3;
    std::uint64_t seed = 1;
    std::optional<double> max_tv;
};

int cmd_diag_tv(const DiagTvArgs& a) {
    if (a.n > kDiagnosticLimit) throw UsageError("n exceeds the enumeration limit of 4096 for diag tv");
    if (a.rank > a.d) throw UsageError("--rank must not exceed --d");
    SyntheticSpec spec;
    spec.n = a.n;
    spec.d = a.d;
    spec.rank = a.rank;
    spec.noise_sigma = a.noise;
    spec.seed = a.seed;
    const PointSet points = generate_synthetic(spec).points;

    DatasetSource source = DatasetSource::from_points(points);
    const SelectedPoints s0 = squared_length_sample(source, 1, a.p, seed_for(a.seed, Stream::init));
    SelectedPoints current = s0;
    if (a.extra > 0) {
        AdaptiveRound r = adaptive_sample_round(source, s0, a.extra, a.p, seed_for(a.seed, Stream::adaptive_round));
        current.append(r.picked);
    }
    const TvDiagnostic diag = tv_distance_diag(points, s0.ids, current.ids, a.m, a.p, a.trials, a.seed);
    const double contraction = std::pow(1.0 - 1.0 / diag.gamma, static_cast<double>(a.m - 1));
    std::cout << "tv=" << detail::format_double(diag.tv) << " gamma=" << detail::format_double(diag.gamma)
              << " contraction_bound=" << detail::format_double(contraction)
              << " acceptance_rate=" << detail::format_double(diag.acceptance_rate)
              << " error_ratio=" << detail::format_double(diag.error_ratio) << " m=" << a.m
              << " trials=" << a.trials << '\n';
    if (a.max_tv && !(diag.tv <= *a.max_tv)) return kCheckFailed;
    return kOk;
}

struct DiagVolumeArgs {
    std::size_t n = 6, d = 3, k = 2, steps = 2000, trials = 20000;
    std::uint64_t seed = 1;
    double max_tv = 0.05;
};

int cmd_diag_volume(const DiagVolumeArgs& a) {
    if (a.k < 1 || a.k > a.n || a.k > a.d) throw UsageError("need 1 <= k <= min(n, d)");
    if (binomial(a.n, a.k) > kEnumerationLimit) throw UsageError("C(n, k) exceeds the enumeration limit");
    SyntheticSpec spec;
    spec.n = a.n;
    spec.d = a.d;
    spec.rank = a.d;
    spec.noise_sigma = 0.0;
    spec.seed = a.seed;
    const PointSet points = generate_synthetic(spec).points;

    std::map<SubsetIds, double> exact;
    double total = 0.0;
    detail::for_each_subset(a.n, a.k, [&](std::span<const std::size_t> s) {
        const double v = simplex_volume_sq(points, s);
        exact[SubsetIds(s.begin(), s.end())] = v;
        total += v;
    });
    std::map<SubsetIds, std::size_t> counts;
    VolumeWalkStats stats;
    for (std::size_t trial = 0; trial < a.trials; ++trial)
        ++counts[volume_sample_mcmc(points, a.k, a.steps, seed_for(a.seed, Stream::volume_walk, trial), &stats)];
    double tv = 0.0;
    for (const auto& [s, v] : exact) {
        const auto it = counts.find(s);
        const double emp = it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(a.trials);
        tv += 0.5 * std::abs(emp - v / total);
    }
    const double acc = stats.proposals ? static_cast<double>(stats.accepted) / static_cast<double>(stats.proposals) : 0.0;
    std::cout << "tv=" << detail::format_double(tv) << " subsets=" << exact.size() << " steps=" << a.steps
              << " trials=" << a.trials << " acceptance_rate=" << detail::format_double(acc) << '\n';
    return tv <= a.max_tv ? kOk : kCheckFailed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Subset selection for lp subspace approximation"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "write a synthetic dataset and its ground truth");
    add_synthetic_flags(g, gen.spec);
    g->add_option("--seed", gen.spec.seed, "seed");
    g->add_option("--out", gen.out, "output file")->required();
    g->add_option("--format", gen.format, "csv or bin")->check(CLI::IsMember({"csv", "bin"}));

    RunArgs run;
    auto* r = app.add_subcommand("run", "run trials of a selection algorithm and emit a CSV report");
    r->add_option("--input", run.input, "dataset file (csv or binary); synthetic flags are used otherwise");
    r->add_option("--truth", run.truth, "ground-truth JSON (default: <input>.truth.json when present)");
    add_synthetic_flags(r, run.synthetic);
    r->add_option("--data-seed", run.synthetic.seed, "seed of the synthetic dataset");
    r->add_option("--alg", run.alg, "mcmc | adaptive | fkv | svd-oracle | volume-exact | volume-mcmc");
    r->add_option("--k", run.k, "target dimension")->check(CLI::PositiveNumber);
    r->add_option("--p", run.p, "norm exponent (>= 2)");
    r->add_option("--epsilon", run.epsilon, "accuracy in (0, 1)");
    r->add_option("--beta", run.beta, "outlier fraction bound");
    r->add_option("--lambda", run.lambda, "assumed inlier error share");
    r->add_option("--trials", run.trials, "number of trials")->check(CLI::PositiveNumber);
    r->add_option("--seed", run.seed, "master seed");
    r->add_option("--init", run.init, "exact-volume | mcmc-volume | adaptive-k-pass");
    r->add_option("--t", run.t, "override t");
    r->add_option("--l", run.l, "override l");
    r->add_option("--m", run.m, "override m");
    r->add_option("--params-override", run.overrides, "t=..,l=..,m=..");
    r->add_option("--walk-steps", run.walk_steps, "steps of the volume walk");
    r->add_option("--mode", run.mode, "in-memory or streaming")->check(CLI::IsMember({"in-memory", "streaming"}));
    r->add_option("--proposals", run.proposals, "reservoir or inverse-cdf")
        ->check(CLI::IsMember({"reservoir", "inverse-cdf"}));
    r->add_option("--threads", run.threads, "worker threads for trials")->check(CLI::PositiveNumber);
    r->add_flag("--no-timing", run.no_timing, "write 0 in the wall_ms column");
    r->add_option("--out", run.out, "report CSV (default: standard output)");
    r->add_option("--max-ratio", run.max_ratio, "fail when the median ratio exceeds this");

    auto* d = app.add_subcommand("diag", "sampler diagnostics against exact enumeration");
    d->require_subcommand(1);
    DiagTvArgs tv;
    auto* dt = d->add_subcommand("tv", "TV distance of the Metropolis chain to the adaptive distribution");
    dt->add_option("--n", tv.n, "number of points");
    dt->add_option("--d", tv.d, "dimension");
    dt->add_option("--rank", tv.rank, "planted rank");
    dt->add_option("--noise", tv.noise, "noise norm");
    dt->add_option("--extra", tv.extra, "adaptive points added on top of the pivot");
    dt->add_option("--m", tv.m, "chain length")->check(CLI::PositiveNumber);
    dt->add_option("--trials", tv.trials, "independent chains")->check(CLI::PositiveNumber);
    dt->add_option("--p", tv.p, "norm exponent");
    dt->add_option("--seed", tv.seed, "seed");
    dt->add_option("--max-tv", tv.max_tv, "fail when the TV distance exceeds this");
    DiagVolumeArgs vol;
    auto* dv = d->add_subcommand("volume", "volume walk against brute-force volume sampling");
    dv->add_option("--n", vol.n, "number of points");
    dv->add_option("--d", vol.d, "dimension");
    dv->add_option("--k", vol.k, "subset size");
    dv->add_option("--steps", vol.steps, "walk steps");
    dv->add_option("--trials", vol.trials, "independent walks")->check(CLI::PositiveNumber);
    dv->add_option("--seed", vol.seed, "seed");
    dv->add_option("--max-tv", vol.max_tv, "fail when the TV distance exceeds this");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*g) return cmd_gen(gen);
        if (*r) return cmd_run(run);
        if (*dt) return cmd_diag_tv(tv);
        if (*dv) return cmd_diag_volume(vol);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}
