#include <subsel/report.hpp>

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace subsel;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result cli(const std::string& args) {
    const std::string cmd = std::string(SUBSEL_CLI) + " " + args + " 2>/dev/null";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t got;
    while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

} // namespace

TEST(CliGen, WritesCsv) {
    const auto r = cli("gen --n 100 --d 10 --rank 3 --noise 0.1 --seed 7 --out a.csv");
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(count_lines(slurp("a.csv")), 100u);
    SyntheticSpec spec;
    spec.n = 100;
    spec.d = 10;
    spec.rank = 3;
    spec.noise_sigma = 0.1;
    spec.seed = 7;
    EXPECT_EQ(read_points("a.csv"), generate_synthetic(spec).points);
}

TEST(CliGen, SidecarGroundTruth) {
    const auto r = cli("gen --n 100 --d 10 --outlier-frac 0.1 --out o.bin --format bin");
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(detect_format("o.bin"), FileFormat::binary);
    nlohmann::json truth;
    std::ifstream("o.bin.truth.json") >> truth;
    EXPECT_EQ(truth["inliers"].size(), 90u);
    EXPECT_NE(r.out.find("lambda="), std::string::npos);
}

TEST(CliGen, UsageErrors) {
    EXPECT_EQ(cli("gen --rank 20 --d 10 --out x.csv").code, 2);
    EXPECT_EQ(cli("gen --n 10").code, 2);
    EXPECT_EQ(cli("gen --n 10 --out x.csv --format xml").code, 2);
    EXPECT_EQ(cli("bogus").code, 2);
}

TEST(CliRun, GoldenAgainstLibrary) {
    ASSERT_EQ(cli("gen --n 400 --d 15 --rank 3 --noise 0.1 --seed 3 --out golden.csv").code, 0);
    const auto r = cli("run --input golden.csv --alg mcmc --k 3 --epsilon 0.5 --trials 4 --seed 11 "
                       "--params-override m=25 --no-timing --out golden_report.csv");
    EXPECT_EQ(r.code, 0);

    ExperimentSpec s;
    s.path = "golden.csv";
    s.algorithm = Algorithm::mcmc;
    s.k = 3;
    s.epsilon = 0.5;
    s.trials = 4;
    s.seed = 11;
    s.overrides.m = 25;
    s.timing = false;
    nlohmann::json truth;
    std::ifstream("golden.csv.truth.json") >> truth;
    s.true_inliers = truth["inliers"].get<SubsetIds>();
    const auto report = run_experiment(s);
    EXPECT_EQ(slurp("golden_report.csv"), report_csv(report.rows));
    EXPECT_NE(r.out.find(summary_line(s, report)), std::string::npos);
}

TEST(CliRun, SvdOracleRatiosAreOne) {
    const auto r = cli("run --n 300 --d 12 --rank 5 --alg svd-oracle --k 5 --trials 3 --no-timing");
    EXPECT_EQ(r.code, 0);
    const auto rows = parse_report(r.out.substr(0, r.out.find("summary")));
    ASSERT_EQ(rows.size(), 3u);
    for (const auto& row : rows) EXPECT_EQ(row.ratio, 1.0);
}

TEST(CliRun, AdaptivePassesColumn) {
    const auto r = cli("run --n 300 --d 12 --rank 3 --alg adaptive --k 3 --l 3 --t 4 --trials 2 --no-timing");
    EXPECT_EQ(r.code, 0);
    for (const auto& row : parse_report(r.out.substr(0, r.out.find("summary")))) EXPECT_EQ(row.passes, 3u + 1u);
}

TEST(CliRun, StreamingMatchesInMemoryByteForByte) {
    ASSERT_EQ(cli("gen --n 300 --d 10 --rank 3 --seed 5 --out modes.bin --format bin").code, 0);
    const std::string common = "run --input modes.bin --alg mcmc --k 3 --trials 3 --m 20 --no-timing --out ";
    ASSERT_EQ(cli(common + "mem.csv --mode in-memory").code, 0);
    ASSERT_EQ(cli(common + "str.csv --mode streaming").code, 0);
    EXPECT_EQ(slurp("mem.csv"), slurp("str.csv"));
}

TEST(CliRun, GuaranteeCheckFailureExitsOne) {
    const auto r = cli("run --n 300 --d 12 --rank 3 --alg fkv --k 3 --trials 1 --t 1 --l 1 --max-ratio 1.0");
    EXPECT_EQ(r.code, 1);
}

TEST(CliRun, UsageErrors) {
    EXPECT_EQ(cli("run --alg nope").code, 2);
    EXPECT_EQ(cli("run --alg svd-oracle --p 3 --k 2").code, 2);
    EXPECT_EQ(cli("run --params-override q=3").code, 2);
    EXPECT_EQ(cli("run --input does_not_exist.csv").code, 2);
}

TEST(CliDiag, TvOnSmallInstance) {
    const auto r = cli("diag tv --n 8 --m 64 --trials 100000");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("tv="), std::string::npos);
    EXPECT_NE(r.out.find("gamma="), std::string::npos);
}

TEST(CliDiag, TvRefusesLargeN) { EXPECT_EQ(cli("diag tv --n 100000").code, 2); }

TEST(CliDiag, VolumeWalk) {
    const auto r = cli("diag volume --n 6 --k 2 --steps 2000");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("tv="), std::string::npos);
}
