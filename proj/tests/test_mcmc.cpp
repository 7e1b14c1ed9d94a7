#include "oracles.hpp"

#include <subsel/mcmc.hpp>
#include <subsel/pipeline.hpp>
#include <subsel/synthetic.hpp>

#include <gtest/gtest.h>

#include <numeric>

using namespace subsel;
using oracle::from_rows;

namespace {

PointSet noisy(std::size_t n, std::size_t d, std::size_t rank, std::uint64_t seed, double noise = 0.3) {
    SyntheticSpec spec;
    spec.n = n;
    spec.d = d;
    spec.rank = rank;
    spec.noise_sigma = noise;
    spec.seed = seed;
    return generate_synthetic(spec).points;
}

DerivedParams tlm(std::size_t t, std::size_t l, std::size_t m) {
    DerivedParams p;
    p.t = t;
    p.l = l;
    p.m = m;
    return p;
}

// Exact residual-power weights of every point against span(ids).
std::vector<double> weights(const PointSet& pts, const SubsetIds& ids, double p) {
    std::vector<double> w;
    for (double r : oracle::residuals_sq(pts, ids)) w.push_back(std::pow(std::sqrt(std::max(0.0, r)), p));
    return w;
}

std::vector<double> proposal_law(const PointSet& pts, const SubsetIds& s0, double p) {
    const auto w = weights(pts, s0, p);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<double> q;
    for (double x : w) q.push_back(0.5 * x / total + 0.5 / static_cast<double>(pts.size()));
    return q;
}

} // namespace

TEST(ProposalQ, Examples) {
    EXPECT_DOUBLE_EQ(proposal_q(0.0, 5.0, 4), 1.0 / 8.0);
    EXPECT_DOUBLE_EQ(proposal_q(3.0, 4.0, 2), 0.625);
    EXPECT_DOUBLE_EQ(proposal_q(1.0, 4.0, 2), 0.375);
    for (std::size_t n : {1u, 3u, 17u}) EXPECT_DOUBLE_EQ(proposal_q(2.0, 2.0 * n, n), 1.0 / n);
    EXPECT_THROW(proposal_q(1.0, 0.0, 3), std::invalid_argument);
}

TEST(ProposalQ, SumsToOneAndHasFloor) {
    const PointSet pts = noisy(40, 6, 2, 3);
    const auto b = orthonormal_basis(pts, SubsetIds{0, 1});
    double err = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) err += pow_p(b.residual(pts[i]), 2.0);
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double q = proposal_q(pow_p(b.residual(pts[i]), 2.0), err, pts.size());
        EXPECT_GE(q, 0.5 / pts.size());
        total += q;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(MhAccept, Examples) {
    for (double u : {1e-9, 0.3, 0.999999}) {
        EXPECT_TRUE(mh_accept(2.0, 0.5, 1.0, 0.5, u));
        EXPECT_TRUE(mh_accept(1.0, 0.5, 1.0, 0.5, u));
        EXPECT_FALSE(mh_accept(0.0, 0.5, 1.0, 0.5, u));
        EXPECT_TRUE(mh_accept(1e-300, 0.1, 0.0, 0.9, u));
    }
}

TEST(MhAccept, AcceptanceFrequencyEqualsRatio) {
    Rng rng(5);
    for (double r : {0.1, 0.37, 0.8}) {
        const std::size_t trials = 200000;
        std::size_t acc = 0;
        // p_y q_x / (p_x q_y) = r.
        for (std::size_t i = 0; i < trials; ++i) acc += mh_accept(r * 0.4, 0.5, 1.0, 0.2, rng.uniform());
        EXPECT_NEAR(double(acc) / trials, r, oracle::three_sigma(r, trials)) << r;
    }
}

TEST(McmcSelect, ExactFitUsesUniformFloor) {
    SyntheticSpec spec;
    spec.n = 60;
    spec.d = 6;
    spec.rank = 2;
    spec.noise_sigma = 0.0;
    const PointSet pts = generate_synthetic(spec).points;
    DatasetSource s = DatasetSource::from_points(pts);
    const auto s0 = SelectedPoints::from(pts, volume_sample_exact(pts, 2, 2.0, 1));
    const auto r = mcmc_select(s, s0, tlm(4, 3, 10), 2.0, 7);
    EXPECT_TRUE(r.exact_fit);
    EXPECT_EQ(r.error, 0.0);
    EXPECT_EQ(r.pivot_error, 0.0);
    EXPECT_EQ(r.size(), 2u + 12u);
    EXPECT_TRUE(passes_ok(r.pass_log, 1));
    for (const auto& b : r.blocks) EXPECT_EQ(b.size(), 4u);
}

TEST(McmcSelect, OnePassAndOutputSize) {
    const PointSet pts = noisy(300, 25, 3, 8);
    for (AccessMode mode : {AccessMode::in_memory, AccessMode::streaming}) {
        DatasetSource s = DatasetSource::from_points(pts, mode);
        const auto s0 = SelectedPoints::from(pts, SubsetIds{3, 7});
        const auto r = mcmc_select(s, s0, tlm(5, 3, 40), 2.0, 9);
        EXPECT_TRUE(passes_ok(r.pass_log, 1));
        EXPECT_TRUE(passes_ok(r.evaluation_log, 1));
        EXPECT_EQ(r.pass_log.entries()[0].label, "mcmc-proposals");
        EXPECT_EQ(r.size(), 2u + 15u);
        EXPECT_EQ(r.chains.size(), 15u);
        for (const auto& c : r.chains) EXPECT_EQ(c.proposed, 39u);
        EXPECT_NEAR(r.pivot_error, err_p(pts, orthonormal_basis(pts, s0.ids), 2.0), 1e-9 * r.pivot_error);
        EXPECT_LE(r.error, r.pivot_error);
        EXPECT_NEAR(r.error, err_p(pts, r.all().basis(25), 2.0), 1e-9 * r.error);
        for (const auto& b : r.blocks)
            for (std::size_t i = 0; i < b.size(); ++i) {
                const auto row = b.coords.row(i);
                EXPECT_TRUE(std::equal(row.begin(), row.end(), pts[b.ids[i]].begin()));
            }
    }
}

TEST(McmcSelect, ErrorIsMonotoneAcrossRounds) {
    const PointSet pts = noisy(400, 15, 4, 10);
    DatasetSource s = DatasetSource::from_points(pts);
    const auto s0 = SelectedPoints::from(pts, SubsetIds{0});
    const auto r = mcmc_select(s, s0, tlm(3, 5, 30), 2.0, 11);
    SelectedPoints cur = s0;
    double prev = err_p(pts, cur.basis(15), 2.0);
    for (const auto& b : r.blocks) {
        cur.append(b);
        const double e = err_p(pts, cur.basis(15), 2.0);
        EXPECT_LE(e, prev * (1 + 1e-12));
        prev = e;
    }
}

TEST(McmcSelect, DeterministicAndModeIndependent) {
    const PointSet pts = noisy(250, 8, 2, 12);
    const auto s0 = SelectedPoints::from(pts, SubsetIds{5});
    auto run = [&](AccessMode mode) {
        DatasetSource s = DatasetSource::from_points(pts, mode);
        return mcmc_select(s, s0, tlm(4, 2, 25), 2.0, 13);
    };
    const auto a = run(AccessMode::in_memory);
    const auto b = run(AccessMode::in_memory);
    const auto c = run(AccessMode::streaming);
    EXPECT_EQ(a.all(), b.all());
    EXPECT_EQ(a.all(), c.all());
    EXPECT_EQ(a.chains, c.chains);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.error), std::bit_cast<std::uint64_t>(c.error));
    DatasetSource s = DatasetSource::from_points(pts);
    EXPECT_NE(mcmc_select(s, s0, tlm(4, 2, 25), 2.0, 14).all(), a.all());
}

TEST(McmcSelect, DimensionMismatchAndBadParams) {
    const PointSet pts = noisy(20, 4, 2, 15);
    DatasetSource s = DatasetSource::from_points(pts);
    SelectedPoints wrong(3);
    wrong.add(0, std::vector<double>{1, 2, 3});
    EXPECT_THROW(mcmc_select(s, wrong, tlm(1, 1, 2), 2.0, 1), std::invalid_argument);
    EXPECT_THROW(mcmc_select(s, SelectedPoints(4), tlm(0, 1, 2), 2.0, 1), std::invalid_argument);
    EXPECT_THROW(mcmc_select(s, SelectedPoints(4), tlm(1, 1, 2), 0.5, 1), std::invalid_argument);
    DatasetSource st = DatasetSource::from_points(pts, AccessMode::streaming);
    EXPECT_THROW(mcmc_select(st, SelectedPoints(4), tlm(1, 1, 2), 2.0, 1, ProposalSampling::inverse_cdf),
                 std::logic_error);
}

TEST(McmcSelect, SinglePointLawMatchesExactChain) {
    // n = 8, t = l = 1: the selected point follows the m-state chain law,
    // which converges to the adaptive distribution.
    const PointSet pts = noisy(8, 3, 1, 16, 0.5);
    const SubsetIds s0{0};
    const std::size_t m = 64, trials = 100000;
    std::vector<std::size_t> picks;
    for (std::size_t t = 0; t < trials; ++t) {
        DatasetSource s = DatasetSource::from_points(pts);
        const auto r = mcmc_select(s, SelectedPoints::from(pts, s0), tlm(1, 1, m), 2.0, t);
        picks.push_back(r.blocks[0].ids[0]);
    }
    const auto f = oracle::frequencies(picks, 8);
    const auto p = weights(pts, s0, 2.0);
    const auto target = oracle::normalized(p);
    const auto law = oracle::chain_law(p, proposal_law(pts, s0, 2.0), m - 1);
    EXPECT_LE(oracle::tv(f, target), 0.05);
    EXPECT_LE(oracle::tv(f, law), 0.01);
}

TEST(McmcSelect, InverseCdfAgreesInDistribution) {
    const PointSet pts = noisy(8, 3, 1, 17, 0.5);
    const SubsetIds s0{1};
    const std::size_t m = 3, trials = 60000;
    std::vector<std::size_t> a, b;
    for (std::size_t t = 0; t < trials; ++t) {
        DatasetSource s = DatasetSource::from_points(pts);
        a.push_back(mcmc_select(s, SelectedPoints::from(pts, s0), tlm(1, 1, m), 2.0, t).blocks[0].ids[0]);
        b.push_back(mcmc_select(s, SelectedPoints::from(pts, s0), tlm(1, 1, m), 2.0, t, ProposalSampling::inverse_cdf)
                        .blocks[0]
                        .ids[0]);
    }
    const auto law = oracle::chain_law(weights(pts, s0, 2.0), proposal_law(pts, s0, 2.0), m - 1);
    EXPECT_LE(oracle::tv(oracle::frequencies(a, 8), law), 0.02);
    EXPECT_LE(oracle::tv(oracle::frequencies(b, 8), law), 0.02);
}

TEST(McmcSelect, ProposalDrawsFollowQ) {
    // With m = 1 each chain's point is its starting q-draw.
    const PointSet pts = noisy(6, 3, 1, 18, 0.5);
    const SubsetIds s0{2};
    DatasetSource s = DatasetSource::from_points(pts);
    const auto r = mcmc_select(s, SelectedPoints::from(pts, s0), tlm(50000, 1, 1), 2.0, 19);
    EXPECT_LE(oracle::tv(oracle::frequencies(r.blocks[0].ids, 6), proposal_law(pts, s0, 2.0)), 0.02);
}

TEST(TvDiag, MOneIsDistanceBetweenQAndP) {
    const PointSet pts = noisy(8, 3, 1, 20, 0.5);
    const SubsetIds s0{0}, cur{0, 3};
    const auto d = tv_distance_diag(pts, s0, cur, 1, 2.0, 100000, 21);
    const auto target = oracle::normalized(weights(pts, cur, 2.0));
    const auto q = proposal_law(pts, s0, 2.0);
    EXPECT_NEAR(d.tv, oracle::tv(q, target), 0.01);
    EXPECT_EQ(d.acceptance_rate, 0.0);
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_NEAR(d.target[i], target[i], 1e-9);
        EXPECT_NEAR(d.proposal[i], q[i], 1e-9);
    }
}

TEST(TvDiag, SameSubsetHasGammaAtMostTwoAndContracts) {
    const PointSet pts = noisy(10, 4, 2, 22, 0.5);
    const SubsetIds s0{4};
    for (std::size_t m : {1u, 2u, 4u, 8u}) {
        const auto d = tv_distance_diag(pts, s0, s0, m, 2.0, 100000, 23);
        EXPECT_LE(d.gamma, 2.0 + 1e-12);
        const auto p = weights(pts, s0, 2.0);
        const auto law = oracle::chain_law(p, proposal_law(pts, s0, 2.0), m - 1);
        const double exact = oracle::tv(law, oracle::normalized(p));
        EXPECT_LE(exact, std::pow(1.0 - 1.0 / d.gamma, double(m - 1)) + 1e-12);
        EXPECT_NEAR(d.tv, exact, 0.01) << m;
    }
}

TEST(TvDiag, GammaBoundedByTwoOverErrorRatio) {
    const PointSet pts = noisy(16, 4, 2, 24, 0.4);
    const SubsetIds s0{1};
    for (const SubsetIds& cur : {SubsetIds{1, 2}, SubsetIds{1, 5, 9}, SubsetIds{1, 3, 7}}) {
        const auto d = tv_distance_diag(pts, s0, cur, 2, 2.0, 1000, 25);
        const auto w0 = weights(pts, s0, 2.0), w = weights(pts, cur, 2.0);
        const double r = std::accumulate(w.begin(), w.end(), 0.0) / std::accumulate(w0.begin(), w0.end(), 0.0);
        EXPECT_NEAR(d.error_ratio, r, 1e-9);
        double gamma = 0.0;
        const auto q = proposal_law(pts, s0, 2.0);
        const auto target = oracle::normalized(w);
        for (std::size_t i = 0; i < 16; ++i) gamma = std::max(gamma, target[i] / q[i]);
        EXPECT_NEAR(d.gamma, gamma, 1e-9 * gamma);
        EXPECT_LE(d.gamma, 2.0 / r * (1 + 1e-12));
    }
}

TEST(TvDiag, Guards) {
    const PointSet big = noisy(5000, 2, 1, 26);
    EXPECT_THROW(tv_distance_diag(big, SubsetIds{0}, SubsetIds{0}, 2, 2.0, 10, 1), EnumerationGuardError);
    const PointSet line = from_rows({{1, 0}, {2, 0}});
    EXPECT_THROW(tv_distance_diag(line, SubsetIds{}, SubsetIds{0}, 2, 2.0, 10, 1), Error);
    const PointSet pts = noisy(8, 3, 1, 27);
    EXPECT_THROW(tv_distance_diag(pts, SubsetIds{0}, SubsetIds{1}, 2, 2.0, 10, 1), std::invalid_argument);
}

TEST(Pipeline, PassCounts) {
    const PointSet pts = noisy(200, 10, 3, 28);
    SamplingConfig c;
    c.k = 3;
    c.epsilon = 0.5;
    c.overrides.m = 20;
    for (InitMode init : {InitMode::exact_volume, InitMode::mcmc_volume, InitMode::adaptive_k_pass}) {
        c.init = init;
        DatasetSource s = DatasetSource::from_points(pts, AccessMode::streaming);
        const auto r = select_subset(s, c);
        EXPECT_TRUE(passes_ok(r.pass_log, expected_pipeline_passes(c))) << to_string(init);
        EXPECT_EQ(expected_pipeline_passes(c), init == InitMode::adaptive_k_pass ? 4u : 2u);
        EXPECT_EQ(r.size(), 3u + r.params.t * r.params.l);
    }
    c.p = 3.0;
    c.init = InitMode::adaptive_k_pass;
    DatasetSource s = DatasetSource::from_points(pts);
    const auto r = select_subset(s, c);
    EXPECT_TRUE(passes_ok(r.pass_log, 4));
    EXPECT_DOUBLE_EQ(r.params.alpha, 6.0);
}

TEST(Pipeline, ValidatesBeforeAnyPass) {
    const PointSet pts = noisy(50, 4, 2, 29);
    DatasetSource s = DatasetSource::from_points(pts);
    SamplingConfig c;
    c.k = 5;
    EXPECT_THROW(select_subset(s, c), std::invalid_argument);
    c.k = 2;
    c.p = 3.0;
    c.init = InitMode::mcmc_volume;
    EXPECT_THROW(select_subset(s, c), std::invalid_argument);
    c.p = 1.5;
    c.init = InitMode::adaptive_k_pass;
    EXPECT_THROW(select_subset(s, c), std::invalid_argument);
    EXPECT_EQ(s.log().total_passes(), 0u);
}
