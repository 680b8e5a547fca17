// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>

using namespace dmaee;
using namespace testing;
using Catch::Approx;

namespace
{

// Power model with explicit constants; fixed power = W_c U + W_BS + K W_S.
PowerModel simple_model(std::size_t users, double pmax, double xi = 1.0, double noise = 1.0)
{
    PowerModel pm;
    pm.amplifier_inefficiency.assign(users, xi);
    pm.static_user_w.assign(users, 0.5 / static_cast<double>(users));
    pm.static_bs_w = 0.25;
    pm.rf_chain_w = 0.25;
    pm.phase_shifter_w = 0.0;
    pm.max_transmit_w = pmax;
    pm.noise_power_w = noise;
    pm.bandwidth_hz = 1.0;
    return pm;
}

// Small scenario from the synthetic generator at realistic power levels.
struct Scenario
{
    ChannelRealization ch;
    PowerModel pm;
    std::size_t strips;
};

Scenario small_scenario(std::uint64_t seed, double pmax_dbm = 20.0, std::size_t strips = 4, std::size_t elements = 4,
                        std::size_t users = 3, std::size_t antennas = 2)
{
    const auto stats = generate_channel_stats(ChannelDims::uniform(users, antennas, strips, elements), 0.25, 0.4, seed,
                                              db_to_linear(-120.0));
    return {sample_channel_realization(stats, seed), PowerModel::reference(users, pmax_dbm), strips};
}

// Euclidean projection of a Hermitian matrix onto {P >= 0, tr P <= cap}:
// eigen-decompose, then project the eigenvalues onto the capped simplex by sorting.
cmat oracle_project(const cmat &x, double cap)
{
    Eigen::SelfAdjointEigenSolver<cmat> es(0.5 * (x + x.adjoint()));
    rvec lam = es.eigenvalues();
    rvec p = lam.cwiseMax(0.0);
    if (p.sum() > cap)
    {
        std::vector<double> s(lam.data(), lam.data() + lam.size());
        std::sort(s.begin(), s.end(), std::greater<>());
        double cum = 0.0, theta = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i)
        {
            cum += s[i];
            const double t = (cum - cap) / static_cast<double>(i + 1);
            if (s[i] - t > 0.0)
                theta = t;
        }
        p = (lam.array() - theta).cwiseMax(0.0);
    }
    return es.eigenvectors() * p.asDiagonal() * es.eigenvectors().adjoint();
}

double oracle_objective(double eta, const std::vector<cmat> &h, const std::vector<cmat> &p, const PowerModel &pm)
{
    const Eigen::Index k = h[0].rows();
    cmat s = cmat::Identity(k, k);
    double tx = 0.0;
    for (std::size_t u = 0; u < h.size(); ++u)
    {
        s += h[u] * p[u] * h[u].adjoint() / pm.noise_power_w;
        tx += pm.amplifier_inefficiency[u] * p[u].trace().real();
    }
    Eigen::SelfAdjointEigenSolver<cmat> es(0.5 * (s + s.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().array().log().sum() / std::log(2.0) - eta * tx;
}

// Projected gradient ascent with a fixed step; used only as a reference.
std::vector<cmat> projected_gradient(double eta, const std::vector<cmat> &h, const PowerModel &pm, double step,
                                     std::size_t iters)
{
    const Eigen::Index k = h[0].rows();
    std::vector<cmat> p;
    for (const auto &hu : h)
        p.push_back(cmat::Zero(hu.cols(), hu.cols()));
    for (std::size_t it = 0; it < iters; ++it)
    {
        cmat s = cmat::Identity(k, k);
        for (std::size_t u = 0; u < h.size(); ++u)
            s += h[u] * p[u] * h[u].adjoint() / pm.noise_power_w;
        const cmat sinv = s.inverse();
        double moved = 0.0;
        for (std::size_t u = 0; u < h.size(); ++u)
        {
            const Eigen::Index n = p[u].rows();
            const cmat grad = h[u].adjoint() * sinv * h[u] / (pm.noise_power_w * std::log(2.0)) -
                              eta * pm.amplifier_inefficiency[u] * cmat::Identity(n, n);
            const cmat next = oracle_project(p[u] + step * grad, pm.max_transmit_w);
            moved = std::max(moved, (next - p[u]).norm());
            p[u] = next;
        }
        if (moved < 1e-12)
            break;
    }
    return p;
}

} // namespace

// ---------- water-filling ----------

TEST_CASE("water-filling with gains (4, 1) equalizes the active levels", "[inst][waterfill]")
{
    rvec s(2);
    s << 4.0, 1.0;
    const rvec p = water_fill(s, 0.0, 10.0);
    CHECK(p.sum() == Approx(10.0).epsilon(1e-12));
    CHECK(p(0) == Approx(5.375).epsilon(1e-12));
    CHECK(p(1) == Approx(4.625).epsilon(1e-12));
    CHECK(std::abs(1.0 / (p(0) + 0.25) - 1.0 / (p(1) + 1.0)) < 1e-8);
}

TEST_CASE("water-filling drops weak modes under a tight cap", "[inst][waterfill]")
{
    rvec s(2);
    s << 4.0, 1.0;
    const rvec p = water_fill(s, 0.0, 0.5);
    CHECK(p(0) == Approx(0.5).epsilon(1e-12));
    CHECK(p(1) == 0.0);
}

TEST_CASE("water-filling uses the free level when the cap is slack", "[inst][waterfill]")
{
    rvec s(3);
    s << 8.0, 2.0, 0.1;
    const double cost = 0.5;
    const rvec p = water_fill(s, cost, 1e6);
    const double level = 1.0 / (cost * ln2);
    for (Eigen::Index i = 0; i < 3; ++i)
        CHECK(p(i) == Approx(std::max(0.0, level - 1.0 / s(i))).margin(1e-12));
    // Per-mode stationarity: s / ((1 + s p) ln 2) = cost on active modes, <= cost otherwise.
    for (Eigen::Index i = 0; i < 3; ++i)
    {
        const double marginal = s(i) / ((1.0 + s(i) * p(i)) * ln2);
        if (p(i) > 0.0)
            CHECK(marginal == Approx(cost).epsilon(1e-10));
        else
            CHECK(marginal <= cost + 1e-12);
    }
}

TEST_CASE("water-filling edge cases", "[inst][waterfill]")
{
    CHECK(water_fill(rvec::Zero(3), 0.0, 1.0).sum() == 0.0);
    CHECK(water_fill(rvec::Ones(2), 1e9, 1.0).sum() == 0.0);
    CHECK(water_fill(rvec::Ones(2), 0.0, 0.0).sum() == 0.0);
    CHECK_THROWS_AS(water_fill(rvec::Ones(2), -1.0, 1.0), ValidationError);
}

// ---------- closed-form subspace ----------

TEST_CASE("diagonal aggregate picks the strongest coordinate", "[inst][subspace]")
{
    cmat g = cmat::Zero(2, 2);
    g(0, 0) = std::sqrt(3.0);
    g(1, 1) = 1.0;
    const ChannelRealization ch{{g}};
    const TransmitCovariances p{cmat::Identity(2, 2)};
    const cmat v = optimal_subspace(ch, p, 1.0, 1);
    CHECK(std::abs(std::abs(v(0, 0)) - 1.0) < 1e-12);
    CHECK(instantaneous_se(v, ch, p, 1.0) == Approx(2.0).epsilon(1e-12));
}

TEST_CASE("full-dimension subspace gives the fully digital SE", "[inst][subspace]")
{
    const auto ch = random_channel(5, 2, 2, 3);
    const TransmitCovariances p{random_covariance(2, 1.0, 1), random_covariance(2, 2.0, 2)};
    const cmat v = optimal_subspace(ch, p, 0.5, 5);
    const PowerModel pm = simple_model(2, 10.0, 1.0, 0.5);
    CHECK(instantaneous_se(v, ch, p, 0.5) == Approx(fully_digital_ee(ch, p, pm).se_bits_per_s_per_hz).epsilon(1e-12));
    CHECK_THROWS_AS(optimal_subspace(ch, p, 0.5, 6), ValidationError);
    CHECK_THROWS_AS(optimal_subspace(ch, p, 0.5, 0), ValidationError);
}

TEST_CASE("closed-form subspace beats random orthonormal bases", "[inst][subspace][property]")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
    {
        const auto ch = random_channel(6, 2, 2, seed);
        const TransmitCovariances p{random_covariance(2, 1.0, seed), random_covariance(2, 1.0, seed + 9)};
        const double best = instantaneous_se(optimal_subspace(ch, p, 1.0, 2), ch, p, 1.0);
        auto g = rng(seed);
        for (int t = 0; t < 10000; ++t)
            CHECK(best >= instantaneous_se(linalg::random_orthonormal(6, 2, g), ch, p, 1.0) - 1e-9);
    }
}

// ---------- inner solver ----------

TEST_CASE("inner solver matches classic water-filling on a diagonal channel", "[inst][inner]")
{
    cmat g = cmat::Zero(2, 2);
    g(0, 0) = 2.0;
    g(1, 1) = 1.0;
    const ChannelRealization ch{{g}};
    const PowerModel pm = simple_model(1, 10.0);
    const auto p = solve_inner(0.0, cmat::Identity(2, 2), ch, pm);
    Eigen::SelfAdjointEigenSolver<cmat> es(p[0]);
    CHECK(es.eigenvalues()(1) == Approx(5.375).epsilon(1e-9));
    CHECK(es.eigenvalues()(0) == Approx(4.625).epsilon(1e-9));
    CHECK(std::abs(p[0](0, 0) - 5.375) < 1e-9);
}

TEST_CASE("an expensive transmit power switches the users off", "[inst][inner]")
{
    const auto ch = random_channel(4, 2, 2, 4);
    const PowerModel pm = simple_model(2, 1.0);
    const auto p = solve_inner(1e6, cmat::Identity(4, 2), ch, pm);
    for (const auto &pu : p)
        CHECK(pu.norm() == 0.0);
    CHECK_THROWS_AS(solve_inner(-1.0, cmat::Identity(4, 2), ch, pm), ValidationError);
}

TEST_CASE("inner solver agrees with a projected-gradient reference", "[inst][inner][oracle]")
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
    {
        const auto ch = random_channel(2, 2, 2, seed);
        const PowerModel pm = simple_model(2, 2.0);
        const double eta = 0.3;
        const cmat basis = cmat::Identity(2, 2);
        const auto p = solve_inner(eta, basis, ch, pm);
        const auto h = detail::project_channels(basis, ch);
        const auto ref = projected_gradient(eta, h, pm, 0.05, 200000);
        const double mine = oracle_objective(eta, h, p, pm);
        const double theirs = oracle_objective(eta, h, ref, pm);
        CHECK(std::abs(mine - theirs) <= 1e-6);
        CHECK(mine >= theirs - 1e-9);
        CHECK(detail::kkt_residual(eta, h, p, pm) <= 1e-8);
    }
}

TEST_CASE("inner solver KKT residual is below tolerance on realistic scenarios", "[inst][inner][property]")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
    {
        const Scenario sc = small_scenario(seed, 30.0);
        auto g = rng(seed);
        const cmat basis = linalg::random_orthonormal(16, 4, g);
        const double eta = 1e-6 * static_cast<double>(seed);
        const auto p = solve_inner(eta, basis, sc.ch, sc.pm);
        validate_covariances(p, sc.ch, sc.pm.max_transmit_w);
        CHECK(detail::kkt_residual(eta, detail::project_channels(basis, sc.ch), p, sc.pm) <= 1e-8);
    }
}

TEST_CASE("inner solver failure carries the last iterate", "[inst][inner][errors]")
{
    const Scenario sc = small_scenario(2, 30.0);
    auto g = rng(2);
    const cmat basis = linalg::random_orthonormal(16, 4, g);
    SolverConfig cfg;
    cfg.kkt_tol = 1e-300;
    cfg.max_inner_iters = 1;
    try
    {
        solve_inner(0.0, basis, sc.ch, sc.pm, cfg);
        FAIL("expected InnerSolverError");
    }
    catch (const InnerSolverError &e)
    {
        CHECK(e.last_iterate().size() == 3);
        CHECK(e.iterations() == 1);
        CHECK(e.residual() > 0.0);
    }
}

// ---------- Dinkelbach ----------

TEST_CASE("scalar Dinkelbach matches a fine grid search", "[inst][dinkelbach][oracle]")
{
    // log2(1 + p) / (p + 1): xi = 1, fixed power 1, sigma^2 = 1, g = 1.
    const double pmax = 10.0;
    const PowerModel pm = simple_model(1, pmax);
    const ChannelRealization ch{{cmat::Ones(1, 1)}};
    DinkelbachConfig cfg;
    cfg.tol = 1e-13;
    const auto [p, st] = dinkelbach_covariances(cmat::Ones(1, 1), ch, pm, CircuitLoad{1, 0}, cfg);

    double best_eta = 0.0, best_p = 0.0;
    const int n = 1000000;
    for (int i = 0; i <= n; ++i)
    {
        const double x = pmax * static_cast<double>(i) / n;
        const double eta = std::log2(1.0 + x) / (x + 1.0);
        if (eta > best_eta)
        {
            best_eta = eta;
            best_p = x;
        }
    }
    CHECK(std::abs(st.eta - best_eta) <= 1e-4);
    CHECK(std::abs(p[0](0, 0).real() - best_p) <= 1e-4);
    CHECK(st.converged);
}

TEST_CASE("zero channel gives zero power and zero ratio", "[inst][dinkelbach]")
{
    const ChannelRealization ch{{cmat::Zero(4, 2)}};
    const PowerModel pm = simple_model(1, 1.0);
    const auto [p, st] = dinkelbach_covariances(cmat::Identity(4, 2), ch, pm);
    CHECK(p[0].norm() == 0.0);
    CHECK(st.eta == 0.0);
    CHECK(st.converged);
}

TEST_CASE("Dinkelbach ratio is nondecreasing and meets the root condition", "[inst][dinkelbach][property]")
{
    for (std::uint64_t seed = 1; seed <= 100; ++seed)
    {
        const Scenario sc = small_scenario(seed, seed % 2 ? 10.0 : 30.0);
        auto g = rng(seed);
        const cmat basis = linalg::random_orthonormal(16, 4, g);
        const auto [p, st] = dinkelbach_covariances(basis, sc.ch, sc.pm);
        REQUIRE(st.converged);
        for (std::size_t i = 1; i < st.objective_trace.size(); ++i)
            CHECK(st.objective_trace[i] >= st.objective_trace[i - 1] - 1e-9);
        CHECK(std::abs(st.root_residual) <= DinkelbachConfig{}.tol * st.power);
        CHECK(st.iterations <= 30);
    }
}

TEST_CASE("Dinkelbach rejects non-orthonormal bases", "[inst][dinkelbach][errors]")
{
    const auto ch = random_channel(4, 1, 2, 1);
    CHECK_THROWS_AS(dinkelbach_covariances(2.0 * cmat::Identity(4, 2).eval(), ch, simple_model(1, 1.0)),
                    ValidationError);
}

// ---------- alternating optimization ----------

TEST_CASE("AO EE trace is nondecreasing", "[inst][ao][property]")
{
    for (std::uint64_t seed = 1; seed <= 50; ++seed)
    {
        const Scenario sc = small_scenario(seed, seed % 3 == 0 ? 0.0 : 25.0);
        const SubspaceDesign d = ao_subspace_instantaneous(sc.ch, sc.pm, sc.strips);
        REQUIRE(d.starts.size() == 3);
        for (const AOTrace &t : d.starts)
        {
            REQUIRE_FALSE(t.ee_per_iteration.empty());
            for (std::size_t i = 1; i < t.ee_per_iteration.size(); ++i)
                CHECK(t.ee_per_iteration[i] >= t.ee_per_iteration[i - 1] * (1.0 - 1e-9));
            CHECK(t.converged);
        }
        CHECK(d.ee.ee_bits_per_joule == Approx(d.trace.ee_per_iteration.back()).epsilon(1e-12));
    }
}

TEST_CASE("plain alternation without extrapolation or second start", "[inst][ao]")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
    {
        const Scenario sc = small_scenario(seed, 20.0);
        AOConfig cfg;
        cfg.extrapolation = 0.0;
        cfg.se_start = false;
        const SubspaceDesign plain = ao_subspace_instantaneous(sc.ch, sc.pm, sc.strips, cfg);
        REQUIRE(plain.starts.size() == 1);
        const auto &t = plain.trace.ee_per_iteration;
        for (std::size_t i = 1; i < t.size(); ++i)
            CHECK(t[i] >= t[i - 1] * (1.0 - 1e-9));
        // The default design keeps the better of its starts.
        const SubspaceDesign full = ao_subspace_instantaneous(sc.ch, sc.pm, sc.strips);
        CHECK(full.ee.ee_bits_per_joule >= plain.ee.ee_bits_per_joule * (1.0 - 1e-3));
    }
    AOConfig bad;
    bad.extrapolation = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("EE-oriented design is at least as efficient as the SE-oriented one", "[inst][ao][property]")
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
    {
        const Scenario sc = small_scenario(seed, 10.0 + 2.0 * static_cast<double>(seed % 10));
        const SubspaceDesign ee = ao_subspace_instantaneous(sc.ch, sc.pm, sc.strips);
        const SubspaceDesign se = ao_subspace_instantaneous(sc.ch, sc.pm.se_oriented(), sc.strips);
        const double se_ee = dma_ee(se.basis, sc.ch, se.covs, sc.pm, sc.strips).ee_bits_per_joule;
        CHECK(ee.ee.ee_bits_per_joule >= se_ee * (1.0 - 1e-9));
    }
}

TEST_CASE("UC synthesis on a structured optimal subspace keeps the EE", "[inst][ao]")
{
    // Channel spanned by the rows of a structured Q0, mixed by a random A, so the
    // optimal subspace is exactly a realizable DMA row space.
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
    {
        const WeightMatrix q0 = random_weights(3, 4, seed);
        auto r = rng(seed + 40);
        const cmat mix = linalg::random_orthonormal(3, 3, r) * (rvec(3) << 3.0, 2.0, 1.5).finished().asDiagonal();
        const ChannelRealization ch{{q0.dense().adjoint() * mix}};
        // Generous budget so every mode is active and the aggregate has full rank K.
        PowerModel pm = simple_model(1, 30.0, 0.1);
        AOConfig cfg;
        cfg.am = AMConfig{1e-3, 1e-12, 5000};
        const SubspaceDesign sd = ao_subspace_instantaneous(ch, pm, 3, cfg);
        REQUIRE(linalg::subspace_distance(sd.basis, row_space_of(q0.dense())) < 1e-10);
        const DmaDesign d = finalize_dma(ch, pm, sd, Unconstrained{}, cfg.am);
        REQUIRE(d.synthesis.residual < 1e-8);
        CHECK(rel_diff(d.ee.ee_bits_per_joule, d.unconstrained_ee.ee_bits_per_joule) <= 1e-6);
        CHECK(d.weights.satisfies(Unconstrained{}));
    }
}

TEST_CASE("constrained designs satisfy their feasible sets", "[inst][ao]")
{
    const Scenario sc = small_scenario(7, 20.0);
    const SubspaceDesign sd = ao_subspace_instantaneous(sc.ch, sc.pm, sc.strips);
    for (const FeasibleSet &s : {FeasibleSet{Unconstrained{}}, FeasibleSet{AmplitudeOnly{}},
                                 FeasibleSet{BinaryAmplitude{}}, FeasibleSet{LorentzianPhase{}}})
    {
        const DmaDesign d = finalize_dma(sc.ch, sc.pm, sd, s, AOConfig{}.am);
        CHECK(d.weights.satisfies(s));
        CHECK(d.ee.ee_bits_per_joule >= 0.0);
        CHECK(d.ee.ee_bits_per_joule <= d.unconstrained_ee.ee_bits_per_joule * (1.0 + 1e-9));
    }
}

TEST_CASE("SE-oriented design spends the full budget and maximizes SE", "[inst][ao][property]")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
    {
        const Scenario sc = small_scenario(seed, 20.0);
        const PowerModel se = sc.pm.se_oriented();
        const SubspaceDesign d = ao_subspace_instantaneous(sc.ch, se, sc.strips);
        for (const auto &p : d.covs)
            CHECK(p.trace().real() == Approx(se.max_transmit_w).epsilon(1e-6));
        // For the final subspace the covariances also solve the pure SE problem.
        const auto pure = solve_inner(0.0, d.basis, sc.ch, se);
        const double a = instantaneous_se(d.basis, sc.ch, d.covs, se.noise_power_w);
        const double b = instantaneous_se(d.basis, sc.ch, pure, se.noise_power_w);
        CHECK(std::abs(a - b) <= 1e-6 * std::max(1.0, b));
    }
}

// ---------- baselines ----------

TEST_CASE("baseline designs produce consistent EE", "[inst][baseline]")
{
    const Scenario sc = small_scenario(3, 30.0);
    const BaselineDesign fd = fully_digital_design(sc.ch, sc.pm);
    const BaselineDesign hy = hybrid_design(sc.ch, sc.pm, sc.strips);
    CHECK(fd.converged);
    CHECK(fd.ee.ee_bits_per_joule > 0.0);
    CHECK(hy.ee.ee_bits_per_joule > 0.0);
    CHECK(fd.ee.power_watts == Approx(total_power(fd.covs, sc.pm, 16)).epsilon(1e-12));
    CHECK(hy.ee.power_watts == Approx(total_power(hy.covs, sc.pm, 4, 64)).epsilon(1e-12));
    CHECK(hy.ee.se_bits_per_s_per_hz == Approx(hybrid_ad_ee(sc.ch, hy.covs, sc.pm, hy.combiner).se_bits_per_s_per_hz)
                                            .epsilon(1e-12));
    // Projection can only lose rate at equal covariances.
    const cmat v = optimal_subspace(sc.ch, fd.covs, sc.pm.noise_power_w, sc.strips);
    CHECK(fd.ee.se_bits_per_s_per_hz >= instantaneous_se(v, sc.ch, fd.covs, sc.pm.noise_power_w) - 1e-12);
}
