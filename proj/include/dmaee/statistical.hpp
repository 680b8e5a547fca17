// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef DMAEE_STATISTICAL_HPP
#define DMAEE_STATISTICAL_HPP

#include "channel.hpp"
#include "common.hpp"
#include "dma.hpp"
#include "instantaneous.hpp"
#include "linalg.hpp"
#include "metrics.hpp"

#include <optional>

// EE maximization with statistical CSI. Transmit directions are the
// per-user eigenbases V_u, so only the diagonal loadings Lambda_u and the
// combining subspace remain; the ergodic rate is replaced by its
// large-system deterministic equivalent.
namespace dmaee
{

struct PowerAllocations
{
    std::vector<rvec> lambda; // per user, N_u nonnegative loadings

    static PowerAllocations zeros(const ChannelStats &stats)
    {
        PowerAllocations a;
        for (const auto &u : stats.users)
            a.lambda.push_back(rvec::Zero(u.coupling.cols()));
        return a;
    }

    static PowerAllocations uniform(const ChannelStats &stats, double total)
    {
        PowerAllocations a;
        for (const auto &u : stats.users)
            a.lambda.push_back(rvec::Constant(u.coupling.cols(), total / static_cast<double>(u.coupling.cols())));
        return a;
    }

    void validate(const ChannelStats &stats, double max_trace = std::numeric_limits<double>::infinity()) const
    {
        require(lambda.size() == stats.num_users(), "PowerAllocations: one allocation per user required");
        for (std::size_t u = 0; u < lambda.size(); ++u)
        {
            require(lambda[u].size() == stats.users[u].coupling.cols(), "PowerAllocations: length != N_u");
            require(lambda[u].allFinite() && (lambda[u].array() >= 0.0).all(),
                    "PowerAllocations: loadings must be finite and >= 0");
            require(lambda[u].sum() <= max_trace + 1e-9, "PowerAllocations: loadings exceed P_max");
        }
    }
};

// P_u = V_u diag(Lambda_u) V_u^H.
inline TransmitCovariances allocations_to_covariances(const PowerAllocations &allocs, const ChannelStats &stats)
{
    allocs.validate(stats);
    TransmitCovariances covs;
    for (std::size_t u = 0; u < allocs.lambda.size(); ++u)
    {
        const cmat &v = stats.users[u].transmit_basis;
        covs.push_back(linalg::hermitian_part(v * allocs.lambda[u].asDiagonal() * v.adjoint()));
    }
    return covs;
}

inline double allocation_power(const PowerAllocations &allocs, const PowerModel &pm, const CircuitLoad &load)
{
    double w = static_power(pm, load);
    for (std::size_t u = 0; u < allocs.lambda.size(); ++u)
        w += pm.amplifier_inefficiency[u] * allocs.lambda[u].sum();
    return w;
}

// Optimal transmit directions: the transmit eigenbasis of every user.
inline std::vector<cmat> optimal_directions(const ChannelStats &stats)
{
    stats.validate(false);
    std::vector<cmat> out;
    for (const auto &u : stats.users)
        out.push_back(u.transmit_basis);
    return out;
}

struct DEConfig
{
    double tol = 1e-10; // ||psi_l - psi_{l-1}||_F relative to ||psi_l||_F
    std::size_t max_iters = 20000;

    void validate() const
    {
        require(tol > 0.0, "DEConfig: tol must be > 0");
        require(max_iters >= 1, "DEConfig: max_iters must be >= 1");
    }
};

struct DESolution
{
    std::vector<rvec> gamma; // per user, M entries
    std::vector<rvec> psi;   // per user, N_u entries
    std::vector<rvec> xi;    // diagonal of Xi_u = diag(Omega_u^T gamma_u)
    cmat psi_total;          // K x K
    double rate_de = 0.0;    // bits/s/Hz
    std::size_t iterations = 0;
    double residual = 0.0;
};

namespace detail
{

// U^_u = V^H Diag(a) U_u for every user.
inline std::vector<cmat> steered_bases(const cmat &basis, const ChannelStats &stats, const rvec &attenuation)
{
    std::vector<cmat> out;
    for (const auto &us : stats.users)
        out.push_back(basis.adjoint() * effective_receive_basis(us, attenuation));
    return out;
}

inline cmat de_psi_total(const std::vector<cmat> &uhat, const ChannelStats &stats, const std::vector<rvec> &psi,
                         double noise_power)
{
    const Eigen::Index k = uhat.front().rows();
    cmat s = cmat::Zero(k, k);
    for (std::size_t u = 0; u < uhat.size(); ++u)
    {
        const rvec w = stats.users[u].coupling * psi[u];
        s.noalias() += uhat[u] * w.asDiagonal() * uhat[u].adjoint();
    }
    return linalg::hermitian_part(s) / noise_power;
}

// gamma_u,m = (1/sigma^2) u^_m^H (I + Psi)^{-1} u^_m.
inline std::vector<rvec> de_gamma(const std::vector<cmat> &uhat, const cmat &psi_total, double noise_power)
{
    const Eigen::Index k = psi_total.rows();
    Eigen::LLT<cmat> llt(cmat::Identity(k, k) + psi_total);
    if (llt.info() != Eigen::Success)
        throw ValidationError("deterministic_equivalent: I + Psi is not positive definite");
    std::vector<rvec> out;
    for (const auto &uh : uhat)
    {
        const cmat x = llt.solve(uh);
        out.push_back((uh.conjugate().array() * x.array()).colwise().sum().real().transpose() / noise_power);
    }
    return out;
}

} // namespace detail

// Deterministic equivalent of the ergodic rate for loadings `allocs` and
// combining basis V (M x K orthonormal). The fixed point in (gamma, psi) is
// iterated jointly over users from psi = 0 (or `warm_psi`).
inline DESolution deterministic_equivalent(const PowerAllocations &allocs, const cmat &basis,
                                           const ChannelStats &stats, double noise_power, const DEConfig &cfg = {},
                                           const rvec &attenuation = {},
                                           const std::optional<std::vector<rvec>> &warm_psi = std::nullopt)
{
    cfg.validate();
    stats.validate(false);
    allocs.validate(stats);
    require(noise_power > 0.0, "deterministic_equivalent: sigma^2 must be > 0");
    require(basis.rows() == stats.num_elements() && basis.cols() >= 1, "deterministic_equivalent: basis must be M x K");
    require((basis.adjoint() * basis - cmat::Identity(basis.cols(), basis.cols())).norm() <= 1e-8,
            "deterministic_equivalent: basis is not orthonormal");

    const auto uhat = detail::steered_bases(basis, stats, attenuation);
    const std::size_t nu = stats.num_users();

    DESolution sol;
    sol.psi = warm_psi ? *warm_psi : PowerAllocations::zeros(stats).lambda;
    require(sol.psi.size() == nu, "deterministic_equivalent: warm psi has wrong user count");

    bool converged = false;
    for (std::size_t it = 1; it <= cfg.max_iters; ++it)
    {
        sol.psi_total = detail::de_psi_total(uhat, stats, sol.psi, noise_power);
        sol.gamma = detail::de_gamma(uhat, sol.psi_total, noise_power);
        double diff = 0.0, norm = 0.0;
        sol.xi.resize(nu);
        for (std::size_t u = 0; u < nu; ++u)
        {
            sol.xi[u] = stats.users[u].coupling.transpose() * sol.gamma[u];
            const rvec &lam = allocs.lambda[u];
            const rvec next = (lam.array() / (1.0 + sol.xi[u].array() * lam.array())).matrix();
            diff += (next - sol.psi[u]).squaredNorm();
            norm += next.squaredNorm();
            sol.psi[u] = next;
        }
        sol.iterations = it;
        sol.residual = std::sqrt(diff);
        if (sol.residual <= cfg.tol * std::sqrt(norm))
        {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw ConvergenceError("deterministic_equivalent: fixed point did not converge", sol.residual, sol.iterations);

    // Final quantities consistent with the returned psi.
    sol.psi_total = detail::de_psi_total(uhat, stats, sol.psi, noise_power);
    sol.gamma = detail::de_gamma(uhat, sol.psi_total, noise_power);
    double rate = linalg::log2det_identity_plus(sol.psi_total);
    for (std::size_t u = 0; u < nu; ++u)
    {
        sol.xi[u] = stats.users[u].coupling.transpose() * sol.gamma[u];
        rate += (1.0 + sol.xi[u].array() * allocs.lambda[u].array()).log().sum() / ln2;
        rate -= sol.gamma[u].dot(stats.users[u].coupling * sol.psi[u]) / ln2;
    }
    sol.rate_de = std::max(0.0, rate);
    return sol;
}

struct StatSolverConfig
{
    SolverConfig inner; // kkt_tol bounds the directional derivative at the returned loadings
    DEConfig de;

    void validate() const
    {
        inner.validate();
        de.validate();
    }
};

namespace detail
{

struct ParametricPoint
{
    PowerAllocations allocs;
    DESolution de;
    double value = 0.0; // R_DE - eta * transmit power
};

inline double parametric_value(const DESolution &de, const PowerAllocations &a, double eta, const PowerModel &pm)
{
    double w = 0.0;
    for (std::size_t u = 0; u < a.lambda.size(); ++u)
        w += pm.amplifier_inefficiency[u] * a.lambda[u].sum();
    return de.rate_de - eta * w;
}

// Ascent on R_DE(Lambda) - eta * xi^T tr(Lambda). The water-filling solution
// d* against the current t_u = Omega_u^T gamma_u maximizes a concave surrogate
// that shares the objective's gradient at Lambda, so d* - Lambda is an ascent
// direction; the step is chosen by Armijo backtracking. Taking full steps
// instead oscillates once the power cost is active.
inline ParametricPoint maximize_parametric_de(double eta, const cmat &basis, const ChannelStats &stats,
                                              const PowerModel &pm, const StatSolverConfig &solver,
                                              const rvec &attenuation, ParametricPoint cur)
{
    const std::size_t nu = stats.num_users();
    for (std::size_t it = 0; it < solver.inner.max_inner_iters; ++it)
    {
        PowerAllocations dir = cur.allocs;
        double slope = 0.0;
        for (std::size_t u = 0; u < nu; ++u)
        {
            const rvec &t = cur.de.xi[u];
            const rvec &lam = cur.allocs.lambda[u];
            dir.lambda[u] = water_fill(t, eta * pm.amplifier_inefficiency[u], pm.max_transmit_w,
                                       solver.inner.bisection_tol) -
                            lam;
            const rvec grad = (t.array() / ((1.0 + t.array() * lam.array()) * ln2)).matrix() -
                              rvec::Constant(t.size(), eta * pm.amplifier_inefficiency[u]);
            slope += grad.dot(dir.lambda[u]);
        }
        if (slope <= solver.inner.kkt_tol)
            break;
        double step = 1.0;
        bool moved = false;
        while (step > 1e-12)
        {
            ParametricPoint trial;
            trial.allocs = cur.allocs;
            for (std::size_t u = 0; u < nu; ++u)
                trial.allocs.lambda[u] = (cur.allocs.lambda[u] + step * dir.lambda[u]).cwiseMax(0.0);
            trial.de = deterministic_equivalent(trial.allocs, basis, stats, pm.noise_power_w, solver.de, attenuation,
                                                cur.de.psi);
            trial.value = parametric_value(trial.de, trial.allocs, eta, pm);
            if (trial.value >= cur.value + 1e-4 * step * slope)
            {
                cur = std::move(trial);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved)
            break;
    }
    return cur;
}

} // namespace detail

// Dinkelbach over diagonal loadings with the deterministic-equivalent rate;
// the inner parametric problem is solved by detail::maximize_parametric_de.
inline std::pair<PowerAllocations, DinkelbachState>
dinkelbach_allocations(const cmat &basis, const ChannelStats &stats, const PowerModel &pm, const CircuitLoad &load,
                       const DinkelbachConfig &cfg = {}, const StatSolverConfig &solver = {},
                       const rvec &attenuation = {},
                       const std::optional<PowerAllocations> &warm_start = std::nullopt)
{
    cfg.validate();
    solver.validate();
    pm.validate(stats.num_users());

    detail::ParametricPoint pt;
    pt.allocs = warm_start ? *warm_start : PowerAllocations::zeros(stats);
    pt.allocs.validate(stats, pm.max_transmit_w);
    pt.de = deterministic_equivalent(pt.allocs, basis, stats, pm.noise_power_w, solver.de, attenuation);

    DinkelbachState st;
    st.rate = pt.de.rate_de;
    st.power = allocation_power(pt.allocs, pm, load);
    st.eta = st.rate / st.power;

    for (std::size_t it = 1; it <= cfg.max_iters; ++it)
    {
        const double eta = st.eta;
        pt.value = detail::parametric_value(pt.de, pt.allocs, eta, pm);
        pt = detail::maximize_parametric_de(eta, basis, stats, pm, solver, attenuation, std::move(pt));
        st.rate = pt.de.rate_de;
        st.power = allocation_power(pt.allocs, pm, load);
        st.eta = st.rate / st.power;
        st.objective_trace.push_back(st.eta);
        st.iterations = it;
        st.root_residual = st.rate - eta * st.power;
        if (std::abs(st.eta - eta) <= cfg.tol)
        {
            st.converged = true;
            break;
        }
    }
    return {std::move(pt.allocs), std::move(st)};
}

struct StatSubspace
{
    cmat basis;
    bool degenerate = false; // A = 0; basis is the first K coordinate vectors
};

// A = (1/sigma^2) sum_u Diag(a) U_u diag(Omega_u psi_u) U_u^H Diag(a).
inline cmat statistical_aggregate(const std::vector<rvec> &psi, const ChannelStats &stats, double noise_power,
                                  const rvec &attenuation = {})
{
    stats.validate(false);
    require(psi.size() == stats.num_users(), "statistical_aggregate: one psi vector per user required");
    const Eigen::Index m = stats.num_elements();
    cmat a = cmat::Zero(m, m);
    for (std::size_t u = 0; u < psi.size(); ++u)
    {
        require(psi[u].size() == stats.users[u].coupling.cols(), "statistical_aggregate: psi length != N_u");
        require((psi[u].array() >= 0.0).all(), "statistical_aggregate: psi must be >= 0");
        const cmat ub = effective_receive_basis(stats.users[u], attenuation);
        const rvec w = stats.users[u].coupling * psi[u];
        a.noalias() += ub * w.asDiagonal() * ub.adjoint();
    }
    return linalg::hermitian_part(a) / noise_power;
}

// Top-K eigenvectors of the statistical aggregate A(psi).
inline StatSubspace optimal_subspace_stat(const std::vector<rvec> &psi, const ChannelStats &stats, double noise_power,
                                          std::size_t k, const rvec &attenuation = {})
{
    const Eigen::Index m = stats.num_elements();
    require(k >= 1 && static_cast<Eigen::Index>(k) <= m, "optimal_subspace_stat: K must be in [1, M]");
    const cmat a = statistical_aggregate(psi, stats, noise_power, attenuation);
    StatSubspace out;
    if (a.norm() == 0.0)
    {
        out.basis = cmat::Identity(m, static_cast<Eigen::Index>(k));
        out.degenerate = true;
        return out;
    }
    out.basis = linalg::top_eigenpairs(a, static_cast<Eigen::Index>(k)).vectors;
    return out;
}

// ---------- outer alternation ----------

struct StatAOConfig
{
    AOConfig ao;
    StatSolverConfig solver;
    double subspace_tol = 1e-6; // chordal distance between consecutive bases
    std::size_t max_subspace_iters = 20;

    void validate() const
    {
        ao.validate();
        solver.validate();
        require(subspace_tol > 0.0, "StatAOConfig: subspace_tol must be > 0");
        require(max_subspace_iters >= 1, "StatAOConfig: max_subspace_iters must be >= 1");
    }
};

struct StatSubspaceDesign
{
    cmat basis;
    PowerAllocations allocs;
    AOTrace trace; // run that produced this design
    EEResult ee;   // deterministic equivalent, before weight synthesis
    DESolution de;
    AOStarts starts;
};

inline cmat initial_statistical_basis(const ChannelStats &stats, const PowerModel &pm, std::size_t k,
                                      const rvec &attenuation)
{
    // Expected aggregate E[sum G P G^H] under uniform loading.
    const auto uni = PowerAllocations::uniform(stats, pm.max_transmit_w);
    return optimal_subspace_stat(uni.lambda, stats, pm.noise_power_w, k, attenuation).basis;
}

// Alternates loading design and subspace refinement. A subspace step is only
// accepted when it raises the deterministic-equivalent rate, so the EE trace
// never decreases.
namespace detail
{

// One statistical alternation from a given basis. Subspace steps are kept
// only while they raise the deterministic-equivalent rate.
inline StatSubspaceDesign alternate_statistical(const ChannelStats &stats, const PowerModel &pm, std::size_t strips,
                                                const StatAOConfig &cfg, const rvec &attenuation, cmat basis)
{
    const CircuitLoad load{strips, 0};
    StatSubspaceDesign out;
    out.basis = std::move(basis);
    out.allocs = PowerAllocations::uniform(stats, pm.max_transmit_w);

    double prev = 0.0;
    for (std::size_t it = 1; it <= cfg.ao.max_outer; ++it)
    {
        auto [allocs, st] = dinkelbach_allocations(out.basis, stats, pm, load, cfg.ao.dinkelbach, cfg.solver,
                                                   attenuation, out.allocs);
        out.allocs = std::move(allocs);
        out.de = deterministic_equivalent(out.allocs, out.basis, stats, pm.noise_power_w, cfg.solver.de, attenuation);

        for (std::size_t j = 0; j < cfg.max_subspace_iters; ++j)
        {
            const auto next = optimal_subspace_stat(out.de.psi, stats, pm.noise_power_w, strips, attenuation);
            if (next.degenerate)
                break;
            DESolution de = deterministic_equivalent(out.allocs, next.basis, stats, pm.noise_power_w, cfg.solver.de,
                                                     attenuation, out.de.psi);
            if (!(de.rate_de > out.de.rate_de))
                break;
            const double dist = linalg::subspace_distance(out.basis, next.basis);
            out.basis = next.basis;
            out.de = std::move(de);
            if (dist <= cfg.subspace_tol)
                break;
        }

        out.ee = EEResult::make(out.de.rate_de, allocation_power(out.allocs, pm, load), pm.bandwidth_hz);
        const double cur = out.ee.ee_bits_per_joule;
        out.trace.ee_per_iteration.push_back(cur);
        out.trace.outer_iterations = it;
        if (it > 1 && std::abs(cur - prev) <= cfg.ao.tol * std::max(std::abs(cur), 1e-300))
        {
            out.trace.converged = true;
            break;
        }
        if (it > 1 && cur == 0.0 && prev == 0.0)
        {
            out.trace.converged = true;
            break;
        }
        prev = cur;
    }
    return out;
}

} // namespace detail

// Statistical counterpart of ao_subspace_instantaneous, including the
// SE-oriented second start.
inline StatSubspaceDesign ao_subspace_statistical(const ChannelStats &stats, const PowerModel &pm, std::size_t strips,
                                                  const StatAOConfig &cfg = {}, const rvec &attenuation = {})
{
    cfg.validate();
    pm.validate(stats.num_users());
    const Eigen::Index m = stats.num_elements();
    require(strips >= 1 && m % static_cast<Eigen::Index>(strips) == 0,
            "ao_statistical: microstrip count must divide M");

    const cmat initial = initial_statistical_basis(stats, pm, strips, attenuation);
    StatSubspaceDesign best = detail::alternate_statistical(stats, pm, strips, cfg, attenuation, initial);
    AOStarts starts{best.trace};
    if (cfg.ao.se_start && !pm.is_se_oriented())
    {
        const StatSubspaceDesign se =
            detail::alternate_statistical(stats, pm.se_oriented(), strips, cfg, attenuation, initial);
        starts.push_back(se.trace);
        StatSubspaceDesign alt = detail::alternate_statistical(stats, pm, strips, cfg, attenuation, se.basis);
        starts.push_back(alt.trace);
        if (alt.ee.ee_bits_per_joule > best.ee.ee_bits_per_joule)
            best = std::move(alt);
    }
    best.starts = std::move(starts);
    return best;
}

struct StatDmaDesign
{
    WeightMatrix weights;
    PowerAllocations allocs;
    AOTrace trace;
    EEResult ee;               // deterministic equivalent on the synthesized row space
    EEResult unconstrained_ee; // deterministic equivalent on the closed-form subspace
    std::optional<MonteCarloEstimate> monte_carlo; // ergodic SE on the synthesized row space
    SynthesisResult synthesis;
    cmat basis;
};

struct MonteCarloOptions
{
    std::size_t trials = 0; // 0 disables the Monte-Carlo re-evaluation
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
};

inline StatDmaDesign finalize_dma_stat(const ChannelStats &stats, const PowerModel &pm,
                                       const StatSubspaceDesign &design, const FeasibleSet &set,
                                       const StatAOConfig &cfg = {}, const rvec &attenuation = {},
                                       const MonteCarloOptions &mc = {})
{
    StatDmaDesign out;
    out.allocs = design.allocs;
    out.trace = design.trace;
    out.unconstrained_ee = design.ee;
    out.synthesis = synthesize_weights(design.basis, set, cfg.ao.am);
    out.weights = out.synthesis.weights;
    out.basis = effective_row_space(out.weights);
    const auto k = static_cast<std::size_t>(design.basis.cols());
    const double power = allocation_power(out.allocs, pm, CircuitLoad{k, 0});
    double se = 0.0;
    if (out.basis.cols() > 0)
        se = deterministic_equivalent(out.allocs, out.basis, stats, pm.noise_power_w, cfg.solver.de, attenuation)
                 .rate_de;
    out.ee = EEResult::make(se, power, pm.bandwidth_hz);
    if (mc.trials > 0 && out.basis.cols() > 0)
        out.monte_carlo = ergodic_se_monte_carlo(stats, out.basis, allocations_to_covariances(out.allocs, stats),
                                                 pm.noise_power_w, mc.trials, mc.seed, attenuation, mc.jobs);
    return out;
}

inline StatDmaDesign ao_statistical(const ChannelStats &stats, const PowerModel &pm, const FeasibleSet &set,
                                    std::size_t strips, const StatAOConfig &cfg = {}, const rvec &attenuation = {},
                                    const MonteCarloOptions &mc = {})
{
    return finalize_dma_stat(stats, pm, ao_subspace_statistical(stats, pm, strips, cfg, attenuation), set, cfg,
                             attenuation, mc);
}

// ---------- baselines ----------

struct StatBaselineDesign
{
    PowerAllocations allocs;
    EEResult ee; // deterministic equivalent
    cmat combiner;
    std::size_t iterations = 0;
    bool converged = false;
};

inline StatBaselineDesign fully_digital_design_stat(const ChannelStats &stats, const PowerModel &pm,
                                                    const StatAOConfig &cfg = {}, const rvec &attenuation = {})
{
    const Eigen::Index m = stats.num_elements();
    const CircuitLoad load{static_cast<std::size_t>(m), 0};
    StatBaselineDesign out;
    out.combiner = cmat::Identity(m, m);
    auto [allocs, st] = dinkelbach_allocations(out.combiner, stats, pm, load, cfg.ao.dinkelbach, cfg.solver,
                                               attenuation, PowerAllocations::uniform(stats, pm.max_transmit_w));
    out.allocs = std::move(allocs);
    out.ee = EEResult::make(st.rate, st.power, pm.bandwidth_hz);
    out.iterations = st.iterations;
    out.converged = st.converged;
    return out;
}

// Phase-extraction hybrid combiner driven by the statistical aggregate,
// alternated with the loading design; the best iterate is kept.
inline StatBaselineDesign hybrid_design_stat(const ChannelStats &stats, const PowerModel &pm, std::size_t k,
                                             const StatAOConfig &cfg = {}, const rvec &attenuation = {})
{
    cfg.validate();
    const auto m = static_cast<std::size_t>(stats.num_elements());
    const CircuitLoad load{k, k * m};
    HybridCombiner hc = hybrid_from_basis(initial_statistical_basis(stats, pm, k, attenuation));
    PowerAllocations allocs = PowerAllocations::uniform(stats, pm.max_transmit_w);

    StatBaselineDesign best;
    best.ee.ee_bits_per_joule = -1.0;
    for (std::size_t it = 1; it <= cfg.ao.max_outer; ++it)
    {
        const cmat w = hc.combined();
        auto [next, st] =
            dinkelbach_allocations(w, stats, pm, load, cfg.ao.dinkelbach, cfg.solver, attenuation, allocs);
        allocs = std::move(next);
        const EEResult ee = EEResult::make(st.rate, st.power, pm.bandwidth_hz);
        const double before = best.ee.ee_bits_per_joule;
        if (ee.ee_bits_per_joule > best.ee.ee_bits_per_joule)
        {
            best.allocs = allocs;
            best.ee = ee;
            best.combiner = w;
        }
        best.iterations = it;
        // Phase extraction is not monotone; stop once the best iterate stalls.
        if (it > 1 && best.ee.ee_bits_per_joule - before <= cfg.ao.tol * std::max(best.ee.ee_bits_per_joule, 1e-300))
        {
            best.converged = true;
            break;
        }
        const DESolution de = deterministic_equivalent(allocs, w, stats, pm.noise_power_w, cfg.solver.de, attenuation);
        const auto sub = optimal_subspace_stat(de.psi, stats, pm.noise_power_w, k, attenuation);
        if (sub.degenerate)
        {
            best.converged = true;
            break;
        }
        hc = hybrid_from_basis(sub.basis);
    }
    return best;
}

} // namespace dmaee

#endif
