// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef DMAEE_INSTANTANEOUS_HPP
#define DMAEE_INSTANTANEOUS_HPP

#include "channel.hpp"
#include "common.hpp"
#include "dma.hpp"
#include "linalg.hpp"
#include "metrics.hpp"

#include <optional>

// EE maximization with instantaneous CSI: Dinkelbach over the transmit
// covariances, closed-form combining subspace, and the outer alternation.
namespace dmaee
{

struct SolverConfig
{
    double kkt_tol = 1e-8;        // natural KKT residual, Watts
    double bisection_tol = 1e-14; // relative width of the water-level bracket
    std::size_t max_inner_iters = 5000;

    void validate() const
    {
        require(kkt_tol > 0.0, "SolverConfig: kkt_tol must be > 0");
        require(bisection_tol > 0.0, "SolverConfig: bisection_tol must be > 0");
        require(max_inner_iters >= 1, "SolverConfig: max_inner_iters must be >= 1");
    }
};

struct DinkelbachConfig
{
    double tol = 1e-6; // |eta_l - eta_{l-1}|, bits/s/Hz per Watt
    std::size_t max_iters = 100;

    void validate() const
    {
        require(tol > 0.0, "DinkelbachConfig: tol must be > 0");
        require(max_iters >= 1, "DinkelbachConfig: max_iters must be >= 1");
    }
};

struct AOConfig
{
    double tol = 1e-4; // relative change of the outer EE
    std::size_t max_outer = 50;
    DinkelbachConfig dinkelbach;
    SolverConfig inner;
    AMConfig am{.delta = 0.5, .tol = 1e-6, .max_iters = 500}; // tiny floors let the diagonal fit collapse to delta
    // Base step of the safeguarded extrapolation of the received aggregate
    // between subspace updates; 0 gives plain alternation.
    double extrapolation = 1.0;
    // EE-oriented designs also restart from the SE-oriented solution and keep
    // the better of the two, so they never fall below it.
    bool se_start = true;

    void validate() const
    {
        require(tol > 0.0, "AOConfig: tol must be > 0");
        require(max_outer >= 1, "AOConfig: max_outer must be >= 1");
        require(extrapolation >= 0.0 && std::isfinite(extrapolation), "AOConfig: extrapolation must be >= 0");
        dinkelbach.validate();
        inner.validate();
        am.validate();
    }
};

// eta is the ratio R / W (bits/s/Hz per Watt); multiply by B for bits/Joule.
struct DinkelbachState
{
    double eta = 0.0;
    std::vector<double> objective_trace; // eta after every update
    std::size_t iterations = 0;
    bool converged = false;
    double rate = 0.0;
    double power = 0.0;
    double root_residual = 0.0; // R - eta_prev W at exit
};

struct AOTrace
{
    std::vector<double> ee_per_iteration; // bits/Joule, before weight synthesis
    bool converged = false;
    std::size_t outer_iterations = 0;
};

// Every alternation run behind a design: the primary start, then (with
// se_start) the SE-oriented run and the EE run started from its subspace.
// SE-oriented traces are in that run's own objective.
using AOStarts = std::vector<AOTrace>;

// Carries the iterate that was current when the inner solver gave up.
class InnerSolverError : public ConvergenceError
{
public:
    InnerSolverError(const std::string &what, double residual, std::size_t iterations, TransmitCovariances last)
        : ConvergenceError(what, residual, iterations), last_(std::move(last)) {}
    const TransmitCovariances &last_iterate() const noexcept { return last_; }

private:
    TransmitCovariances last_;
};

// ---------- water-filling ----------

// Maximizes sum_i log2(1 + s_i p_i) - cost * sum_i p_i over p >= 0,
// sum p <= cap. Active modes share the level w: p_i = max(0, w - 1/s_i).
// The unconstrained level is 1 / (cost ln 2); when that overshoots the cap
// the level is located by bisection and then solved exactly on the active set.
inline rvec water_fill(const rvec &gains, double cost, double cap, double bisection_tol = 1e-14)
{
    require(cost >= 0.0 && cap >= 0.0, "water_fill: cost and cap must be >= 0");
    const Eigen::Index n = gains.size();
    rvec p = rvec::Zero(n);
    double smax = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        smax = std::max(smax, gains(i));
    if (!(smax > 0.0) || cap == 0.0)
        return p;

    const auto fill = [&](double w) {
        rvec out = rvec::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i)
            if (gains(i) > 0.0)
                out(i) = std::max(0.0, w - 1.0 / gains(i));
        return out;
    };

    if (cost > 0.0)
    {
        const rvec free = fill(1.0 / (cost * ln2));
        if (free.sum() <= cap)
            return free;
    }

    double lo = 0.0, hi = 2.0 * (cap + 1.0 / smax);
    if (!(fill(hi).sum() >= cap))
        throw ConvergenceError("water_fill: water level bracket does not contain the budget", fill(hi).sum() - cap, 0);
    std::size_t steps = 0;
    while (hi - lo > bisection_tol * hi && steps < 2000)
    {
        const double mid = 0.5 * (lo + hi);
        (fill(mid).sum() < cap ? lo : hi) = mid;
        ++steps;
    }
    // Exact level on the active set found by bisection.
    double inv_sum = 0.0;
    std::size_t active = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (gains(i) > 0.0 && hi > 1.0 / gains(i))
        {
            inv_sum += 1.0 / gains(i);
            ++active;
        }
    if (active == 0)
        return p;
    const double w = (cap + inv_sum) / static_cast<double>(active);
    p = fill(w);
    const double total = p.sum();
    if (total > cap)
        p *= cap / total;
    return p;
}

// ---------- closed-form subspace ----------

// Top-K eigenvectors of (1/sigma^2) sum_u G_u P_u G_u^H.
inline cmat optimal_subspace(const ChannelRealization &ch, const TransmitCovariances &covs, double noise_power,
                             std::size_t k)
{
    require(k >= 1 && static_cast<Eigen::Index>(k) <= ch.num_elements(), "optimal_subspace: K must be in [1, M]");
    validate_covariances(covs, ch);
    return linalg::top_eigenpairs(aggregate_channel(ch, covs, noise_power), static_cast<Eigen::Index>(k)).vectors;
}

namespace detail
{

inline std::vector<cmat> project_channels(const cmat &basis, const ChannelRealization &ch)
{
    require(basis.rows() == ch.num_elements(), "basis rows != M");
    std::vector<cmat> h;
    h.reserve(ch.num_users());
    for (const auto &g : ch.users)
        h.push_back(basis.adjoint() * g);
    return h;
}

// I + (1/sigma^2) sum_{v != skip} H_v P_v H_v^H.
inline cmat received_covariance(const std::vector<cmat> &h, const TransmitCovariances &covs, double noise_power,
                                std::size_t skip = static_cast<std::size_t>(-1))
{
    const Eigen::Index k = h.front().rows();
    cmat s = cmat::Zero(k, k);
    for (std::size_t v = 0; v < h.size(); ++v)
        if (v != skip)
            s.noalias() += h[v] * covs[v] * h[v].adjoint();
    return cmat::Identity(k, k) + linalg::hermitian_part(s) / noise_power;
}

inline double inner_objective(double eta, const std::vector<cmat> &h, const TransmitCovariances &covs,
                              const PowerModel &pm)
{
    const cmat s = received_covariance(h, covs, pm.noise_power_w);
    return linalg::log2det_identity_plus(s - cmat::Identity(s.rows(), s.cols())) - eta * transmit_power(covs, pm);
}

// max_u ||P_u - Proj(P_u + grad_u)||_F, zero exactly at a KKT point.
inline double kkt_residual(double eta, const std::vector<cmat> &h, const TransmitCovariances &covs,
                           const PowerModel &pm)
{
    const cmat s = received_covariance(h, covs, pm.noise_power_w);
    Eigen::LLT<cmat> llt(s);
    double worst = 0.0;
    for (std::size_t u = 0; u < h.size(); ++u)
    {
        const Eigen::Index n = covs[u].rows();
        const cmat grad = h[u].adjoint() * llt.solve(h[u]) / (pm.noise_power_w * ln2) -
                          eta * pm.amplifier_inefficiency[u] * cmat::Identity(n, n);
        const cmat step = linalg::project_psd_trace(covs[u] + linalg::hermitian_part(grad), pm.max_transmit_w);
        worst = std::max(worst, (covs[u] - step).norm());
    }
    return worst;
}

} // namespace detail

// Maximizes log2 det(I + (1/sigma^2) sum V^H G_u P_u G_u^H V) - eta sum xi_u tr P_u
// over tr P_u <= P_max, P_u >= 0 by block-coordinate ascent over users. Each
// block update is exact water-filling on the interference-whitened channel,
// so the objective never decreases from the starting point.
inline TransmitCovariances solve_inner(double eta, const cmat &basis, const ChannelRealization &ch,
                                       const PowerModel &pm, const SolverConfig &cfg = {},
                                       const std::optional<TransmitCovariances> &warm_start = std::nullopt)
{
    require(eta >= 0.0 && std::isfinite(eta), "solve_inner: eta must be >= 0");
    cfg.validate();
    pm.validate(ch.num_users());
    const auto h = detail::project_channels(basis, ch);

    TransmitCovariances covs = warm_start ? *warm_start : zero_covariances(ch);
    validate_covariances(covs, ch, pm.max_transmit_w);

    double residual = detail::kkt_residual(eta, h, covs, pm);
    for (std::size_t it = 0; it < cfg.max_inner_iters && residual > cfg.kkt_tol; ++it)
    {
        for (std::size_t u = 0; u < h.size(); ++u)
        {
            const cmat z = detail::received_covariance(h, covs, pm.noise_power_w, u);
            Eigen::LLT<cmat> llt(z);
            const cmat t = linalg::hermitian_part(h[u].adjoint() * llt.solve(h[u])) / pm.noise_power_w;
            Eigen::SelfAdjointEigenSolver<cmat> es(t);
            const rvec s = es.eigenvalues().cwiseMax(0.0);
            const rvec p = water_fill(s, eta * pm.amplifier_inefficiency[u], pm.max_transmit_w, cfg.bisection_tol);
            covs[u] = linalg::hermitian_part(es.eigenvectors() * p.asDiagonal() * es.eigenvectors().adjoint());
        }
        residual = detail::kkt_residual(eta, h, covs, pm);
    }
    if (residual > cfg.kkt_tol)
        throw InnerSolverError("solve_inner: KKT residual above tolerance", residual, cfg.max_inner_iters,
                               std::move(covs));
    return covs;
}

// Dinkelbach iteration eta <- R(P) / W(P) with P from solve_inner(eta). The
// first ratio is that of the warm start (zero covariances by default) and each
// inner solve starts from the previous P, so the eta sequence never decreases.
inline std::pair<TransmitCovariances, DinkelbachState>
dinkelbach_covariances(const cmat &basis, const ChannelRealization &ch, const PowerModel &pm, const CircuitLoad &load,
                       const DinkelbachConfig &cfg = {}, const SolverConfig &inner = {},
                       const std::optional<TransmitCovariances> &warm_start = std::nullopt)
{
    cfg.validate();
    pm.validate(ch.num_users());
    require((basis.adjoint() * basis - cmat::Identity(basis.cols(), basis.cols())).norm() <= 1e-8,
            "dinkelbach_covariances: basis is not orthonormal");

    TransmitCovariances covs = warm_start ? *warm_start : zero_covariances(ch);
    validate_covariances(covs, ch, pm.max_transmit_w);
    const auto ratio = [&](const TransmitCovariances &p, double &r, double &w) {
        r = instantaneous_se(basis, ch, p, pm.noise_power_w);
        w = total_power(p, pm, load.rf_chains, load.phase_shifters);
        return r / w;
    };

    DinkelbachState st;
    st.eta = ratio(covs, st.rate, st.power);
    for (std::size_t it = 1; it <= cfg.max_iters; ++it)
    {
        covs = solve_inner(st.eta, basis, ch, pm, inner, covs);
        const double prev = st.eta;
        st.eta = ratio(covs, st.rate, st.power);
        st.objective_trace.push_back(st.eta);
        st.iterations = it;
        st.root_residual = st.rate - prev * st.power;
        if (std::abs(st.eta - prev) <= cfg.tol)
        {
            st.converged = true;
            break;
        }
    }
    return {std::move(covs), std::move(st)};
}

inline std::pair<TransmitCovariances, DinkelbachState>
dinkelbach_covariances(const cmat &basis, const ChannelRealization &ch, const PowerModel &pm,
                       const DinkelbachConfig &cfg = {}, const SolverConfig &inner = {})
{
    return dinkelbach_covariances(basis, ch, pm, CircuitLoad{static_cast<std::size_t>(basis.cols()), 0}, cfg, inner);
}

// ---------- outer alternation ----------

struct SubspaceDesign
{
    cmat basis; // M x K, last closed-form subspace
    TransmitCovariances covs;
    AOTrace trace; // run that produced this design
    EEResult ee;   // before weight synthesis
    AOStarts starts;
};

namespace detail
{

// One alternation of Dinkelbach covariances and the closed-form subspace from
// a given basis. A subspace step may extrapolate the received aggregate along
// its last change; the extrapolated step is kept only when it beats the
// current EE, so the trace stays monotone.
inline SubspaceDesign alternate_instantaneous(const ChannelRealization &ch, const PowerModel &pm,
                                              std::size_t strips, const AOConfig &cfg, cmat basis)
{
    const CircuitLoad load{strips, 0};
    const auto k = static_cast<Eigen::Index>(strips);
    SubspaceDesign out;
    out.basis = std::move(basis);

    auto solve = [&](const cmat &v, const std::optional<TransmitCovariances> &warm) {
        auto [covs, st] = dinkelbach_covariances(v, ch, pm, load, cfg.dinkelbach, cfg.inner, warm);
        return std::pair{std::move(covs), EEResult::make(st.rate, st.power, pm.bandwidth_hz)};
    };

    auto [covs0, ee0] = solve(out.basis, std::nullopt);
    out.covs = std::move(covs0);
    out.ee = ee0;
    out.trace.ee_per_iteration.push_back(out.ee.ee_bits_per_joule);
    out.trace.outer_iterations = 1;

    cmat g_prev;
    double beta = cfg.extrapolation;
    for (std::size_t it = 2; it <= cfg.max_outer; ++it)
    {
        // Closed-form subspace for the current covariances; kept when they are
        // all zero and the aggregate carries no direction.
        bool any = false;
        for (const auto &p : out.covs)
            any = any || p.trace().real() > 0.0;
        const double prev = out.ee.ee_bits_per_joule;
        if (any)
        {
            const cmat g = aggregate_channel(ch, out.covs, pm.noise_power_w);
            bool stepped = false;
            if (cfg.extrapolation > 0.0 && g_prev.size() != 0)
            {
                const cmat v = linalg::top_eigenpairs(linalg::hermitian_part(g + beta * (g - g_prev)), k).vectors;
                auto [covs, ee] = solve(v, out.covs);
                if (ee.ee_bits_per_joule > prev)
                {
                    out.basis = v;
                    out.covs = std::move(covs);
                    out.ee = ee;
                    beta = std::min(2.0 * beta, 8.0 * cfg.extrapolation);
                    stepped = true;
                }
                else
                    beta = std::max(0.5 * beta, cfg.extrapolation);
            }
            if (!stepped)
            {
                out.basis = linalg::top_eigenpairs(g, k).vectors;
                auto [covs, ee] = solve(out.basis, out.covs);
                out.covs = std::move(covs);
                out.ee = ee;
            }
            g_prev = g;
        }
        else
        {
            auto [covs, ee] = solve(out.basis, out.covs);
            out.covs = std::move(covs);
            out.ee = ee;
        }
        const double cur = out.ee.ee_bits_per_joule;
        out.trace.ee_per_iteration.push_back(cur);
        out.trace.outer_iterations = it;
        if (std::abs(cur - prev) <= cfg.tol * std::max(std::abs(cur), 1e-300) || (cur == 0.0 && prev == 0.0))
        {
            out.trace.converged = true;
            break;
        }
    }
    return out;
}

} // namespace detail

// Alternates Dinkelbach covariance design and the closed-form subspace,
// starting from the top-K eigenvectors of sum_u G_u G_u^H. With se_start an
// EE-oriented model also runs the SE-oriented design and an EE run from its
// subspace; the better EE is returned.
inline SubspaceDesign ao_subspace_instantaneous(const ChannelRealization &ch, const PowerModel &pm,
                                                std::size_t strips, const AOConfig &cfg = {})
{
    cfg.validate();
    pm.validate(ch.num_users());
    const Eigen::Index m = ch.num_elements();
    require(strips >= 1 && m % static_cast<Eigen::Index>(strips) == 0,
            "ao_instantaneous: microstrip count must divide M");

    TransmitCovariances unit;
    for (const auto &g : ch.users)
        unit.push_back(cmat::Identity(g.cols(), g.cols()));
    const cmat initial = optimal_subspace(ch, unit, 1.0, strips);

    SubspaceDesign best = detail::alternate_instantaneous(ch, pm, strips, cfg, initial);
    AOStarts starts{best.trace};
    if (cfg.se_start && !pm.is_se_oriented())
    {
        const SubspaceDesign se = detail::alternate_instantaneous(ch, pm.se_oriented(), strips, cfg, initial);
        starts.push_back(se.trace);
        SubspaceDesign alt = detail::alternate_instantaneous(ch, pm, strips, cfg, se.basis);
        starts.push_back(alt.trace);
        if (alt.ee.ee_bits_per_joule > best.ee.ee_bits_per_joule)
            best = std::move(alt);
    }
    best.starts = std::move(starts);
    return best;
}

struct DmaDesign
{
    WeightMatrix weights;
    TransmitCovariances covs;
    AOTrace trace;
    EEResult ee;               // with the synthesized weights
    EEResult unconstrained_ee; // with the closed-form subspace
    SynthesisResult synthesis;
    cmat basis; // orthonormal row space actually realized by the weights
};

// Synthesizes set-constrained weights for a finished subspace design and
// evaluates EE on the row space the weights actually realize.
inline DmaDesign finalize_dma(const ChannelRealization &ch, const PowerModel &pm, const SubspaceDesign &design,
                              const FeasibleSet &set, const AMConfig &am = {})
{
    DmaDesign out;
    out.covs = design.covs;
    out.trace = design.trace;
    out.unconstrained_ee = design.ee;
    out.synthesis = synthesize_weights(design.basis, set, am);
    out.weights = out.synthesis.weights;
    out.basis = effective_row_space(out.weights);
    const std::size_t k = static_cast<std::size_t>(design.basis.cols());
    const double se = out.basis.cols() > 0 ? instantaneous_se(out.basis, ch, out.covs, pm.noise_power_w) : 0.0;
    out.ee = EEResult::make(se, total_power(out.covs, pm, k), pm.bandwidth_hz);
    return out;
}

inline DmaDesign ao_instantaneous(const ChannelRealization &ch, const PowerModel &pm, const FeasibleSet &set,
                                  std::size_t strips, const AOConfig &cfg = {})
{
    return finalize_dma(ch, pm, ao_subspace_instantaneous(ch, pm, strips, cfg), set, cfg.am);
}

// ---------- baselines ----------

struct BaselineDesign
{
    TransmitCovariances covs;
    EEResult ee;
    cmat combiner; // M x K with orthonormal columns (identity for fully digital)
    std::size_t iterations = 0;
    bool converged = false;
};

// One RF chain per element; the combining basis is the identity.
inline BaselineDesign fully_digital_design(const ChannelRealization &ch, const PowerModel &pm, const AOConfig &cfg = {})
{
    const Eigen::Index m = ch.num_elements();
    BaselineDesign out;
    out.combiner = cmat::Identity(m, m);
    auto [covs, st] = dinkelbach_covariances(out.combiner, ch, pm, CircuitLoad{static_cast<std::size_t>(m), 0},
                                             cfg.dinkelbach, cfg.inner);
    out.covs = std::move(covs);
    out.ee = fully_digital_ee(ch, out.covs, pm);
    out.iterations = st.iterations;
    out.converged = st.converged;
    return out;
}

// Alternates Dinkelbach covariances and the phase-extraction combiner,
// keeping the best iterate.
inline BaselineDesign hybrid_design(const ChannelRealization &ch, const PowerModel &pm, std::size_t k,
                                    const AOConfig &cfg = {})
{
    cfg.validate();
    const auto m = static_cast<std::size_t>(ch.num_elements());
    const CircuitLoad load{k, k * m};
    TransmitCovariances unit;
    for (const auto &g : ch.users)
        unit.push_back(cmat::Identity(g.cols(), g.cols()));
    HybridCombiner hc = design_hybrid_combiner(ch, unit, k);

    BaselineDesign best;
    best.ee.ee_bits_per_joule = -1.0;
    std::optional<TransmitCovariances> warm;
    for (std::size_t it = 1; it <= cfg.max_outer; ++it)
    {
        const cmat w = hc.combined();
        auto [covs, st] = dinkelbach_covariances(w, ch, pm, load, cfg.dinkelbach, cfg.inner, warm);
        const EEResult ee = hybrid_ad_ee(ch, covs, pm, hc.rf, hc.baseband);
        const double before = best.ee.ee_bits_per_joule;
        if (ee.ee_bits_per_joule > best.ee.ee_bits_per_joule)
        {
            best.covs = covs;
            best.ee = ee;
            best.combiner = w;
        }
        best.iterations = it;
        // Phase extraction is not monotone; stop once the best iterate stalls.
        if (it > 1 && best.ee.ee_bits_per_joule - before <= cfg.tol * std::max(best.ee.ee_bits_per_joule, 1e-300))
        {
            best.converged = true;
            break;
        }
        bool any = false;
        for (const auto &p : covs)
            any = any || p.trace().real() > 0.0;
        if (!any)
        {
            best.converged = true;
            break;
        }
        hc = design_hybrid_combiner(ch, covs, k);
        warm = std::move(covs);
    }
    return best;
}

} // namespace dmaee

#endif
