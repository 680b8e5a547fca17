// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef DMAEE_METRICS_HPP
#define DMAEE_METRICS_HPP

#include "channel.hpp"
#include "common.hpp"
#include "dma.hpp"
#include "linalg.hpp"
#include "parallel.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <limits>

namespace dmaee
{

// All quantities in SI units (Watts, Hz). dBm only appears in configuration.
struct PowerModel
{
    std::vector<double> amplifier_inefficiency; // xi_u = 1 / rho_u; zero gives the SE-oriented objective
    std::vector<double> static_user_w;          // W_c,u
    double static_bs_w = 10.0;                  // W_BS
    double rf_chain_w = 1.0;                    // W_S
    double phase_shifter_w = 0.03;              // W_p
    double max_transmit_w = 1.0;                // P_max
    double noise_power_w = 1e-12;               // sigma^2
    double bandwidth_hz = 10e6;                 // B

    // Reference scenario: rho = 0.3, W_c,u = 20 dBm, W_BS = 40 dBm, W_S = 30 dBm,
    // W_p = 30 mW, sigma^2 = -96 dBm, B = 10 MHz.
    static PowerModel reference(std::size_t users, double max_transmit_dbm = 30.0)
    {
        PowerModel pm;
        pm.amplifier_inefficiency.assign(users, 1.0 / 0.3);
        pm.static_user_w.assign(users, dbm_to_watts(20.0));
        pm.static_bs_w = dbm_to_watts(40.0);
        pm.rf_chain_w = dbm_to_watts(30.0);
        pm.phase_shifter_w = 0.03;
        pm.max_transmit_w = dbm_to_watts(max_transmit_dbm);
        pm.noise_power_w = dbm_to_watts(-96.0);
        pm.bandwidth_hz = 10e6;
        return pm;
    }

    std::size_t num_users() const { return static_user_w.size(); }

    void validate(std::size_t users) const
    {
        require(amplifier_inefficiency.size() == users && static_user_w.size() == users,
                "PowerModel: per-user vectors must have one entry per user");
        for (double x : amplifier_inefficiency)
            require(x >= 0.0 && std::isfinite(x), "PowerModel: amplifier inefficiency must be >= 0");
        for (double x : static_user_w)
            require(x > 0.0, "PowerModel: static user power must be > 0");
        require(static_bs_w > 0.0 && rf_chain_w > 0.0, "PowerModel: W_BS and W_S must be > 0");
        require(phase_shifter_w >= 0.0, "PowerModel: W_p must be >= 0");
        require(max_transmit_w > 0.0, "PowerModel: P_max must be > 0");
        require(noise_power_w > 0.0 && bandwidth_hz > 0.0, "PowerModel: sigma^2 and B must be > 0");
    }

    // Copy with xi_u = 0: the denominator becomes constant and EE maximization
    // reduces to SE maximization.
    PowerModel se_oriented() const
    {
        PowerModel pm = *this;
        std::fill(pm.amplifier_inefficiency.begin(), pm.amplifier_inefficiency.end(), 0.0);
        return pm;
    }

    bool is_se_oriented() const
    {
        return std::all_of(amplifier_inefficiency.begin(), amplifier_inefficiency.end(),
                           [](double x) { return x == 0.0; });
    }
};

// Hardware that scales the static part of the power budget.
struct CircuitLoad
{
    std::size_t rf_chains = 1;
    std::size_t phase_shifters = 0;
};

inline double static_power(const PowerModel &pm, const CircuitLoad &load)
{
    double w = pm.static_bs_w + static_cast<double>(load.rf_chains) * pm.rf_chain_w +
               static_cast<double>(load.phase_shifters) * pm.phase_shifter_w;
    for (double wc : pm.static_user_w)
        w += wc;
    return w;
}

// Per-user N_u x N_u transmit covariances P_u.
using TransmitCovariances = std::vector<cmat>;

inline TransmitCovariances zero_covariances(const ChannelRealization &ch)
{
    TransmitCovariances covs;
    for (const auto &g : ch.users)
        covs.push_back(cmat::Zero(g.cols(), g.cols()));
    return covs;
}

inline void validate_covariances(const TransmitCovariances &covs, const ChannelRealization &ch,
                                 double max_trace = std::numeric_limits<double>::infinity())
{
    require(covs.size() == ch.num_users(), "TransmitCovariances: one covariance per user required");
    for (std::size_t u = 0; u < covs.size(); ++u)
    {
        const cmat &p = covs[u];
        require(p.rows() == ch.users[u].cols() && p.cols() == p.rows(), "TransmitCovariances: P_u must be N_u x N_u");
        require(p.allFinite(), "TransmitCovariances: non-finite entries");
        const double scale = std::max(1.0, p.norm());
        require((p - p.adjoint()).norm() <= 1e-10 * scale, "TransmitCovariances: P_u is not Hermitian");
        Eigen::SelfAdjointEigenSolver<cmat> es(linalg::hermitian_part(p), Eigen::EigenvaluesOnly);
        require(es.eigenvalues().minCoeff() >= -1e-10 * scale, "TransmitCovariances: P_u is not PSD");
        require(p.trace().real() <= max_trace + 1e-9, "TransmitCovariances: trace exceeds P_max");
    }
}

struct EEResult
{
    double se_bits_per_s_per_hz = 0.0;
    double power_watts = 0.0;
    double ee_bits_per_joule = 0.0;

    static EEResult make(double se, double power, double bandwidth)
    {
        require(power > 0.0, "EEResult: power must be > 0");
        return {se, power, bandwidth * se / power};
    }
};

// (1/sigma^2) sum_u G_u P_u G_u^H, the M x M received signal covariance.
inline cmat aggregate_channel(const ChannelRealization &ch, const TransmitCovariances &covs, double noise_power)
{
    const Eigen::Index m = ch.num_elements();
    cmat g = cmat::Zero(m, m);
    for (std::size_t u = 0; u < ch.num_users(); ++u)
        g.noalias() += ch.users[u] * covs[u] * ch.users[u].adjoint();
    return linalg::hermitian_part(g) / noise_power;
}

// log2 det(I_K + V^H Gbar V) for an orthonormal combining basis V (M x K).
inline double instantaneous_se(const cmat &basis, const ChannelRealization &ch, const TransmitCovariances &covs,
                               double noise_power)
{
    require(ch.num_users() >= 1, "instantaneous_se: empty channel");
    require(basis.rows() == ch.num_elements(), "instantaneous_se: basis rows != M");
    validate_covariances(covs, ch);
    cmat s = cmat::Zero(basis.cols(), basis.cols());
    for (std::size_t u = 0; u < ch.num_users(); ++u)
    {
        const cmat h = basis.adjoint() * ch.users[u];
        s.noalias() += h * covs[u] * h.adjoint();
    }
    return std::max(0.0, linalg::log2det_identity_plus(s / noise_power));
}

// Same rate computed directly from a dense (not necessarily orthonormal) Q:
// log2 det(I_K + (1/sigma^2) sum Q G P G^H Q^H (Q Q^H)^{-1}).
inline double se_from_weights(const cmat &q, const ChannelRealization &ch, const TransmitCovariances &covs,
                              double noise_power)
{
    require(q.cols() == ch.num_elements(), "se_from_weights: Q columns != M");
    validate_covariances(covs, ch);
    const Eigen::Index k = q.rows();
    cmat num = cmat::Zero(k, k);
    for (std::size_t u = 0; u < ch.num_users(); ++u)
    {
        const cmat h = q * ch.users[u];
        num.noalias() += h * covs[u] * h.adjoint();
    }
    const cmat gram = q * q.adjoint();
    Eigen::PartialPivLU<cmat> lu(gram);
    const cmat a = cmat::Identity(k, k) + (num / noise_power) * lu.inverse();
    Eigen::PartialPivLU<cmat> lu_a(a);
    cplx logdet{0.0, 0.0};
    const cmat &lua = lu_a.matrixLU();
    for (Eigen::Index i = 0; i < k; ++i)
        logdet += std::log(lua(i, i));
    return logdet.real() / ln2;
}

inline double transmit_power(const TransmitCovariances &covs, const PowerModel &pm)
{
    double w = 0.0;
    for (std::size_t u = 0; u < covs.size(); ++u)
        w += pm.amplifier_inefficiency[u] * covs[u].trace().real();
    return w;
}

inline double total_power(const TransmitCovariances &covs, const PowerModel &pm, std::size_t rf_chains,
                          std::size_t phase_shifters = 0)
{
    require(rf_chains >= 1, "total_power: need at least one RF chain");
    require(covs.size() == pm.num_users(), "total_power: user count mismatch");
    return transmit_power(covs, pm) + static_power(pm, {rf_chains, phase_shifters});
}

inline EEResult dma_ee(const cmat &basis, const ChannelRealization &ch, const TransmitCovariances &covs,
                       const PowerModel &pm, std::size_t microstrips)
{
    const double se = instantaneous_se(basis, ch, covs, pm.noise_power_w);
    return EEResult::make(se, total_power(covs, pm, microstrips), pm.bandwidth_hz);
}

inline EEResult fully_digital_ee(const ChannelRealization &ch, const TransmitCovariances &covs, const PowerModel &pm)
{
    const Eigen::Index m = ch.num_elements();
    validate_covariances(covs, ch);
    const double se = std::max(0.0, linalg::log2det_identity_plus(aggregate_channel(ch, covs, pm.noise_power_w)));
    return EEResult::make(se, total_power(covs, pm, static_cast<std::size_t>(m)), pm.bandwidth_hz);
}

inline void check_unit_modulus(const cmat &w_rf, double tol = 1e-9)
{
    for (Eigen::Index i = 0; i < w_rf.size(); ++i)
        require(std::abs(std::abs(w_rf(i)) - 1.0) <= tol, "hybrid combiner: RF entries must be unit modulus");
}

// Hybrid A/D rate log2 det(I + R_n^{-1} W^H S W), R_n = W^H W, for a full
// column rank combiner W (M x K). K RF chains and K M phase shifters.
inline EEResult hybrid_ad_ee(const ChannelRealization &ch, const TransmitCovariances &covs, const PowerModel &pm,
                             const cmat &combiner)
{
    require(combiner.rows() == ch.num_elements(), "hybrid_ad_ee: combiner rows != M");
    validate_covariances(covs, ch);
    const Eigen::Index k = combiner.cols();
    const cmat rn = combiner.adjoint() * combiner;
    Eigen::LLT<cmat> llt(rn);
    Eigen::JacobiSVD<cmat> svd(combiner);
    const rvec sv = svd.singularValues();
    if (llt.info() != Eigen::Success || !(sv(k - 1) > 1e-10 * std::max(1.0, sv(0))))
        throw ValidationError("hybrid_ad_ee: combiner is rank deficient");
    const cmat s = combiner.adjoint() * aggregate_channel(ch, covs, pm.noise_power_w) * combiner;
    // L^{-1} S L^{-H} has the same determinant as R_n^{-1} S and stays Hermitian.
    const cmat x = llt.matrixL().solve(s);
    const cmat white = llt.matrixL().solve(x.adjoint()).adjoint();
    const double se = std::max(0.0, linalg::log2det_identity_plus(white));
    const auto kk = static_cast<std::size_t>(k);
    const auto mm = static_cast<std::size_t>(ch.num_elements());
    return EEResult::make(se, total_power(covs, pm, kk, kk * mm), pm.bandwidth_hz);
}

inline EEResult hybrid_ad_ee(const ChannelRealization &ch, const TransmitCovariances &covs, const PowerModel &pm,
                             const cmat &w_rf, const cmat &w_bb)
{
    check_unit_modulus(w_rf);
    return hybrid_ad_ee(ch, covs, pm, w_rf * w_bb);
}

struct HybridCombiner
{
    cmat rf;       // M x K, unit-modulus entries
    cmat baseband; // K x K
    cmat combined() const { return rf * baseband; }
};

// Phase extraction from a target basis plus baseband orthonormalization.
inline HybridCombiner hybrid_from_basis(const cmat &target)
{
    HybridCombiner hc;
    hc.rf = target.unaryExpr([](const cplx &z) {
        const double a = std::abs(z);
        return a > 0.0 ? cplx(z / a) : cplx{1.0, 0.0};
    });
    hc.baseband = linalg::inverse_sqrt_psd(hc.rf.adjoint() * hc.rf);
    return hc;
}

// Heuristic hybrid design: phases of the top-K eigenvectors of sum G P G^H.
inline HybridCombiner design_hybrid_combiner(const ChannelRealization &ch, const TransmitCovariances &covs,
                                             std::size_t k)
{
    require(k >= 1 && static_cast<Eigen::Index>(k) <= ch.num_elements(), "design_hybrid_combiner: K out of range");
    validate_covariances(covs, ch);
    const cmat g = aggregate_channel(ch, covs, 1.0);
    return hybrid_from_basis(linalg::top_eigenpairs(g, static_cast<Eigen::Index>(k)).vectors);
}

struct MonteCarloEstimate
{
    double mean = 0.0;
    double stderr_ = 0.0; // +inf when fewer than two trials
};

// Mean SE over `trials` independent realizations; trial t uses seed + t, and
// the reduction runs in trial order so the result is schedule independent.
inline MonteCarloEstimate ergodic_se_monte_carlo(const ChannelStats &stats, const cmat &basis,
                                                 const TransmitCovariances &covs, double noise_power,
                                                 std::size_t trials, std::uint64_t seed, const rvec &attenuation = {},
                                                 std::size_t jobs = 1)
{
    require(trials >= 1, "ergodic_se_monte_carlo: need at least one trial");
    std::vector<double> samples(trials);
    parallel_for(trials, jobs, [&](std::size_t t) {
        const auto ch = sample_channel_realization(stats, attenuation, seed + t);
        samples[t] = instantaneous_se(basis, ch, covs, noise_power);
    });
    double sum = 0.0;
    for (double s : samples)
        sum += s;
    MonteCarloEstimate est;
    est.mean = sum / static_cast<double>(trials);
    if (trials < 2)
    {
        est.stderr_ = std::numeric_limits<double>::infinity();
        return est;
    }
    double ss = 0.0;
    for (double s : samples)
        ss += (s - est.mean) * (s - est.mean);
    est.stderr_ = std::sqrt(ss / static_cast<double>(trials - 1) / static_cast<double>(trials));
    return est;
}

} // namespace dmaee

#endif
