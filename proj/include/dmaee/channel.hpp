// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef DMAEE_CHANNEL_HPP
#define DMAEE_CHANNEL_HPP

#include "common.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <numeric>
#include <span>

// Jointly-correlated Rayleigh channels G_u = U_u G~_u V_u^H with independent
// beam-domain entries of variance Omega_u(m, n).
namespace dmaee
{

struct ChannelDims
{
    std::size_t num_users = 1;
    std::vector<std::size_t> antennas_per_user{1};
    std::size_t microstrips = 1;
    std::size_t elements_per_strip = 1;

    static ChannelDims uniform(std::size_t users, std::size_t antennas, std::size_t strips,
                               std::size_t elements)
    {
        return {users, std::vector<std::size_t>(users, antennas), strips, elements};
    }

    std::size_t total_elements() const { return microstrips * elements_per_strip; }

    void validate() const
    {
        require(num_users >= 1, "ChannelDims: need at least one user");
        require(antennas_per_user.size() == num_users, "ChannelDims: antennas_per_user size != num_users");
        for (auto n : antennas_per_user)
            require(n >= 1, "ChannelDims: every user needs at least one antenna");
        require(microstrips >= 1, "ChannelDims: need at least one microstrip");
        require(elements_per_strip >= 1, "ChannelDims: need at least one element per strip");
    }
};

struct UserStatistics
{
    cmat receive_basis;  // U_u, M x M unitary
    cmat transmit_basis; // V_u, N_u x N_u unitary
    rmat coupling;       // Omega_u, M x N_u, nonnegative
};

struct ChannelStats
{
    std::vector<UserStatistics> users;
    double large_scale_gain = 1.0;

    std::size_t num_users() const { return users.size(); }
    Eigen::Index num_elements() const { return users.empty() ? 0 : users.front().receive_basis.rows(); }

    // Shape and sign checks. The strict form also rejects all-zero coupling.
    void validate(bool strict = true) const
    {
        require(!users.empty(), "ChannelStats: no users");
        const Eigen::Index m = num_elements();
        for (const auto &u : users)
        {
            const Eigen::Index n = u.transmit_basis.rows();
            require(u.receive_basis.rows() == m && u.receive_basis.cols() == m, "ChannelStats: U_u must be M x M");
            require(u.transmit_basis.cols() == n, "ChannelStats: V_u must be square");
            require(u.coupling.rows() == m && u.coupling.cols() == n, "ChannelStats: Omega_u must be M x N_u");
            require((u.coupling.array() >= 0.0).all(), "ChannelStats: Omega_u has negative entries");
            require(!strict || u.coupling.sum() > 0.0, "ChannelStats: Omega_u is identically zero");
        }
    }
};

// Per-user M x N_u instantaneous channel matrices.
struct ChannelRealization
{
    std::vector<cmat> users;

    std::size_t num_users() const { return users.size(); }
    Eigen::Index num_elements() const { return users.empty() ? 0 : users.front().rows(); }
};

// Waveguide loss along each microstrip: element l (1-based) of every strip is
// scaled by exp(-alpha * l). Disabled means unit gains.
struct AttenuationProfile
{
    double alpha = 0.0;
    bool enabled = false;

    void validate() const { require(alpha >= 0.0 && std::isfinite(alpha), "AttenuationProfile: alpha must be >= 0"); }

    rvec gains(std::size_t strips, std::size_t elements) const
    {
        rvec a = rvec::Ones(static_cast<Eigen::Index>(strips * elements));
        if (!enabled)
            return a;
        for (std::size_t k = 0; k < strips; ++k)
            for (std::size_t l = 0; l < elements; ++l)
                a(static_cast<Eigen::Index>(k * elements + l)) = std::exp(-alpha * static_cast<double>(l + 1));
        return a;
    }

    // Per-strip loss in dB at the far end of a strip of the given length.
    double end_loss_db(std::size_t elements) const
    {
        return enabled ? 20.0 * alpha * static_cast<double>(elements) / std::log(10.0) : 0.0;
    }
};

namespace detail
{
inline constexpr std::uint64_t stats_stream = 0x5747'1a75ULL;
inline constexpr std::uint64_t sample_stream = 0x5a3b'1e00ULL;
} // namespace detail

// Seeded synthetic statistics. Depends on (M, N_u, U) only, so dimensions that
// share M but split it differently into strips see the same channel.
inline ChannelStats generate_channel_stats(const ChannelDims &dims, double sparsity, double decay,
                                           std::uint64_t seed, double large_scale_gain = 1.0)
{
    dims.validate();
    require(sparsity > 0.0 && sparsity <= 1.0, "generate_channel_stats: sparsity must be in (0, 1]");
    require(decay > 0.0 && std::isfinite(decay), "generate_channel_stats: decay must be > 0");
    require(large_scale_gain > 0.0 && std::isfinite(large_scale_gain),
            "generate_channel_stats: large_scale_gain must be > 0");

    auto rng = make_rng(seed, detail::stats_stream);
    const auto m = static_cast<Eigen::Index>(dims.total_elements());

    ChannelStats stats;
    stats.large_scale_gain = large_scale_gain;
    for (std::size_t u = 0; u < dims.num_users; ++u)
    {
        const auto n = static_cast<Eigen::Index>(dims.antennas_per_user[u]);
        UserStatistics us;
        us.receive_basis = linalg::random_unitary(m, rng);
        us.transmit_basis = linalg::random_unitary(n, rng);

        const std::size_t total = static_cast<std::size_t>(m * n);
        const auto selected = static_cast<std::size_t>(std::ceil(sparsity * static_cast<double>(total) - 1e-12));
        std::vector<std::size_t> order(total);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        us.coupling = rmat::Zero(m, n);
        for (std::size_t i = 0; i < selected; ++i)
        {
            const std::size_t idx = order[i];
            us.coupling(static_cast<Eigen::Index>(idx % static_cast<std::size_t>(m)),
                        static_cast<Eigen::Index>(idx / static_cast<std::size_t>(m))) =
                std::exp(-decay * static_cast<double>(i));
        }
        us.coupling *= static_cast<double>(total) * large_scale_gain / us.coupling.sum();
        stats.users.push_back(std::move(us));
    }
    return stats;
}

// Receive-side steering Diag(a) U_u used by every statistical computation.
inline cmat effective_receive_basis(const UserStatistics &us, const rvec &attenuation)
{
    if (attenuation.size() == 0)
        return us.receive_basis;
    require(attenuation.size() == us.receive_basis.rows(), "effective_receive_basis: attenuation length != M");
    return attenuation.asDiagonal() * us.receive_basis;
}

inline ChannelRealization sample_channel_realization(const ChannelStats &stats, const rvec &attenuation,
                                                     std::uint64_t seed)
{
    stats.validate(false);
    auto rng = make_rng(seed, detail::sample_stream);
    ChannelRealization out;
    out.users.reserve(stats.num_users());
    for (const auto &us : stats.users)
    {
        const Eigen::Index m = us.coupling.rows(), n = us.coupling.cols();
        cmat beam(m, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < m; ++i)
                beam(i, j) = std::sqrt(us.coupling(i, j)) * complex_gaussian(rng);
        out.users.push_back(effective_receive_basis(us, attenuation) * beam * us.transmit_basis.adjoint());
    }
    return out;
}

// Attenuation gains are laid out over the (strips x elements) aperture; the
// caller's split of M determines the per-element loss.
inline ChannelRealization sample_channel_realization(const ChannelStats &stats, const AttenuationProfile &profile,
                                                     std::size_t strips, std::size_t elements, std::uint64_t seed)
{
    profile.validate();
    require(static_cast<Eigen::Index>(strips * elements) == stats.num_elements(),
            "sample_channel_realization: strips * elements != M");
    return sample_channel_realization(stats, profile.gains(strips, elements), seed);
}

// Unattenuated sampling.
inline ChannelRealization sample_channel_realization(const ChannelStats &stats, std::uint64_t seed)
{
    return sample_channel_realization(stats, rvec{}, seed);
}

// Empirical beam-domain coupling: mean over samples of |U_u^H G_u V_u|^2.
inline std::vector<rmat> estimate_coupling(std::span<const ChannelRealization> samples, const ChannelStats &stats)
{
    require(!samples.empty(), "estimate_coupling: need at least one sample");
    stats.validate(false);
    std::vector<rmat> acc;
    for (const auto &us : stats.users)
        acc.push_back(rmat::Zero(us.coupling.rows(), us.coupling.cols()));
    for (const auto &s : samples)
    {
        require(s.num_users() == stats.num_users(), "estimate_coupling: user count mismatch");
        for (std::size_t u = 0; u < s.num_users(); ++u)
        {
            const auto &us = stats.users[u];
            require(s.users[u].rows() == us.coupling.rows() && s.users[u].cols() == us.coupling.cols(),
                    "estimate_coupling: sample dimensions do not match statistics");
            const cmat beam = us.receive_basis.adjoint() * s.users[u] * us.transmit_basis;
            acc[u] += beam.cwiseAbs2();
        }
    }
    for (auto &a : acc)
        a /= static_cast<double>(samples.size());
    return acc;
}

} // namespace dmaee

#endif
