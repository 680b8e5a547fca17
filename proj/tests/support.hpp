// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef DMAEE_TESTS_SUPPORT_HPP
#define DMAEE_TESTS_SUPPORT_HPP

#include <dmaee/dmaee.hpp>

#include <cmath>
#include <random>

namespace testing
{

using namespace dmaee;

inline std::mt19937_64 rng(std::uint64_t seed) { return make_rng(seed, 0x7e57'0000ULL); }

inline cmat random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed)
{
    auto g = rng(seed);
    return complex_gaussian_matrix(r, c, g);
}

// Random structured weights with every strip nonzero.
inline WeightMatrix random_weights(Eigen::Index k, Eigen::Index l, std::uint64_t seed)
{
    return WeightMatrix(random_matrix(k, l, seed));
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// Column-orthonormal basis of the row space of a full-row-rank matrix.
inline cmat row_space_of(const cmat &q)
{
    Eigen::JacobiSVD<cmat> svd(q, Eigen::ComputeThinV);
    return svd.matrixV().leftCols(q.rows());
}

// Channel with the given per-user shapes and i.i.d. CN(0, scale) entries.
inline ChannelRealization random_channel(Eigen::Index m, std::size_t users, Eigen::Index n, std::uint64_t seed,
                                         double scale = 1.0)
{
    ChannelRealization ch;
    for (std::size_t u = 0; u < users; ++u)
        ch.users.push_back(std::sqrt(scale) * random_matrix(m, n, seed * 101 + u));
    return ch;
}

// Random PSD covariance with the given trace.
inline cmat random_covariance(Eigen::Index n, double trace, std::uint64_t seed)
{
    const cmat a = random_matrix(n, n, seed);
    cmat p = a * a.adjoint();
    return p * (trace / p.trace().real());
}

} // namespace testing

#endif
