// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef DMAEE_COMMON_HPP
#define DMAEE_COMMON_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmaee
{

using cplx = std::complex<double>;
using cmat = Eigen::MatrixXcd;
using cvec = Eigen::VectorXcd;
using rmat = Eigen::MatrixXd;
using rvec = Eigen::VectorXd;

inline constexpr double ln2 = std::numbers::ln2;

// Raised for contract violations on inputs (dimensions, ranges, PSD-ness).
class ValidationError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

// Raised when an iterative procedure fails to reach its tolerance.
class ConvergenceError : public std::runtime_error
{
public:
    ConvergenceError(const std::string &what, double residual, std::size_t iterations)
        : std::runtime_error(what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    std::size_t iterations() const noexcept { return iterations_; }

private:
    double residual_;
    std::size_t iterations_;
};

inline void require(bool ok, const std::string &message)
{
    if (!ok)
        throw ValidationError(message);
}

// ---------- units (only used at config boundaries) ----------

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

// ---------- random streams ----------

// Independent generator for (seed, stream). Streams keep e.g. the statistics
// generator and the realization sampler decorrelated under the same seed.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

// Circularly-symmetric CN(0, 1) draw.
template <class Rng>
cplx complex_gaussian(Rng &rng)
{
    std::normal_distribution<double> n(0.0, std::sqrt(0.5));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

template <class Rng>
cmat complex_gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng &rng)
{
    cmat out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
            out(i, j) = complex_gaussian(rng);
    return out;
}

inline bool all_finite(const cmat &m) { return m.allFinite(); }

} // namespace dmaee

#endif
