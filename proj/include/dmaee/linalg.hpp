// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef DMAEE_LINALG_HPP
#define DMAEE_LINALG_HPP

#include "common.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>

// Small dense helpers shared by all modules. Matrices here are tiny
// (at most a few hundred rows), so clarity wins over blocking tricks.
namespace dmaee::linalg
{

inline cmat hermitian_part(const cmat &a) { return 0.5 * (a + a.adjoint()); }

inline cmat identity(Eigen::Index n) { return cmat::Identity(n, n); }

// log2 det(I + S) for Hermitian PSD S, via Cholesky of I + S.
inline double log2det_identity_plus(const cmat &s)
{
    const cmat a = identity(s.rows()) + hermitian_part(s);
    Eigen::LLT<cmat> llt(a);
    if (llt.info() != Eigen::Success)
        throw ValidationError("log2det_identity_plus: I + S is not positive definite");
    const auto &l = llt.matrixLLT();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        acc += std::log(l(i, i).real());
    return 2.0 * acc / ln2;
}

// Makes the first non-negligible entry of each column real and positive.
inline void normalize_phase(cmat &v)
{
    for (Eigen::Index j = 0; j < v.cols(); ++j)
    {
        const double scale = v.col(j).cwiseAbs().maxCoeff();
        if (scale == 0.0)
            continue;
        for (Eigen::Index i = 0; i < v.rows(); ++i)
        {
            if (std::abs(v(i, j)) > 1e-12 * scale)
            {
                const cplx ph = v(i, j) / std::abs(v(i, j));
                v.col(j) *= std::conj(ph);
                break;
            }
        }
    }
}

struct EigenPairs
{
    cmat vectors; // columns sorted by descending eigenvalue
    rvec values;
};

// Top-k eigenpairs of a Hermitian matrix, descending, phase-normalized.
inline EigenPairs top_eigenpairs(const cmat &h, Eigen::Index k)
{
    require(h.rows() == h.cols(), "top_eigenpairs: matrix must be square");
    require(k >= 0 && k <= h.rows(), "top_eigenpairs: k exceeds dimension");
    Eigen::SelfAdjointEigenSolver<cmat> es(hermitian_part(h));
    if (es.info() != Eigen::Success)
        throw ValidationError("top_eigenpairs: eigendecomposition failed");
    const Eigen::Index n = h.rows();
    EigenPairs out{cmat(n, k), rvec(k)};
    for (Eigen::Index j = 0; j < k; ++j)
    {
        out.vectors.col(j) = es.eigenvectors().col(n - 1 - j);
        out.values(j) = es.eigenvalues()(n - 1 - j);
    }
    normalize_phase(out.vectors);
    return out;
}

// Orthonormal basis of the column space of a full-column-rank matrix (thin QR
// with positive real R diagonal).
inline cmat orthonormal_columns(const cmat &a)
{
    Eigen::HouseholderQR<cmat> qr(a);
    cmat q = qr.householderQ() * cmat::Identity(a.rows(), a.cols());
    const cmat r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < a.cols(); ++j)
    {
        const double mag = std::abs(r(j, j));
        if (mag > 0.0)
            q.col(j) *= r(j, j) / mag;
    }
    return q;
}

// Haar-distributed n x n unitary (QR of a Gaussian matrix with positive R diagonal).
template <class Rng>
cmat random_unitary(Eigen::Index n, Rng &rng)
{
    return orthonormal_columns(complex_gaussian_matrix(n, n, rng));
}

// Random m x k matrix with orthonormal columns.
template <class Rng>
cmat random_orthonormal(Eigen::Index m, Eigen::Index k, Rng &rng)
{
    return orthonormal_columns(complex_gaussian_matrix(m, k, rng));
}

// Chordal distance between the column spans of two orthonormal bases:
// sqrt(sum of squared sines of the principal angles) = ||(I - A A^H) B||_F.
// The residual form keeps full precision for nearly equal subspaces.
inline double subspace_distance(const cmat &a, const cmat &b)
{
    require(a.rows() == b.rows() && a.cols() == b.cols(), "subspace_distance: shape mismatch");
    return (b - a * (a.adjoint() * b)).norm();
}

// Largest principal-angle sine between two column spans: ||(I - A A^H) B||_2.
inline double max_principal_sine(const cmat &a, const cmat &b)
{
    require(a.rows() == b.rows(), "max_principal_sine: row mismatch");
    const cmat r = b - a * (a.adjoint() * b);
    if (r.cols() == 0)
        return 0.0;
    Eigen::JacobiSVD<cmat> svd(r);
    return svd.singularValues()(0);
}

// A^{-1/2} for Hermitian positive semidefinite A; eigenvalues below
// floor * max eigenvalue are treated as zero (pseudo-inverse square root).
inline cmat inverse_sqrt_psd(const cmat &a, double floor = 1e-12)
{
    Eigen::SelfAdjointEigenSolver<cmat> es(hermitian_part(a));
    const rvec ev = es.eigenvalues();
    const double top = std::max(ev.maxCoeff(), 0.0);
    rvec inv(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        inv(i) = ev(i) > floor * top && ev(i) > 0.0 ? 1.0 / std::sqrt(ev(i)) : 0.0;
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().adjoint();
}

// Euclidean projection of x onto {y >= 0, sum(y) <= cap}.
inline rvec project_capped_simplex(const rvec &x, double cap)
{
    rvec y = x.cwiseMax(0.0);
    if (y.sum() <= cap)
        return y;
    std::vector<double> s(x.data(), x.data() + x.size());
    std::sort(s.begin(), s.end(), std::greater<>());
    double cumsum = 0.0, tau = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
    {
        cumsum += s[i];
        const double t = (cumsum - cap) / static_cast<double>(i + 1);
        if (i + 1 == s.size() || s[i + 1] <= t)
        {
            tau = t;
            break;
        }
    }
    return (x.array() - tau).cwiseMax(0.0).matrix();
}

// Frobenius projection of a Hermitian matrix onto {P >= 0, tr P <= cap}.
inline cmat project_psd_trace(const cmat &x, double cap)
{
    Eigen::SelfAdjointEigenSolver<cmat> es(hermitian_part(x));
    const rvec ev = project_capped_simplex(es.eigenvalues(), cap);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

} // namespace dmaee::linalg

#endif
