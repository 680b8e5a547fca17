// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef DMAEE_DMA_HPP
#define DMAEE_DMA_HPP

#include "common.hpp"
#include "linalg.hpp"

#include <limits>
#include <span>
#include <string>
#include <variant>

namespace dmaee
{

// ---------- feasible sets for element gains ----------

struct Unconstrained
{
};

// Real amplitude interval [lo, hi].
struct AmplitudeOnly
{
    double lo = 0.001;
    double hi = 5.0;
};

// Finite set of nonnegative real amplitudes.
struct BinaryAmplitude
{
    std::vector<double> values{0.0, 0.1};
};

// Lorentzian-constrained phase: {(j + e^{j phi}) / 2}, the circle of radius
// 1/2 centred at j/2.
struct LorentzianPhase
{
};

class FeasibleSet
{
public:
    using Variant = std::variant<Unconstrained, AmplitudeOnly, BinaryAmplitude, LorentzianPhase>;

    FeasibleSet() = default;
    FeasibleSet(Unconstrained v) : v_(v) {}
    FeasibleSet(AmplitudeOnly v) : v_(v)
    {
        require(v.lo > 0.0 && v.lo <= v.hi && std::isfinite(v.hi), "FeasibleSet: AO needs 0 < lo <= hi");
    }
    FeasibleSet(BinaryAmplitude v) : v_(std::move(v))
    {
        const auto &vals = std::get<BinaryAmplitude>(v_).values;
        require(!vals.empty(), "FeasibleSet: BA needs a nonempty value set");
        for (double x : vals)
            require(x >= 0.0 && std::isfinite(x), "FeasibleSet: BA values must be nonnegative");
    }
    FeasibleSet(LorentzianPhase v) : v_(v) {}

    const Variant &variant() const { return v_; }

    std::string name() const
    {
        return std::visit(
            [](const auto &s) -> std::string {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, Unconstrained>)
                    return "UC";
                else if constexpr (std::is_same_v<T, AmplitudeOnly>)
                    return "AO";
                else if constexpr (std::is_same_v<T, BinaryAmplitude>)
                    return "BA";
                else
                    return "LP";
            },
            v_);
    }

    // Global minimizer of |q - m|^2 over the set.
    cplx project(cplx m) const
    {
        return std::visit(
            [m](const auto &s) -> cplx {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, Unconstrained>)
                    return m;
                else if constexpr (std::is_same_v<T, AmplitudeOnly>)
                    return {std::clamp(m.real(), s.lo, s.hi), 0.0};
                else if constexpr (std::is_same_v<T, BinaryAmplitude>)
                {
                    double best = s.values.front();
                    double best_d = std::norm(m - best);
                    for (double v : s.values)
                    {
                        const double d = std::norm(m - v);
                        if (d < best_d)
                        {
                            best = v;
                            best_d = d;
                        }
                    }
                    return {best, 0.0};
                }
                else
                {
                    const cplx centre{0.0, 0.5};
                    const cplx d = m - centre;
                    const double r = std::abs(d);
                    if (r == 0.0)
                        return centre + 0.5; // (j + 1) / 2
                    return centre + 0.5 * d / r;
                }
            },
            v_);
    }

    bool contains(cplx q, double tol = 1e-9) const { return std::abs(project(q) - q) <= tol; }

private:
    Variant v_{Unconstrained{}};
};

// ---------- structured weight matrix ----------

// K x L element gains; the dense K x (K L) form is block diagonal by strips.
class WeightMatrix
{
public:
    WeightMatrix() = default;
    explicit WeightMatrix(cmat gains) : gains_(std::move(gains))
    {
        require(gains_.rows() >= 1 && gains_.cols() >= 1, "WeightMatrix: empty gains");
    }

    Eigen::Index microstrips() const { return gains_.rows(); }
    Eigen::Index elements_per_strip() const { return gains_.cols(); }
    Eigen::Index total_elements() const { return gains_.size(); }

    const cmat &gains() const { return gains_; }
    cplx gain(Eigen::Index k, Eigen::Index l) const { return gains_(k, l); }

    cmat dense() const
    {
        const Eigen::Index k = microstrips(), l = elements_per_strip();
        cmat q = cmat::Zero(k, k * l);
        for (Eigen::Index i = 0; i < k; ++i)
            q.block(i, i * l, 1, l) = gains_.row(i);
        return q;
    }

    bool satisfies(const FeasibleSet &set, double tol = 1e-9) const
    {
        for (Eigen::Index i = 0; i < gains_.size(); ++i)
            if (!set.contains(gains_(i), tol))
                return false;
        return true;
    }

private:
    cmat gains_;
};

// Identical per-element FIR response h[0..m_h].
struct FilterTaps
{
    std::vector<cplx> taps{cplx{1.0, 0.0}};

    void validate() const
    {
        require(!taps.empty(), "FilterTaps: need at least one tap");
        require(taps.front() != cplx{0.0, 0.0}, "FilterTaps: h[0] must be nonzero");
    }
    std::size_t memory() const { return taps.size() - 1; }
};

struct AMConfig
{
    double delta = 1e-3;   // floor on the diagonal scaling
    double tol = 1e-6;     // stop when ||Q_l - Q_{l-1}||_F <= tol
    std::size_t max_iters = 500;

    void validate() const
    {
        require(delta > 0.0, "AMConfig: delta must be > 0");
        require(tol > 0.0, "AMConfig: tol must be > 0");
        require(max_iters >= 1, "AMConfig: max_iters must be >= 1");
    }
};

// z[i] = Q * sum_tau h[tau] y[i - tau]; history[tau] holds y[i - tau].
inline cvec apply_dma(std::span<const cvec> history, const FilterTaps &taps, const WeightMatrix &weights)
{
    taps.validate();
    require(history.size() >= taps.taps.size(), "apply_dma: input history shorter than m_h + 1");
    cvec acc = cvec::Zero(weights.total_elements());
    for (std::size_t tau = 0; tau < taps.taps.size(); ++tau)
    {
        require(history[tau].size() == weights.total_elements(), "apply_dma: input length != M");
        acc += taps.taps[tau] * history[tau];
    }
    // Block-diagonal product without forming the dense matrix.
    const Eigen::Index k = weights.microstrips(), l = weights.elements_per_strip();
    cvec z(k);
    for (Eigen::Index i = 0; i < k; ++i)
        z(i) = (weights.gains().row(i).transpose().array() * acc.segment(i * l, l).array()).sum();
    return z;
}

inline cplx project_entry(cplx m, const FeasibleSet &set) { return set.project(m); }

// Exact minimizer of ||Q - target||_F over structured, set-constrained Q.
inline WeightMatrix project_structure(const cmat &target, const FeasibleSet &set)
{
    const Eigen::Index k = target.rows();
    require(k >= 1 && target.cols() % k == 0, "project_structure: target must be K x (K L)");
    const Eigen::Index l = target.cols() / k;
    cmat gains(k, l);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < l; ++j)
            gains(i, j) = set.project(target(i, i * l + j));
    return WeightMatrix(std::move(gains));
}

// argmin over unitary U of ||m1 - U m2||_F  (= U~ V~^H from the SVD of m1 m2^H).
inline cmat procrustes_unitary(const cmat &m1, const cmat &m2)
{
    require(m1.rows() == m2.rows() && m1.cols() == m2.cols(), "procrustes_unitary: shape mismatch");
    require(m1.allFinite() && m2.allFinite(), "procrustes_unitary: non-finite input");
    Eigen::JacobiSVD<cmat> svd(m1 * m2.adjoint(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

struct DiagonalFit
{
    rvec diagonal;
    bool degenerate_rows = false; // some row of m2 was zero; its entry fell back to delta
};

// Row-wise max(Re<m1_i, m2_i> / ||m2_i||^2, delta).
inline DiagonalFit fit_diagonal(const cmat &m1, const cmat &m2, double delta)
{
    require(m1.rows() == m2.rows() && m1.cols() == m2.cols(), "fit_diagonal: shape mismatch");
    require(delta > 0.0, "fit_diagonal: delta must be > 0");
    DiagonalFit out{rvec(m1.rows()), false};
    for (Eigen::Index i = 0; i < m1.rows(); ++i)
    {
        const double nrm = m2.row(i).squaredNorm();
        if (nrm == 0.0)
        {
            out.diagonal(i) = delta;
            out.degenerate_rows = true;
            continue;
        }
        const double corr = (m1.row(i).array() * m2.row(i).array().conjugate()).sum().real();
        out.diagonal(i) = std::max(corr / nrm, delta);
    }
    return out;
}

struct SynthesisResult
{
    WeightMatrix weights;
    double residual = 0.0;          // ||Q - U D V3^H||_F at exit
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> objective_trace; // after every sub-update
};

// Alternating minimization of ||Q - U D V3^H||_F over structured set-constrained
// Q, unitary U and positive diagonal D, starting from U = D = I.
inline SynthesisResult synthesize_weights(const cmat &v3, Eigen::Index strips, const FeasibleSet &set,
                                          const AMConfig &cfg = {})
{
    cfg.validate();
    const Eigen::Index m = v3.rows(), k = v3.cols();
    require(k == strips && strips >= 1 && m % strips == 0, "synthesize_weights: V3 must be (K L) x K");
    require((v3.adjoint() * v3 - cmat::Identity(k, k)).norm() <= 1e-9, "synthesize_weights: V3 is not orthonormal");

    const cmat v3h = v3.adjoint();
    cmat u = cmat::Identity(k, k);
    rvec d = rvec::Ones(k);

    SynthesisResult out;
    const auto objective = [&](const cmat &q) { return (q - u * d.asDiagonal() * v3h).norm(); };

    cmat q_prev;
    for (std::size_t it = 1; it <= cfg.max_iters; ++it)
    {
        WeightMatrix w = project_structure(u * d.asDiagonal() * v3h, set);
        const cmat q = w.dense();
        out.objective_trace.push_back(objective(q));

        u = procrustes_unitary(q, d.asDiagonal() * v3h);
        out.objective_trace.push_back(objective(q));

        d = fit_diagonal(u.adjoint() * q, v3h, cfg.delta).diagonal;
        out.residual = objective(q);
        out.objective_trace.push_back(out.residual);

        out.weights = std::move(w);
        out.iterations = it;
        if (it > 1 && (q - q_prev).norm() <= cfg.tol)
        {
            out.converged = true;
            break;
        }
        q_prev = q;
    }
    return out;
}

inline SynthesisResult synthesize_weights(const cmat &v3, const FeasibleSet &set, const AMConfig &cfg = {})
{
    return synthesize_weights(v3, v3.cols(), set, cfg);
}

// First K right singular vectors of the dense Q (requires full row rank).
inline cmat row_space_basis(const WeightMatrix &weights)
{
    const cmat q = weights.dense();
    const Eigen::Index k = q.rows();
    Eigen::JacobiSVD<cmat> svd(q, Eigen::ComputeThinV);
    const rvec sv = svd.singularValues();
    if (!(sv(k - 1) > 1e-10 * std::max(1.0, sv(0))))
        throw ValidationError("row_space_basis: weight matrix is rank deficient (degenerate microstrip)");
    cmat basis = svd.matrixV().leftCols(k);
    linalg::normalize_phase(basis);
    return basis;
}

// Orthonormal basis of whatever row space Q has; rank-deficient strips
// (all-zero gains) are dropped instead of raising.
inline cmat effective_row_space(const WeightMatrix &weights)
{
    const cmat q = weights.dense();
    Eigen::JacobiSVD<cmat> svd(q, Eigen::ComputeThinV);
    const rvec sv = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > 1e-10 * std::max(1.0, sv(0)))
        ++rank;
    cmat basis = svd.matrixV().leftCols(rank);
    linalg::normalize_phase(basis);
    return basis;
}

} // namespace dmaee

#endif
