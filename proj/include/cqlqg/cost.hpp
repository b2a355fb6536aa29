#pragma once

#include <complex>

#include "cqlqg/ccr.hpp"
#include "cqlqg/linalg.hpp"
#include "cqlqg/luenberger.hpp"
#include "cqlqg/systems.hpp"

// Mean square cost machinery: the general plant-controller closed loop, the
// LQG cost through the controllability Gramian, the invariant Gaussian state
// covariance, and the block Gramian cascade available in the Luenberger frame.

namespace cqlqg {

struct ClosedLoopSystem {
    Matrix cA;     // 2n x 2n
    Matrix cB;     // 2n x (m1+m2)
    Matrix cC;     // r x 2n
    Matrix Theta;  // 2n x 2n block diagonal CCR matrix

    Index n() const { return cA.rows() / 2; }
};

inline ClosedLoopSystem assemble_closed_loop(const QuantumPlant& plant,
                                             const QuantumController& ctrl,
                                             const CcrAlgebra& alg) {
    const Index n = plant.n();
    if (ctrl.n() != n)
        throw DimensionMismatch("assemble_closed_loop: plant and controller orders differ");
    ClosedLoopSystem loop;
    loop.cA = Matrix::Zero(2 * n, 2 * n);
    loop.cA.topLeftCorner(n, n) = plant.A;
    loop.cA.topRightCorner(n, n) = plant.E * ctrl.c;
    loop.cA.bottomLeftCorner(n, n) = ctrl.e * plant.C;
    loop.cA.bottomRightCorner(n, n) = ctrl.a;

    loop.cB = Matrix::Zero(2 * n, alg.m());
    loop.cB.topLeftCorner(n, alg.m1) = plant.B;
    loop.cB.topRightCorner(n, alg.m2) = plant.E * ctrl.d;
    loop.cB.bottomLeftCorner(n, alg.m1) = ctrl.e * plant.D;
    loop.cB.bottomRightCorner(n, alg.m2) = ctrl.b;

    loop.cC.resize(plant.r(), 2 * n);
    loop.cC.leftCols(n) = plant.F;
    loop.cC.rightCols(n) = plant.G * ctrl.c;

    loop.Theta = Matrix::Zero(2 * n, 2 * n);
    loop.Theta.topLeftCorner(n, n) = plant.Theta1;
    loop.Theta.bottomRightCorner(n, n) = ctrl.Theta2;
    return loop;
}

inline double closed_loop_pr_residual(const ClosedLoopSystem& loop, const CcrAlgebra& alg) {
    return (loop.cA * loop.Theta + loop.Theta * loop.cA.transpose() +
            loop.cB * alg.J * loop.cB.transpose())
        .norm();
}

inline Matrix controllability_gramian(const ClosedLoopSystem& loop,
                                      double rtol = kDefaultRtol,
                                      double margin = kDefaultHurwitzMargin) {
    return lyapunov_solve(loop.cA, loop.cB * loop.cB.transpose(), rtol, margin);
}

// V = (1/2) <cC^T cC, cP>; nonnegative for any internally stable loop.
inline double lqg_cost(const ClosedLoopSystem& loop, double rtol = kDefaultRtol,
                       double margin = kDefaultHurwitzMargin) {
    const Matrix cp = controllability_gramian(loop, rtol, margin);
    return 0.5 * (loop.cC * cp * loop.cC.transpose()).trace();
}

struct QuantumCovariance {
    ComplexMatrix S;  // cP + i Theta
    double min_eigenvalue = 0.0;
    bool psd = false;
};

// Quantum covariance matrix of the invariant Gaussian state.  A negative
// eigenvalue beyond tolerance signals a PR violation upstream; with strict
// set, that is raised as an error.
inline QuantumCovariance invariant_quantum_covariance(const ClosedLoopSystem& loop,
                                                      bool strict = false,
                                                      double rtol = kDefaultRtol,
                                                      double margin = kDefaultHurwitzMargin) {
    const Matrix cp = controllability_gramian(loop, rtol, margin);
    const std::complex<double> iunit(0.0, 1.0);
    QuantumCovariance cov;
    cov.S = cp.cast<std::complex<double>>() + iunit * loop.Theta.cast<std::complex<double>>();
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(cov.S);
    if (es.info() != Eigen::Success)
        throw NumericalError("invariant_quantum_covariance: eigensolver failed");
    cov.min_eigenvalue = es.eigenvalues().minCoeff();
    cov.psd = cov.min_eigenvalue >= -1e-9 * unit_floor(cov.S.norm());
    if (strict && !cov.psd)
        throw NotPsd("invariant state covariance has eigenvalue " +
                     std::to_string(cov.min_eigenvalue));
    return cov;
}

// Gramian blocks of the Luenberger frame, solved as the cascade
// ALE(1,1) -> ASE(1,2) -> ALE(2,2) and its observability mirror.
struct GramianBlocks {
    Matrix P11, P12, P22;  // controllability blocks, P21 = P12^T
    Matrix Q11, Q21, Q22;  // observability blocks, Q12 = Q21^T
    Matrix sP, sQ;         // assembled 2n x 2n Gramians
    Matrix H;              // Hankelian sQ * sP
    Matrix q;              // [I -I] sQ [I; -I], symmetric PSD

    Matrix H11() const { return H.topLeftCorner(n(), n()); }
    Matrix H21() const { return H.bottomLeftCorner(n(), n()); }
    Matrix H22() const { return H.bottomRightCorner(n(), n()); }
    Index n() const { return P11.rows(); }
};

inline GramianBlocks gramian_blocks(const LuenbergerClosedLoop& loop,
                                    double rtol = kDefaultRtol,
                                    double margin = kDefaultHurwitzMargin) {
    const Index n = loop.n();
    const Matrix a11 = loop.sA.topLeftCorner(n, n);
    const Matrix a21 = loop.sA.bottomLeftCorner(n, n);
    const Matrix a22 = loop.sA.bottomRightCorner(n, n);
    const Matrix b1 = loop.sB.topRows(n);
    const Matrix b2 = loop.sB.bottomRows(n);
    const Matrix c1 = loop.sC.leftCols(n);
    const Matrix c2 = loop.sC.rightCols(n);

    GramianBlocks g;
    g.P11 = lyapunov_solve(a11, b1 * b1.transpose(), rtol, margin);
    g.P12 = sylvester_solve(a11, a22, g.P11 * a21.transpose() + b1 * b2.transpose(), rtol);
    {
        const Matrix cross = a21 * g.P12;
        g.P22 = lyapunov_solve(a22, cross + cross.transpose() + b2 * b2.transpose(), rtol, margin);
    }
    g.Q22 = lyapunov_solve(a22.transpose(), c2.transpose() * c2, rtol, margin);
    g.Q21 = sylvester_solve(a22.transpose(), a11.transpose(),
                            g.Q22 * a21 + c2.transpose() * c1, rtol);
    {
        const Matrix cross = a21.transpose() * g.Q21;
        g.Q11 = lyapunov_solve(a11.transpose(), cross + cross.transpose() + c1.transpose() * c1,
                               rtol, margin);
    }

    g.sP.resize(2 * n, 2 * n);
    g.sP << g.P11, g.P12, g.P12.transpose(), g.P22;
    g.sQ.resize(2 * n, 2 * n);
    g.sQ << g.Q11, g.Q21.transpose(), g.Q21, g.Q22;
    g.H = g.sQ * g.sP;
    g.q = symmetric_part(g.Q11 + g.Q22 - g.Q21 - g.Q21.transpose());

    const double scale = std::max({1.0, loop.sA.norm() * g.sP.norm(), loop.sB.norm()});
    const double res_p = (loop.sA * g.sP + g.sP * loop.sA.transpose() +
                          loop.sB * loop.sB.transpose())
                             .norm();
    const double res_q = (loop.sA.transpose() * g.sQ + g.sQ * loop.sA +
                          loop.sC.transpose() * loop.sC)
                             .norm();
    if (res_p > 1e-9 * scale || res_q > 1e-9 * std::max({1.0, loop.sA.norm() * g.sQ.norm(),
                                                         loop.sC.norm()}))
        throw NumericalError("gramian_blocks: assembled Gramians violate the full equations");
    return g;
}

struct CostEvaluations {
    double from_state_weight = 0.0;  // (1/2) <sC^T sC, sP>
    double from_noise_gain = 0.0;    // (1/2) <sB sB^T, sQ>
    double from_hankelian = 0.0;     // -<sA, sH>
    double max_rel_disagreement = 0.0;

    double value() const { return from_state_weight; }
};

namespace detail {

inline CostEvaluations cost_evaluations(const Matrix& sA, const Matrix& sB, const Matrix& sC,
                                        const Matrix& sP, const Matrix& sQ) {
    CostEvaluations ev;
    ev.from_state_weight = 0.5 * (sC * sP * sC.transpose()).trace();
    ev.from_noise_gain = 0.5 * (sB.transpose() * sQ * sB).trace();
    ev.from_hankelian = -(sA.transpose() * (sQ * sP)).trace();
    const double vmax = std::max({std::abs(ev.from_state_weight), std::abs(ev.from_noise_gain),
                                  std::abs(ev.from_hankelian)});
    const double dmax = std::max({std::abs(ev.from_state_weight - ev.from_noise_gain),
                                  std::abs(ev.from_state_weight - ev.from_hankelian),
                                  std::abs(ev.from_noise_gain - ev.from_hankelian)});
    ev.max_rel_disagreement = dmax / unit_floor(vmax);
    if (ev.max_rel_disagreement > 1e-8)
        throw InconsistentGramians("cost evaluations disagree by relative " +
                                   std::to_string(ev.max_rel_disagreement));
    return ev;
}

}  // namespace detail

// The three equivalent evaluations of the cost in the transformed frame.
inline CostEvaluations luenberger_cost(const LuenbergerClosedLoop& loop,
                                       const GramianBlocks& blocks) {
    return detail::cost_evaluations(loop.sA, loop.sB, loop.sC, blocks.sP, blocks.sQ);
}

// Same three-way evaluation for an arbitrary stable realization (used by the
// CLI when the controller is not of Luenberger type).
inline CostEvaluations three_way_cost(const Matrix& sA, const Matrix& sB, const Matrix& sC,
                                      double rtol = kDefaultRtol,
                                      double margin = kDefaultHurwitzMargin) {
    const Matrix sP = lyapunov_solve(sA, sB * sB.transpose(), rtol, margin);
    const Matrix sQ = lyapunov_solve(sA.transpose(), sC.transpose() * sC, rtol, margin);
    return detail::cost_evaluations(sA, sB, sC, sP, sQ);
}

}  // namespace cqlqg
