#pragma once

#include "cqlqg/linalg.hpp"
#include "cqlqg/systems.hpp"

// Change of controller variables that swaps conjugate positions and momenta:
// canonical CCR forms, the composite swap matrix, and parameter transport.
// After the transport the controller CCR matrix equals the negative of the
// plant one, which kills the one-point CCR matrix of the difference process.

namespace cqlqg {

struct SwapPlan {
    Matrix sigma1;   // plant canonicalizer
    Matrix sigma2;   // controller canonicalizer
    Matrix sigma3;   // position-momentum swap, I (x) [[0,1],[1,0]]
    Matrix sigma;    // composite sigma1^{-1} sigma3 sigma2
    Matrix Upsilon;  // canonical CCR matrix (1/2) I (x) bJ
};

// Nonsingular sigma with sigma Theta sigma^T = (1/2) I (x) bJ.
inline Matrix canonicalize_ccr(const Matrix& theta, double rtol = kSkewRtol) {
    require_square(theta, "canonicalize_ccr: Theta");
    if (theta.rows() % 2 != 0)
        throw OddDimension("canonicalize_ccr: odd order " + std::to_string(theta.rows()));
    const Index n = theta.rows();
    if (n == 0) return Matrix(0, 0);

    SkewFactorization fac;
    try {
        fac = skew_factorize(theta, /*require_nonsingular=*/true, rtol);
    } catch (const SingularInput&) {
        throw SingularCcr("canonicalize_ccr: CCR matrix is singular");
    }
    // Theta = psi (I (x) bJ) psi^T  =>  sigma = (sqrt(2) psi)^{-1}
    Matrix sigma = (std::sqrt(2.0) * fac.psi).partialPivLu().inverse();

    const Matrix ups = 0.5 * canonical_skew(n / 2);
    const double res = (sigma * theta * sigma.transpose() - ups).norm();
    if (res > 1e-10 * unit_floor(theta.norm()))
        throw NumericalError("canonicalize_ccr: residual " + std::to_string(res));
    return sigma;
}

inline SwapPlan build_swap_plan(const Matrix& theta1, const Matrix& theta2) {
    require_square(theta1, "build_swap_plan: Theta1");
    require_square(theta2, "build_swap_plan: Theta2");
    if (theta1.rows() != theta2.rows())
        throw DimensionMismatch("build_swap_plan: CCR matrices must be of equal order");
    const Index n = theta1.rows();

    SwapPlan plan;
    plan.Upsilon = 0.5 * canonical_skew(n / 2);
    plan.sigma1 = canonicalize_ccr(theta1);
    plan.sigma2 = canonicalize_ccr(theta2);
    plan.sigma3 = Matrix::Zero(n, n);
    for (Index k = 0; k < n / 2; ++k) {
        plan.sigma3(2 * k, 2 * k + 1) = 1.0;
        plan.sigma3(2 * k + 1, 2 * k) = 1.0;
    }
    plan.sigma = plan.sigma1.partialPivLu().solve(plan.sigma3 * plan.sigma2);

    const double res = (plan.sigma * theta2 * plan.sigma.transpose() + theta1).norm();
    if (res > 1e-10 * unit_floor(theta1.norm()))
        throw NumericalError("build_swap_plan: sigma Theta2 sigma^T + Theta1 residual " +
                             std::to_string(res));
    return plan;
}

// Controller variable change xi |-> sigma xi with parameter transport.  The
// transfer function (and hence the closed-loop cost) is unchanged.
inline QuantumController apply_to_controller(const QuantumController& ctrl, const Matrix& sigma) {
    require_square(sigma, "apply_to_controller: sigma");
    if (sigma.rows() != ctrl.n())
        throw DimensionMismatch("apply_to_controller: sigma order mismatch");
    Eigen::FullPivLU<Matrix> lu(sigma);
    if (!lu.isInvertible())
        throw SingularTransform("apply_to_controller: sigma is singular");

    QuantumController out = ctrl;
    const Matrix sigma_inv = lu.inverse();
    out.a = sigma * ctrl.a * sigma_inv;
    out.b = sigma * ctrl.b;
    out.e = sigma * ctrl.e;
    out.c = ctrl.c * sigma_inv;
    out.Theta2 = sigma * ctrl.Theta2 * sigma.transpose();
    return out;
}

}  // namespace cqlqg
