#pragma once

#include <string>
#include <utility>

#include "cqlqg/ccr.hpp"
#include "cqlqg/linalg.hpp"

// Plant and controller state-space data, the energy/coupling parameterization
// that generates them, and physical-realizability (PR) verification.

namespace cqlqg {

inline constexpr double kPrTol = 1e-8;

// Energy matrix R (symmetric), field coupling M, inter-system coupling L.
struct EnergyCouplingParams {
    Matrix R;  // n x n symmetric
    Matrix M;  // field channels x n
    Matrix L;  // partner output channels x n
};

struct QuantumPlant {
    Matrix A;        // n x n
    Matrix B;        // n x m1
    Matrix C;        // p1 x n
    Matrix D;        // p1 x m1 feedthrough (conjugate pair selection)
    Matrix E;        // n x p2
    Matrix Theta1;   // n x n nonsingular antisymmetric
    Matrix F;        // r x n cost weight
    Matrix G;        // r x p2 cost weight, full column rank
    Matrix tildeJ1;  // p1 x p1 output CCR matrix D J1 D^T

    Index n() const { return A.rows(); }
    Index r() const { return F.rows(); }
};

struct QuantumController {
    Matrix a;        // n x n
    Matrix b;        // n x m2
    Matrix c;        // p2 x n
    Matrix d;        // p2 x m2 feedthrough
    Matrix e;        // n x p1
    Matrix Theta2;   // n x n nonsingular antisymmetric
    Matrix tildeJ2;  // p2 x p2 output CCR matrix d J2 d^T

    Index n() const { return a.rows(); }
};

struct PrReport {
    double drift_residual = 0.0;   // CCR-preservation condition on the drift pair
    double output_residual = 0.0;  // output-coupling condition
    double tol = 0.0;              // effective (scaled) tolerance
    bool pass = false;
};

namespace detail {

inline Matrix checked_theta(Matrix theta, const char* name) {
    require_antisymmetric(theta, name);
    theta = antisymmetric_part(theta);
    if (!Eigen::FullPivLU<Matrix>(theta).isInvertible())
        throw SingularCcr(std::string(name) + " is singular");
    return theta;
}

inline double pr_scale(std::initializer_list<const Matrix*> mats) {
    double s = 0.0;
    for (const Matrix* m : mats) s = std::max(s, m->norm());
    return std::max(1.0, s * s);
}

}  // namespace detail

inline QuantumPlant plant_from_params(const EnergyCouplingParams& par, const Matrix& theta1,
                                      const Matrix& d_feed, const Matrix& f, const Matrix& g,
                                      const CcrAlgebra& alg) {
    const Matrix theta = detail::checked_theta(theta1, "Theta1");
    const Index n = theta.rows();
    if (par.R.rows() != n || par.R.cols() != n)
        throw DimensionMismatch("R1 must be " + std::to_string(n) + "x" + std::to_string(n));
    if (par.M.rows() != alg.m1 || par.M.cols() != n)
        throw DimensionMismatch("M1 must be m1 x n");
    if (par.L.rows() != alg.p2 || par.L.cols() != n)
        throw DimensionMismatch("L1 must be p2 x n");
    validate_feedthrough(d_feed, alg.J1, "D");
    if (d_feed.rows() != alg.p1 || d_feed.cols() != alg.m1)
        throw BadFeedthrough("D must be p1 x m1");
    if (f.cols() != n || g.rows() != f.rows() || g.cols() != alg.p2)
        throw DimensionMismatch("weights F, G must be r x n and r x p2");
    if (Eigen::ColPivHouseholderQR<Matrix>(g).rank() != alg.p2)
        throw ValidationError("G must have full column rank p2");

    const Matrix r_sym = symmetric_part(par.R);
    QuantumPlant plant;
    plant.Theta1 = theta;
    plant.D = d_feed;
    plant.A = 2.0 * theta *
              (r_sym + par.M.transpose() * alg.J1 * par.M +
               par.L.transpose() * alg.tilde_j2() * par.L);
    plant.B = 2.0 * theta * par.M.transpose();
    plant.C = 2.0 * d_feed * alg.J1 * par.M;
    plant.E = 2.0 * theta * par.L.transpose();
    plant.F = f;
    plant.G = g;
    plant.tildeJ1 = d_feed * alg.J1 * d_feed.transpose();
    return plant;
}

inline QuantumController controller_from_params(const EnergyCouplingParams& par,
                                                const Matrix& theta2, const Matrix& d_feed,
                                                const CcrAlgebra& alg) {
    const Matrix theta = detail::checked_theta(theta2, "Theta2");
    const Index n = theta.rows();
    if (par.R.rows() != n || par.R.cols() != n)
        throw DimensionMismatch("R2 must be " + std::to_string(n) + "x" + std::to_string(n));
    if (par.M.rows() != alg.m2 || par.M.cols() != n)
        throw DimensionMismatch("M2 must be m2 x n");
    if (par.L.rows() != alg.p1 || par.L.cols() != n)
        throw DimensionMismatch("L2 must be p1 x n");
    validate_feedthrough(d_feed, alg.J2, "d");
    if (d_feed.rows() != alg.p2 || d_feed.cols() != alg.m2)
        throw BadFeedthrough("d must be p2 x m2");

    const Matrix r_sym = symmetric_part(par.R);
    QuantumController ctrl;
    ctrl.Theta2 = theta;
    ctrl.d = d_feed;
    ctrl.a = 2.0 * theta *
             (r_sym + par.M.transpose() * alg.J2 * par.M +
              par.L.transpose() * alg.tilde_j1() * par.L);
    ctrl.b = 2.0 * theta * par.M.transpose();
    ctrl.c = 2.0 * d_feed * alg.J2 * par.M;
    ctrl.e = 2.0 * theta * par.L.transpose();
    ctrl.tildeJ2 = d_feed * alg.J2 * d_feed.transpose();
    return ctrl;
}

inline PrReport verify_pr(const QuantumPlant& plant, const CcrAlgebra& alg,
                          double tol = kPrTol) {
    const Matrix r1 = plant.A * plant.Theta1 + plant.Theta1 * plant.A.transpose() +
                      plant.B * alg.J1 * plant.B.transpose() +
                      plant.E * alg.tilde_j2() * plant.E.transpose();
    const Matrix r2 = plant.C * plant.Theta1 + plant.D * alg.J1 * plant.B.transpose();
    PrReport rep;
    rep.drift_residual = r1.norm();
    rep.output_residual = r2.norm();
    rep.tol = tol * detail::pr_scale({&plant.A, &plant.B, &plant.C, &plant.D, &plant.E,
                                      &plant.Theta1});
    rep.pass = rep.drift_residual <= rep.tol && rep.output_residual <= rep.tol;
    return rep;
}

inline PrReport verify_pr(const QuantumController& ctrl, const CcrAlgebra& alg,
                          double tol = kPrTol) {
    const Matrix r1 = ctrl.a * ctrl.Theta2 + ctrl.Theta2 * ctrl.a.transpose() +
                      ctrl.b * alg.J2 * ctrl.b.transpose() +
                      ctrl.e * alg.tilde_j1() * ctrl.e.transpose();
    const Matrix r2 = ctrl.c * ctrl.Theta2 + ctrl.d * alg.J2 * ctrl.b.transpose();
    PrReport rep;
    rep.drift_residual = r1.norm();
    rep.output_residual = r2.norm();
    rep.tol = tol * detail::pr_scale({&ctrl.a, &ctrl.b, &ctrl.c, &ctrl.d, &ctrl.e,
                                      &ctrl.Theta2});
    rep.pass = rep.drift_residual <= rep.tol && rep.output_residual <= rep.tol;
    return rep;
}

// (a, c) of a PR controller as functions of the free triple (R2, b, e).
inline std::pair<Matrix, Matrix> derive_ac_from_rbe(const Matrix& r2, const Matrix& b,
                                                    const Matrix& e, const Matrix& theta2,
                                                    const Matrix& d_feed, const CcrAlgebra& alg) {
    const Matrix theta = detail::checked_theta(theta2, "Theta2");
    const Index n = theta.rows();
    if (b.rows() != n || b.cols() != alg.m2) throw DimensionMismatch("b must be n x m2");
    if (e.rows() != n || e.cols() != alg.p1) throw DimensionMismatch("e must be n x p1");
    Eigen::PartialPivLU<Matrix> theta_lu(theta);
    const Matrix gain_quad = b * alg.J2 * b.transpose() + e * alg.tilde_j1() * e.transpose();
    // a = 2 Theta2 R2 - (1/2)(b J2 b^T + e tJ1 e^T) Theta2^{-1}; the right
    // division uses X Theta^{-1} = (Theta^{-1} X)^T for antisymmetric X, Theta.
    const Matrix a = 2.0 * theta * symmetric_part(r2) -
                     0.5 * theta_lu.solve(gain_quad).transpose();
    // c = -d J2 b^T Theta2^{-1} = -(Theta2^{-1} b J2 d^T)^T
    const Matrix c = -theta_lu.solve(b * alg.J2 * d_feed.transpose()).transpose();
    return {a, c};
}

inline QuantumController controller_from_rbe(const Matrix& r2, const Matrix& b, const Matrix& e,
                                             const Matrix& theta2, const Matrix& d_feed,
                                             const CcrAlgebra& alg) {
    auto [a, c] = derive_ac_from_rbe(r2, b, e, theta2, d_feed, alg);
    QuantumController ctrl;
    ctrl.a = std::move(a);
    ctrl.b = b;
    ctrl.c = std::move(c);
    ctrl.d = d_feed;
    ctrl.e = e;
    ctrl.Theta2 = antisymmetric_part(theta2);
    ctrl.tildeJ2 = d_feed * alg.J2 * d_feed.transpose();
    return ctrl;
}

struct ThetaRecovery {
    Matrix theta2;
    double asymmetry_defect = 0.0;
    bool singular = false;  // recovered CCR matrix is singular (warning, not error)
};

// CCR matrix of a controller recovered from its drift and gain matrices via
// the Kronecker-sum inverse; fails when the drift has centrally symmetric
// eigenvalues (the sum a (+) a is then singular).
inline ThetaRecovery recover_theta2(const Matrix& a, const Matrix& b, const Matrix& e,
                                    const CcrAlgebra& alg) {
    require_square(a, "recover_theta2: a");
    const Index n = a.rows();
    if (b.rows() != n || b.cols() != alg.m2) throw DimensionMismatch("b must be n x m2");
    if (e.rows() != n || e.cols() != alg.p1) throw DimensionMismatch("e must be n x p1");

    Eigen::FullPivLU<Matrix> lu(kron_sum(a, a));
    if (!lu.isInvertible())
        throw ResonantSpectrum("a (+) a is singular: drift spectrum is centrally symmetric");
    const Matrix gain_quad = b * alg.J2 * b.transpose() + e * alg.tilde_j1() * e.transpose();
    const Matrix raw = unvec(lu.solve(-vec(gain_quad)), n, n);

    ThetaRecovery rec;
    rec.asymmetry_defect = symmetric_part(raw).norm();
    rec.theta2 = antisymmetric_part(raw);
    rec.singular = !Eigen::FullPivLU<Matrix>(rec.theta2).isInvertible();
    return rec;
}

}  // namespace cqlqg
