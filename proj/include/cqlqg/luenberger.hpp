#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "cqlqg/ccr.hpp"
#include "cqlqg/linalg.hpp"
#include "cqlqg/systems.hpp"

// Luenberger controller class: the structural drift constraint
// a = A - eC + Ec, the transformed block lower triangular closed loop, the
// quadratic constraint coupling the gain matrices b, e, and constructive
// solutions of that constraint.

namespace cqlqg {

inline constexpr double kFeasibilityTolFactor = 1e-8;

struct LuenbergerGains {
    Matrix b;  // n x m2
    Matrix e;  // n x p1

    Matrix gamma() const {
        Matrix g(b.rows(), b.cols() + e.cols());
        g << b, e;
        return g;
    }
};

// Fixed data of the quadratic gain constraint
//   f(gamma) = (Gamma - gamma Delta) J (Gamma - gamma Delta)^T
//            = (gamma - gamma0) K (gamma - gamma0)^T + mho.
struct GainConstraintData {
    Index n = 0, m1 = 0, m2 = 0, p1 = 0;
    Matrix Gamma;    // n x (m1+m2), [B  Ed]
    Matrix Delta;    // (m2+p1) x (m1+m2)
    Matrix J;        // channel CCR matrix of order m1+m2
    Matrix K;        // Delta J Delta^T = I (x) bJ of order m2+p1
    Matrix J2;       // m2 x m2
    Matrix tildeJ1;  // p1 x p1
    Matrix gamma0;   // n x (m2+p1), [b0  e0]
    Matrix b0;       // Ed
    Matrix e0;       // -B J1 D^T tildeJ1
    Matrix mho;      // n x n antisymmetric offset
    double gamma_scale = 1.0;  // max(1, ||Gamma||^2), the feasibility tolerance scale

    double feasibility_tol() const { return kFeasibilityTolFactor * gamma_scale; }

    LuenbergerGains split(const Matrix& gamma) const {
        LuenbergerGains g;
        g.b = gamma.leftCols(m2);
        g.e = gamma.rightCols(p1);
        return g;
    }
};

struct ConstraintResidual {
    Matrix f;                       // antisymmetric n x n
    double asymmetry_defect = 0.0;  // norm of the discarded symmetric part
    double norm = 0.0;
};

inline Matrix luenberger_a(const QuantumPlant& plant, const LuenbergerGains& gains,
                           const Matrix& c) {
    const Index n = plant.n();
    if (gains.e.rows() != n || c.cols() != n)
        throw DimensionMismatch("luenberger_a: inconsistent dimensions");
    return plant.A - gains.e * plant.C + plant.E * c;
}

// c = d J2 b^T Theta1^{-1}, the output matrix forced by the PR conditions
// once the controller CCR matrix is fixed to -Theta1.
inline Matrix c_from_b(const Matrix& b, const QuantumPlant& plant, const Matrix& d_feed,
                       const CcrAlgebra& alg) {
    Eigen::PartialPivLU<Matrix> theta_lu(plant.Theta1);
    return theta_lu.solve(b * alg.J2 * d_feed.transpose()).transpose();
}

inline GainConstraintData build_constraint_data(const QuantumPlant& plant, const CcrAlgebra& alg,
                                                const Matrix& d_feed) {
    GainConstraintData data;
    data.n = plant.n();
    data.m1 = alg.m1;
    data.m2 = alg.m2;
    data.p1 = alg.p1;
    data.J = alg.J;
    data.J2 = alg.J2;
    data.tildeJ1 = alg.tilde_j1();

    data.Gamma.resize(data.n, alg.m());
    data.Gamma << plant.B, plant.E * d_feed;

    data.Delta = Matrix::Zero(data.m2 + data.p1, alg.m());
    data.Delta.block(0, data.m1, data.m2, data.m2) = Matrix::Identity(data.m2, data.m2);
    data.Delta.block(data.m2, 0, data.p1, data.m1) = plant.D;

    data.K = data.Delta * alg.J * data.Delta.transpose();
    if ((data.K - canonical_skew((data.m2 + data.p1) / 2)).norm() > 1e-12)
        throw NumericalError("constraint data: K is not in canonical form");

    data.b0 = plant.E * d_feed;
    data.e0 = -plant.B * alg.J1 * plant.D.transpose() * data.tildeJ1;
    data.gamma0 = -data.Gamma * alg.J * data.Delta.transpose() * data.K;
    Matrix stacked(data.n, data.m2 + data.p1);
    stacked << data.b0, data.e0;
    if ((data.gamma0 - stacked).norm() > 1e-12 * unit_floor(data.gamma0.norm()))
        throw NumericalError("constraint data: gamma0 block mismatch");

    const Matrix core = alg.J + alg.J * data.Delta.transpose() * data.K * data.Delta * alg.J;
    data.mho = antisymmetric_part(data.Gamma * core * data.Gamma.transpose());
    data.gamma_scale = unit_floor(data.Gamma.norm() * data.Gamma.norm());

    // Completion-of-square identity, spot-checked on random gains.
    std::mt19937_64 rng(0x5eed5eedULL);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 3; ++trial) {
        Matrix gamma(data.n, data.m2 + data.p1);
        for (Index i = 0; i < gamma.rows(); ++i)
            for (Index j = 0; j < gamma.cols(); ++j) gamma(i, j) = dist(rng);
        const Matrix diff = data.Gamma - gamma * data.Delta;
        const Matrix lhs = diff * alg.J * diff.transpose();
        const Matrix rhs =
            (gamma - data.gamma0) * data.K * (gamma - data.gamma0).transpose() + data.mho;
        const double s = std::max({1.0, data.Gamma.norm(), gamma.norm()});
        if ((lhs - rhs).norm() > 1e-10 * s * s)
            throw NumericalError("constraint data: completion-of-square identity failed");
    }
    return data;
}

inline ConstraintResidual constraint_residual(const LuenbergerGains& gains,
                                              const GainConstraintData& data) {
    const Matrix gamma = gains.gamma();
    if (gamma.rows() != data.n || gamma.cols() != data.m2 + data.p1)
        throw DimensionMismatch("constraint_residual: gains are " + std::to_string(gamma.rows()) +
                                "x" + std::to_string(gamma.cols()));
    const Matrix diff = data.Gamma - gamma * data.Delta;
    const Matrix raw = diff * data.J * diff.transpose();
    ConstraintResidual res;
    res.f = antisymmetric_part(raw);
    res.asymmetry_defect = (raw - res.f).norm();
    res.norm = res.f.norm();
    return res;
}

inline bool gains_feasible(const LuenbergerGains& gains, const GainConstraintData& data) {
    return constraint_residual(gains, data).norm <= data.feasibility_tol();
}

enum class GainSolveMode { particular, around_b, around_e };

inline LuenbergerGains solve_gain_constraint_particular(const GainConstraintData& data) {
    if (data.m2 + data.p1 < data.n)
        throw DimensionDeficit("m2 + p1 = " + std::to_string(data.m2 + data.p1) +
                               " < n = " + std::to_string(data.n));
    const Matrix beta = solve_skew_quadratic(data.K, -data.mho);
    return data.split(data.gamma0 + beta);
}

// Fix b and solve for e from the split form of the constraint.
inline LuenbergerGains solve_gain_constraint_around_b(const GainConstraintData& data,
                                                      const Matrix& b) {
    if (data.p1 < data.n)
        throw DimensionDeficit("around_b mode needs p1 >= n, got p1 = " +
                               std::to_string(data.p1) + ", n = " + std::to_string(data.n));
    const Matrix db = b - data.b0;
    const Matrix alpha = antisymmetric_part(db * data.J2 * db.transpose() + data.mho);
    LuenbergerGains g;
    g.b = b;
    g.e = data.e0 + solve_skew_quadratic(data.tildeJ1, -alpha);
    return g;
}

inline LuenbergerGains solve_gain_constraint_around_e(const GainConstraintData& data,
                                                      const Matrix& e) {
    if (data.m2 < data.n)
        throw DimensionDeficit("around_e mode needs m2 >= n, got m2 = " +
                               std::to_string(data.m2) + ", n = " + std::to_string(data.n));
    const Matrix de = e - data.e0;
    const Matrix alpha = antisymmetric_part(de * data.tildeJ1 * de.transpose() + data.mho);
    LuenbergerGains g;
    g.e = e;
    g.b = data.b0 + solve_skew_quadratic(data.J2, -alpha);
    return g;
}

inline LuenbergerGains solve_gain_constraint(const GainConstraintData& data, GainSolveMode mode,
                                             const Matrix& anchor = Matrix()) {
    LuenbergerGains g;
    switch (mode) {
        case GainSolveMode::particular:
            g = solve_gain_constraint_particular(data);
            break;
        case GainSolveMode::around_b:
            g = solve_gain_constraint_around_b(data, anchor);
            break;
        case GainSolveMode::around_e:
            g = solve_gain_constraint_around_e(data, anchor);
            break;
    }
    const double fn = constraint_residual(g, data).norm;
    if (fn > 1e-9 * data.gamma_scale)
        throw NumericalError("solve_gain_constraint: residual " + std::to_string(fn));
    return g;
}

namespace detail {

inline Vector vech_strict(const Matrix& a) {
    const Index n = a.rows();
    Vector v(n * (n - 1) / 2);
    Index idx = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) v(idx++) = a(i, j);
    return v;
}

// Min-norm Newton iteration for (x - anchor) T (x - anchor)^T + alpha0 = 0
// over x in R^{n x w}; used as a projection-like retraction onto the
// constraint manifold starting from a nearby target.
inline std::optional<Matrix> newton_skew_projection(const Matrix& anchor, const Matrix& T,
                                                    const Matrix& alpha0, Matrix x, double tol,
                                                    int max_iter = 30) {
    const Index n = x.rows(), w = x.cols();
    const Index rows = n * (n - 1) / 2;
    auto violation = [&](const Matrix& y) {
        const Matrix bb = y - anchor;
        return antisymmetric_part(bb * T * bb.transpose() + alpha0);
    };
    Matrix g = violation(x);
    for (int iter = 0; iter < max_iter; ++iter) {
        const double gn = g.norm();
        if (gn <= tol) return x;
        const Matrix bb = x - anchor;
        const Matrix tbt = T * bb.transpose();  // w x n
        Matrix jac(rows, n * w);
        for (Index c = 0; c < w; ++c) {
            const Vector u = tbt.row(c).transpose();
            for (Index r = 0; r < n; ++r) {
                const Index colidx = c * n + r;
                Index idx = 0;
                for (Index i = 0; i < n; ++i)
                    for (Index j = i + 1; j < n; ++j) {
                        double v = 0.0;
                        if (i == r) v += u(j);
                        if (j == r) v -= u(i);
                        jac(idx++, colidx) = v;
                    }
            }
        }
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(jac);
        const Vector step = cod.solve(-vech_strict(g));
        Matrix delta = Eigen::Map<const Matrix>(step.data(), n, w);

        double damp = 1.0;
        bool moved = false;
        for (int k = 0; k < 20; ++k) {
            const Matrix cand = x + damp * delta;
            const Matrix gc = violation(cand);
            if (gc.norm() < gn) {
                x = cand;
                g = gc;
                moved = true;
                break;
            }
            damp *= 0.5;
        }
        if (!moved) return std::nullopt;
    }
    return g.norm() <= tol ? std::optional<Matrix>(x) : std::nullopt;
}

}  // namespace detail

// Nearest-point style retraction of a target gain pair onto the constraint
// manifold: min-norm Newton correction of the full gain matrix, falling back
// to the constructive split solutions when Newton stalls.
inline LuenbergerGains retract_gains(const GainConstraintData& data,
                                     const LuenbergerGains& target, double tol = -1.0) {
    if (tol < 0.0) tol = 0.1 * data.feasibility_tol();
    const auto projected = detail::newton_skew_projection(data.gamma0, data.K, data.mho,
                                                          target.gamma(), tol);
    if (projected) return data.split(*projected);
    if (data.p1 >= data.n) return solve_gain_constraint_around_b(data, target.b);
    if (data.m2 >= data.n) return solve_gain_constraint_around_e(data, target.e);
    return solve_gain_constraint_particular(data);
}

struct LuenbergerClosedLoop {
    Matrix sA;  // 2n x 2n block lower triangular
    Matrix sB;  // 2n x (m1+m2)
    Matrix sC;  // r x 2n
    Matrix S;   // frame matrix [[I,-I],[0,I]]
    Matrix Xi;  // CCR matrix of the (difference, controller) frame
    Matrix A_minus_eC;
    Matrix A_plus_Ec;
    StabilityReport estimator_stability;  // A - eC
    StabilityReport feedback_stability;   // A + Ec
    double constraint_norm = 0.0;

    Index n() const { return A_minus_eC.rows(); }
    bool internally_stable() const {
        return estimator_stability.hurwitz && feedback_stability.hurwitz;
    }
};

inline LuenbergerClosedLoop assemble_luenberger_loop(const QuantumPlant& plant,
                                                     const LuenbergerGains& gains,
                                                     const CcrAlgebra& alg, const Matrix& d_feed,
                                                     bool enforce_feasibility = true,
                                                     double hurwitz_margin = kDefaultHurwitzMargin) {
    const Index n = plant.n();
    const GainConstraintData data = build_constraint_data(plant, alg, d_feed);
    const ConstraintResidual res = constraint_residual(gains, data);
    if (enforce_feasibility && res.norm > data.feasibility_tol())
        throw InfeasibleGains("gain constraint residual " + std::to_string(res.norm) +
                              " exceeds tolerance " + std::to_string(data.feasibility_tol()));

    const Matrix c = c_from_b(gains.b, plant, d_feed, alg);

    LuenbergerClosedLoop loop;
    loop.constraint_norm = res.norm;
    loop.A_minus_eC = plant.A - gains.e * plant.C;
    loop.A_plus_Ec = plant.A + plant.E * c;

    loop.sA = Matrix::Zero(2 * n, 2 * n);
    loop.sA.topLeftCorner(n, n) = loop.A_minus_eC;
    loop.sA.bottomLeftCorner(n, n) = gains.e * plant.C;
    loop.sA.bottomRightCorner(n, n) = loop.A_plus_Ec;

    loop.sB.resize(2 * n, alg.m());
    loop.sB.topLeftCorner(n, alg.m1) = plant.B - gains.e * plant.D;
    loop.sB.topRightCorner(n, alg.m2) = plant.E * d_feed - gains.b;
    loop.sB.bottomLeftCorner(n, alg.m1) = gains.e * plant.D;
    loop.sB.bottomRightCorner(n, alg.m2) = gains.b;

    loop.sC.resize(plant.r(), 2 * n);
    loop.sC.leftCols(n) = plant.F;
    loop.sC.rightCols(n) = plant.F + plant.G * c;

    loop.S = Matrix::Zero(2 * n, 2 * n);
    loop.S.topLeftCorner(n, n) = Matrix::Identity(n, n);
    loop.S.topRightCorner(n, n) = -Matrix::Identity(n, n);
    loop.S.bottomRightCorner(n, n) = Matrix::Identity(n, n);

    loop.Xi = Matrix::Zero(2 * n, 2 * n);
    loop.Xi.topRightCorner(n, n) = plant.Theta1;
    loop.Xi.bottomLeftCorner(n, n) = plant.Theta1;
    loop.Xi.bottomRightCorner(n, n) = -plant.Theta1;

    loop.estimator_stability = is_hurwitz(loop.A_minus_eC, hurwitz_margin);
    loop.feedback_stability = is_hurwitz(loop.A_plus_Ec, hurwitz_margin);
    return loop;
}

// Randomized search over the feasible gain set: start from the particular
// solution, then alternate symplectic right-multiplication walks with
// re-anchoring through the split solutions whenever the dimension conditions
// allow.  Existence of stabilizing feasible gains is an open question, so
// exhausting the budget is a legitimate outcome, reported as nullopt.
inline std::optional<LuenbergerGains> search_stabilizing_gains(
    const QuantumPlant& plant, const CcrAlgebra& alg, const Matrix& d_feed, int budget,
    uint64_t seed, double margin = 1e-6) {
    const GainConstraintData data = build_constraint_data(plant, alg, d_feed);
    if (data.m2 + data.p1 < data.n)
        throw DimensionDeficit("search_stabilizing_gains: m2 + p1 < n");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto randn = [&](Index r, Index c) {
        Matrix m(r, c);
        for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < c; ++j) m(i, j) = gauss(rng);
        return m;
    };

    auto stabilizing = [&](const LuenbergerGains& g) {
        const Matrix c = c_from_b(g.b, plant, d_feed, alg);
        const auto est = is_hurwitz(plant.A - g.e * plant.C, margin);
        if (!est.hurwitz) return false;
        const auto fbk = is_hurwitz(plant.A + plant.E * c, margin);
        return fbk.hurwitz;
    };

    LuenbergerGains current = solve_gain_constraint_particular(data);
    if (stabilizing(current)) return current;

    const double base_scale = std::max({1.0, data.b0.norm(), data.e0.norm()});
    const Index nk = data.m2 + data.p1;
    for (int attempt = 1; attempt < budget; ++attempt) {
        int move = attempt % 3;
        if (move == 1 && data.p1 < data.n) move = 0;
        if (move == 2 && data.m2 < data.n) move = 0;
        try {
            if (move == 0) {
                // Symplectic walk: gamma0 + beta sigma stays on the manifold.
                const double tau = 0.2 + 1.3 * unif(rng);
                const Matrix sym = symmetric_part(randn(nk, nk));
                const Matrix sigma = (data.K * sym * tau).exp();
                current = data.split(data.gamma0 +
                                     (current.gamma() - data.gamma0) * sigma);
            } else if (move == 1) {
                const double mag = base_scale * std::pow(10.0, -1.0 + 1.5 * unif(rng));
                current = solve_gain_constraint_around_b(data, data.b0 + mag * randn(data.n, data.m2));
            } else {
                const double mag = base_scale * std::pow(10.0, -1.0 + 1.5 * unif(rng));
                current = solve_gain_constraint_around_e(data, data.e0 + mag * randn(data.n, data.p1));
            }
        } catch (const Error&) {
            continue;  // a degenerate draw; move on
        }
        if (stabilizing(current)) return current;
    }
    return std::nullopt;
}

}  // namespace cqlqg
