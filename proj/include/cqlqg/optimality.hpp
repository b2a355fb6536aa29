#pragma once

#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "cqlqg/cost.hpp"
#include "cqlqg/luenberger.hpp"
#include "cqlqg/systems.hpp"

// First-order optimality machinery for the Luenberger controller class:
// partial Frechet derivatives of the cost in the gain matrices, the sandwich
// operators entering the stationarity equations, Lagrangian residuals, and a
// stationarity-seeking iteration with a matrix-valued multiplier.

namespace cqlqg {

// Sum of maps theta |-> phi theta psi.  Self-adjoint in the Frobenius inner
// product whenever every (phi, psi) pair is both-symmetric or
// both-antisymmetric.
struct SandwichOperator {
    struct Term {
        Matrix left;
        Matrix right;
    };
    std::vector<Term> terms;

    Matrix apply(const Matrix& x) const {
        Matrix y = Matrix::Zero(x.rows(), x.cols());
        for (const Term& t : terms) y += t.left * x * t.right;
        return y;
    }

    bool structurally_self_adjoint(double tol = 1e-10) const {
        for (const Term& t : terms) {
            const double ls = symmetric_part(t.left).norm();
            const double la = antisymmetric_part(t.left).norm();
            const double rs = symmetric_part(t.right).norm();
            const double ra = antisymmetric_part(t.right).norm();
            const double lscale = unit_floor(t.left.norm());
            const double rscale = unit_floor(t.right.norm());
            const bool both_sym = la <= tol * lscale && ra <= tol * rscale;
            const bool both_antisym = ls <= tol * lscale && rs <= tol * rscale;
            if (!both_sym && !both_antisym) return false;
        }
        return true;
    }
};

namespace detail {

inline Matrix theta1_inverse(const QuantumPlant& plant) {
    Eigen::PartialPivLU<Matrix> lu(plant.Theta1);
    return lu.inverse();
}

// Gramian blocks must correspond to the loop induced by the given gains.
inline void require_fresh_blocks(const QuantumPlant& plant, const LuenbergerGains& gains,
                                 const GramianBlocks& blocks, const CcrAlgebra& alg,
                                 const Matrix& d_feed) {
    const LuenbergerClosedLoop loop =
        assemble_luenberger_loop(plant, gains, alg, d_feed, /*enforce_feasibility=*/false);
    const double sp = std::max({1.0, loop.sA.norm() * blocks.sP.norm(), loop.sB.norm()});
    const double sq = std::max({1.0, loop.sA.norm() * blocks.sQ.norm(), loop.sC.norm()});
    const double res_p =
        (loop.sA * blocks.sP + blocks.sP * loop.sA.transpose() + loop.sB * loop.sB.transpose())
            .norm();
    const double res_q =
        (loop.sA.transpose() * blocks.sQ + blocks.sQ * loop.sA + loop.sC.transpose() * loop.sC)
            .norm();
    if (res_p > 1e-6 * sp || res_q > 1e-6 * sq)
        throw StaleGramians("Gramian blocks do not solve the equations for these gains");
}

}  // namespace detail

struct GradV {
    Matrix db;  // n x m2
    Matrix de;  // n x p1
};

// Partial Frechet derivatives of the cost in the controller gain matrices.
inline GradV grad_V(const QuantumPlant& plant, const LuenbergerGains& gains,
                    const GramianBlocks& blocks, const CcrAlgebra& alg, const Matrix& d_feed) {
    detail::require_fresh_blocks(plant, gains, blocks, alg, d_feed);
    const Matrix th_inv = detail::theta1_inverse(plant);
    const Matrix ed = plant.E * d_feed;
    const Matrix q21_m_q11 = blocks.Q21 - blocks.Q11;
    const Matrix h22 = blocks.H22();

    GradV g;
    g.db = q21_m_q11 * ed +
           th_inv *
               (h22.transpose() * plant.E +
                (blocks.P12.transpose() + blocks.P22) * plant.F.transpose() * plant.G) *
               d_feed * alg.J2 +
           blocks.q * gains.b +
           th_inv * blocks.P22 * th_inv * gains.b * alg.J2 * d_feed.transpose() *
               plant.G.transpose() * plant.G * d_feed * alg.J2;
    g.de = (blocks.H21() - blocks.H11()) * plant.C.transpose() +
           q21_m_q11 * plant.B * plant.D.transpose() + blocks.q * gains.e;
    return g;
}

// The operators acting on b and e in the stationarity equations.
inline std::pair<SandwichOperator, SandwichOperator> build_fB_fE(const QuantumPlant& plant,
                                                                 const GramianBlocks& blocks,
                                                                 const Matrix& lambda,
                                                                 const CcrAlgebra& alg,
                                                                 const Matrix& d_feed) {
    require_square(lambda, "build_fB_fE: lambda");
    if (lambda.rows() != plant.n())
        throw DimensionMismatch("build_fB_fE: lambda must be n x n");
    const Matrix th_inv = detail::theta1_inverse(plant);
    const Matrix gd = plant.G * d_feed;

    SandwichOperator fb;
    fb.terms.push_back({blocks.q, Matrix::Identity(alg.m2, alg.m2)});
    fb.terms.push_back({th_inv * blocks.P22 * th_inv,
                        alg.J2 * gd.transpose() * gd * alg.J2});
    fb.terms.push_back({-lambda, alg.J2});

    SandwichOperator fe;
    fe.terms.push_back({blocks.q, Matrix::Identity(alg.p1, alg.p1)});
    fe.terms.push_back({-lambda, alg.tilde_j1()});

    if (!fb.structurally_self_adjoint() || !fe.structurally_self_adjoint())
        throw NumericalError("build_fB_fE: operator terms lost their symmetry structure");
    return {std::move(fb), std::move(fe)};
}

struct StationarityResiduals {
    Matrix rb;  // dL/db
    Matrix re;  // dL/de

    double max_norm() const { return std::max(rb.norm(), re.norm()); }
};

// Lagrangian gradients in sandwich form.
inline StationarityResiduals stationarity_residuals(const QuantumPlant& plant,
                                                    const LuenbergerGains& gains,
                                                    const Matrix& lambda,
                                                    const GramianBlocks& blocks,
                                                    const CcrAlgebra& alg,
                                                    const Matrix& d_feed) {
    detail::require_fresh_blocks(plant, gains, blocks, alg, d_feed);
    auto [fb, fe] = build_fB_fE(plant, blocks, lambda, alg, d_feed);
    const Matrix th_inv = detail::theta1_inverse(plant);
    const Matrix ed = plant.E * d_feed;
    const Matrix q21_m_q11 = blocks.Q21 - blocks.Q11;

    StationarityResiduals res;
    res.rb = q21_m_q11 * ed + lambda * ed * alg.J2 +
             th_inv *
                 (blocks.H22().transpose() * plant.E +
                  (blocks.P12.transpose() + blocks.P22) * plant.F.transpose() * plant.G) *
                 d_feed * alg.J2 +
             fb.apply(gains.b);
    res.re = q21_m_q11 * plant.B * plant.D.transpose() +
             lambda * plant.B * alg.J1 * plant.D.transpose() +
             (blocks.H21() - blocks.H11()) * plant.C.transpose() + fe.apply(gains.e);
    return res;
}

// Multiplier directions: dL/db = dV/db + lambda Xb, dL/de = dV/de + lambda Xe.
inline std::pair<Matrix, Matrix> multiplier_directions(const QuantumPlant& plant,
                                                       const LuenbergerGains& gains,
                                                       const CcrAlgebra& alg,
                                                       const Matrix& d_feed) {
    const Matrix xb = (plant.E * d_feed - gains.b) * alg.J2;
    const Matrix xe = plant.B * alg.J1 * plant.D.transpose() - gains.e * alg.tilde_j1();
    return {xb, xe};
}

// Least-squares estimate of the antisymmetric multiplier minimizing
// ||gV.db + lambda Xb||^2 + ||gV.de + lambda Xe||^2.
inline Matrix multiplier_least_squares(const GradV& grad, const Matrix& xb, const Matrix& xe) {
    const Index n = grad.db.rows();
    const Index nb = grad.db.cols(), ne = grad.de.cols();
    const Index unknowns = n * (n - 1) / 2;
    if (unknowns == 0) return Matrix::Zero(n, n);

    Matrix sys(n * (nb + ne), unknowns);
    Vector rhs(n * (nb + ne));
    Index col = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            // basis element E_ij - E_ji applied from the left
            Matrix mb = Matrix::Zero(n, nb);
            mb.row(i) = xb.row(j);
            mb.row(j) = -xb.row(i);
            Matrix me = Matrix::Zero(n, ne);
            me.row(i) = xe.row(j);
            me.row(j) = -xe.row(i);
            sys.block(0, col, n * nb, 1) = vec(mb);
            sys.block(n * nb, col, n * ne, 1) = vec(me);
            ++col;
        }
    rhs.head(n * nb) = -vec(grad.db);
    rhs.tail(n * ne) = -vec(grad.de);
    const Vector coef = sys.colPivHouseholderQr().solve(rhs);

    Matrix lambda = Matrix::Zero(n, n);
    col = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            lambda(i, j) = coef(col);
            lambda(j, i) = -coef(col);
            ++col;
        }
    return lambda;
}

// One full evaluation of the Luenberger loop at given gains.
struct LoopEvaluation {
    LuenbergerClosedLoop loop;
    GramianBlocks blocks;
    ConstraintResidual constraint;
    double cost = 0.0;
    bool stable = false;
};

inline std::optional<LoopEvaluation> evaluate_gains(const QuantumPlant& plant,
                                                    const LuenbergerGains& gains,
                                                    const CcrAlgebra& alg, const Matrix& d_feed,
                                                    double margin = kDefaultHurwitzMargin) {
    LoopEvaluation ev;
    ev.loop = assemble_luenberger_loop(plant, gains, alg, d_feed,
                                       /*enforce_feasibility=*/false, margin);
    const GainConstraintData data = build_constraint_data(plant, alg, d_feed);
    ev.constraint = constraint_residual(gains, data);
    ev.stable = ev.loop.internally_stable();
    if (!ev.stable) return std::nullopt;
    ev.blocks = gramian_blocks(ev.loop);
    ev.cost = luenberger_cost(ev.loop, ev.blocks).value();
    return ev;
}

// Cost of the Luenberger loop as a plain function of the gains; throws
// NotHurwitz when the loop is unstable.
inline double cost_at_gains(const QuantumPlant& plant, const LuenbergerGains& gains,
                            const CcrAlgebra& alg, const Matrix& d_feed,
                            double margin = kDefaultHurwitzMargin) {
    const auto ev = evaluate_gains(plant, gains, alg, d_feed, margin);
    if (!ev) throw NotHurwitz("cost_at_gains: closed loop is not internally stable");
    return ev->cost;
}

inline double lagrangian_at_gains(const QuantumPlant& plant, const LuenbergerGains& gains,
                                  const Matrix& lambda, const CcrAlgebra& alg,
                                  const Matrix& d_feed,
                                  double margin = kDefaultHurwitzMargin) {
    const double v = cost_at_gains(plant, gains, alg, d_feed, margin);
    const GainConstraintData data = build_constraint_data(plant, alg, d_feed);
    const ConstraintResidual res = constraint_residual(gains, data);
    return v + 0.5 * (lambda.transpose() * res.f).trace();
}

struct StationaritySolveOptions {
    double tol = 1e-6;
    int max_iter = 500;
    double rho0 = 1.0;
    double hurwitz_margin = kDefaultHurwitzMargin;
    bool use_retraction = true;
};

struct IterationRecord {
    int iter = 0;
    double lagrangian = 0.0;
    double cost = 0.0;
    double f_norm = 0.0;
    double rb_norm = 0.0;
    double re_norm = 0.0;
};

struct OptimalityState {
    LuenbergerGains gains;
    Matrix lambda;
    GramianBlocks blocks;
    Matrix grad_b, grad_e;      // cost gradients at the final gains
    StationarityResiduals residuals;
    Matrix constraint_res;      // f(gamma)
    double lagrangian = 0.0;
    double cost = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<IterationRecord> history;
};

// Stationarity-seeking iteration: projected gradient steps on the augmented
// Lagrangian with a multiplier that is dual-updated off the manifold and
// re-estimated by least squares on it.  Iterates are retracted back to the
// feasible set whenever the dimension conditions allow and are only accepted
// while both closed-loop blocks stay Hurwitz.
inline OptimalityState solve_stationarity(const QuantumPlant& plant, const CcrAlgebra& alg,
                                          const Matrix& d_feed, const LuenbergerGains& init,
                                          const StationaritySolveOptions& opts = {}) {
    if (opts.tol <= 0.0) throw ValidationError("solve_stationarity: tol must be positive");
    if (opts.max_iter < 0) throw ValidationError("solve_stationarity: max_iter must be >= 0");

    const GainConstraintData data = build_constraint_data(plant, alg, d_feed);
    const double feas_tol = data.feasibility_tol();
    const bool can_retract = opts.use_retraction && (data.m2 + data.p1 >= data.n);

    LuenbergerGains gains = init;
    if (!gains_feasible(gains, data)) {
        if (!can_retract) throw InfeasibleGains("solve_stationarity: infeasible initial gains");
        gains = retract_gains(data, gains);
    }
    auto ev = evaluate_gains(plant, gains, alg, d_feed, opts.hurwitz_margin);
    if (!ev) throw NotHurwitz("solve_stationarity: initial gains are not stabilizing");

    auto [xb, xe] = multiplier_directions(plant, gains, alg, d_feed);
    Matrix lambda = multiplier_least_squares(grad_V(plant, gains, ev->blocks, alg, d_feed), xb, xe);
    double rho = opts.rho0 > 0.0 ? opts.rho0 : 1.0;
    double trial_step = 1.0;
    int stalls = 0;

    OptimalityState state;
    double best_res = std::numeric_limits<double>::infinity();

    auto snapshot = [&](const StationarityResiduals& res, double lagrangian) {
        state.gains = gains;
        state.lambda = lambda;
        state.blocks = ev->blocks;
        const GradV g = grad_V(plant, gains, ev->blocks, alg, d_feed);
        state.grad_b = g.db;
        state.grad_e = g.de;
        state.residuals = res;
        state.constraint_res = ev->constraint.f;
        state.lagrangian = lagrangian;
        state.cost = ev->cost;
    };

    for (int iter = 0; iter < opts.max_iter + 1; ++iter) {
        const StationarityResiduals res =
            stationarity_residuals(plant, gains, lambda, ev->blocks, alg, d_feed);
        const double fn = ev->constraint.norm;
        const double lagr = ev->cost + 0.5 * (lambda.transpose() * ev->constraint.f).trace();
        state.history.push_back({iter, lagr, ev->cost, fn, res.rb.norm(), res.re.norm()});

        const double max_res = std::max({res.rb.norm(), res.re.norm(), fn});
        if (max_res < best_res) {
            best_res = max_res;
            snapshot(res, lagr);
            state.iterations = iter;
        }
        if (max_res <= opts.tol) {
            state.converged = true;
            break;
        }
        if (iter == opts.max_iter) break;

        // Step direction from the augmented multiplier.
        const Matrix lambda_rho = lambda + rho * ev->constraint.f;
        const StationarityResiduals dir =
            stationarity_residuals(plant, gains, lambda_rho, ev->blocks, alg, d_feed);
        const double dir_sq = dir.rb.squaredNorm() + dir.re.squaredNorm();
        const double l_rho_cur = lagr + 0.25 * rho * fn * fn;

        bool accepted = false;
        double t = trial_step;
        for (int bt = 0; bt < 45 && !accepted; ++bt, t *= 0.5) {
            LuenbergerGains cand;
            cand.b = gains.b - t * dir.rb;
            cand.e = gains.e - t * dir.re;
            if (can_retract) {
                try {
                    cand = retract_gains(data, cand);
                } catch (const Error&) {
                    continue;
                }
            }
            auto cev = evaluate_gains(plant, cand, alg, d_feed, opts.hurwitz_margin);
            if (!cev) continue;
            const double fn_c = cev->constraint.norm;
            const double l_c = cev->cost + 0.5 * (lambda.transpose() * cev->constraint.f).trace() +
                               0.25 * rho * fn_c * fn_c;
            const bool on_manifold = fn <= feas_tol && fn_c <= feas_tol;
            const bool v_ok = !on_manifold || cev->cost <= ev->cost + 1e-12 * unit_floor(ev->cost);
            if (l_c <= l_rho_cur - 1e-4 * t * dir_sq && v_ok) {
                gains = cand;
                ev = std::move(cev);
                accepted = true;
                trial_step = std::min(2.0 * t, 4.0);
            }
        }

        if (!accepted) {
            if (++stalls >= 3)
                throw LostStability("solve_stationarity: no acceptable stable step exists");
            rho = std::min(rho * 10.0, 1e8);
            trial_step = std::max(trial_step * 0.25, 1e-8);
        } else {
            stalls = 0;
        }

        // Dual update, then the on-manifold least-squares estimate.
        lambda += rho * ev->constraint.f;
        if (ev->constraint.norm <= feas_tol) {
            auto [xb2, xe2] = multiplier_directions(plant, gains, alg, d_feed);
            lambda = multiplier_least_squares(grad_V(plant, gains, ev->blocks, alg, d_feed),
                                              xb2, xe2);
        } else if (ev->constraint.norm > 0.5 * fn) {
            rho = std::min(rho * 2.0, 1e8);
        }
        lambda = antisymmetric_part(lambda);
    }
    return state;
}

struct GradCheckReport {
    double max_rel_err_cost = 0.0;  // grad_V against central differences of the cost
    double max_rel_err_lagr = 0.0;  // stationarity residuals against differences of L
    int directions = 0;
    double step = 0.0;
};

// Central finite-difference verification of both derivative chains along
// random unit directions in the joint (b, e) gain space.
inline GradCheckReport finite_difference_check(const QuantumPlant& plant,
                                               const LuenbergerGains& gains,
                                               const Matrix& lambda, const CcrAlgebra& alg,
                                               const Matrix& d_feed, int directions,
                                               double step_scale, uint64_t seed) {
    GradCheckReport rep;
    rep.directions = directions;
    const double h = step_scale > 0.0
                         ? step_scale
                         : 1e-6 * unit_floor(gains.gamma().norm());
    rep.step = h;
    if (directions == 0) return rep;

    const auto ev = evaluate_gains(plant, gains, alg, d_feed);
    if (!ev) throw NotHurwitz("finite_difference_check: loop is not internally stable");
    const GradV g = grad_V(plant, gains, ev->blocks, alg, d_feed);
    const StationarityResiduals res =
        stationarity_residuals(plant, gains, lambda, ev->blocks, alg, d_feed);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int k = 0; k < directions; ++k) {
        Matrix db(gains.b.rows(), gains.b.cols());
        Matrix de(gains.e.rows(), gains.e.cols());
        for (Index i = 0; i < db.size(); ++i) db.data()[i] = gauss(rng);
        for (Index i = 0; i < de.size(); ++i) de.data()[i] = gauss(rng);
        const double nrm = std::sqrt(db.squaredNorm() + de.squaredNorm());
        db /= nrm;
        de /= nrm;

        LuenbergerGains plus{gains.b + h * db, gains.e + h * de};
        LuenbergerGains minus{gains.b - h * db, gains.e - h * de};

        const double v_fd =
            (cost_at_gains(plant, plus, alg, d_feed) - cost_at_gains(plant, minus, alg, d_feed)) /
            (2.0 * h);
        const double v_an = (g.db.array() * db.array()).sum() + (g.de.array() * de.array()).sum();
        rep.max_rel_err_cost =
            std::max(rep.max_rel_err_cost,
                     std::abs(v_fd - v_an) / std::max({std::abs(v_an), std::abs(v_fd), 1e-12}));

        const double l_fd = (lagrangian_at_gains(plant, plus, lambda, alg, d_feed) -
                             lagrangian_at_gains(plant, minus, lambda, alg, d_feed)) /
                            (2.0 * h);
        const double l_an =
            (res.rb.array() * db.array()).sum() + (res.re.array() * de.array()).sum();
        rep.max_rel_err_lagr =
            std::max(rep.max_rel_err_lagr,
                     std::abs(l_fd - l_an) / std::max({std::abs(l_an), std::abs(l_fd), 1e-12}));
    }
    return rep;
}

}  // namespace cqlqg
