#include <catch2/catch_amalgamated.hpp>

#include "cqlqg/optimality.hpp"
#include "support.hpp"

using namespace cqlqg;
using cqlqg::testing::Rng;
using cqlqg::testing::randn;

namespace {

struct Prepared {
    testing::StableInstance st;
    LoopEvaluation ev;
};

Prepared prepared_instance(Rng& rng, const testing::Dims& dims) {
    Prepared p{testing::stable_feasible_instance(rng, dims), {}};
    auto ev = evaluate_gains(p.st.inst.plant, p.st.gains, p.st.inst.algebra, p.st.inst.d);
    REQUIRE(ev.has_value());
    p.ev = *ev;
    return p;
}

}  // namespace

TEST_CASE("sandwich operators apply and classify") {
    Rng rng(501);
    SandwichOperator op;
    op.terms.push_back({Matrix::Identity(3, 3) * 2.0, Matrix::Identity(4, 4)});
    op.terms.push_back({testing::random_symmetric(rng, 3), testing::random_symmetric(rng, 4)});
    const Matrix x = randn(rng, 3, 4);
    CHECK((op.apply(x) - (2.0 * x + op.terms[1].left * x * op.terms[1].right)).norm() <
          1e-14);
    CHECK(op.structurally_self_adjoint());

    op.terms.push_back({testing::random_symmetric(rng, 3),
                        testing::random_antisymmetric(rng, 4)});
    CHECK_FALSE(op.structurally_self_adjoint());
}

TEST_CASE("fB reduces to the identity for unit q and zero data") {
    Rng rng(502);
    const auto p = prepared_instance(rng, {2, 2, 2, 2, 2, 2});
    GramianBlocks blocks = p.ev.blocks;
    blocks.q = Matrix::Identity(2, 2);
    blocks.P22 = Matrix::Zero(2, 2);
    const Matrix lambda0 = Matrix::Zero(2, 2);
    auto [fb, fe] = build_fB_fE(p.st.inst.plant, blocks, lambda0, p.st.inst.algebra,
                                p.st.inst.d);
    const Matrix x = randn(rng, 2, 2);
    CHECK((fb.apply(x) - x).norm() < 1e-14);
    CHECK((fe.apply(x) - x).norm() < 1e-14);  // q = I and lambda = 0
}

TEST_CASE("fB and fE are self-adjoint") {
    Rng rng(503);
    const auto p = prepared_instance(rng, {2, 4, 2, 2, 2, 3});
    const Matrix lambda = testing::random_antisymmetric(rng, 2);
    auto [fb, fe] = build_fB_fE(p.st.inst.plant, p.ev.blocks, lambda, p.st.inst.algebra,
                                p.st.inst.d);
    for (int t = 0; t < 20; ++t) {
        const Matrix u = randn(rng, 2, 2);
        const Matrix v = randn(rng, 2, 2);
        const double lhs = (fb.apply(u).transpose() * v).trace();
        const double rhs = (u.transpose() * fb.apply(v)).trace();
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));

        const Matrix ue = randn(rng, 2, 2);
        const Matrix ve = randn(rng, 2, 2);
        const double lhe = (fe.apply(ue).transpose() * ve).trace();
        const double rhe = (ue.transpose() * fe.apply(ve)).trace();
        CHECK(std::abs(lhe - rhe) <= 1e-10 * std::max(1.0, std::abs(lhe)));
    }
}

TEST_CASE("cost gradient matches finite differences") {
    Rng rng(504);
    for (int t = 0; t < 5; ++t) {
        const auto p = prepared_instance(rng, t % 2 == 0 ? testing::Dims{2, 2, 2, 2, 2, 2}
                                                         : testing::Dims{2, 4, 2, 2, 2, 3});
        const Matrix lambda = testing::random_antisymmetric(rng, 2);
        const auto rep = finite_difference_check(p.st.inst.plant, p.st.gains, lambda,
                                                 p.st.inst.algebra, p.st.inst.d, 20, 0.0,
                                                 rng());
        CHECK(rep.max_rel_err_cost <= 1e-5);
        CHECK(rep.max_rel_err_lagr <= 1e-5);
    }
}

TEST_CASE("gradients scale quadratically with the cost weights") {
    Rng rng(505);
    const auto p = prepared_instance(rng, {2, 2, 2, 2, 2, 2});
    const GradV g1 = grad_V(p.st.inst.plant, p.st.gains, p.ev.blocks, p.st.inst.algebra,
                            p.st.inst.d);
    const double v1 = p.ev.cost;

    testing::Instance doubled = p.st.inst;
    doubled.plant.F *= 2.0;
    doubled.plant.G *= 2.0;
    const auto ev2 = evaluate_gains(doubled.plant, p.st.gains, doubled.algebra, doubled.d);
    REQUIRE(ev2.has_value());
    const GradV g2 = grad_V(doubled.plant, p.st.gains, ev2->blocks, doubled.algebra, doubled.d);
    CHECK(ev2->cost == Catch::Approx(4.0 * v1).epsilon(1e-9));
    CHECK((g2.db - 4.0 * g1.db).norm() <= 1e-9 * unit_floor(g1.db.norm()));
    CHECK((g2.de - 4.0 * g1.de).norm() <= 1e-9 * unit_floor(g1.de.norm()));
}

TEST_CASE("stationarity residuals decompose into gradient plus multiplier terms") {
    Rng rng(506);
    for (int t = 0; t < 10; ++t) {
        const auto p = prepared_instance(rng, {2, 4, 2, 2, 2, 3});
        const Matrix lambda = testing::random_antisymmetric(rng, 2);

        const auto res = stationarity_residuals(p.st.inst.plant, p.st.gains, lambda,
                                                p.ev.blocks, p.st.inst.algebra, p.st.inst.d);
        const GradV g = grad_V(p.st.inst.plant, p.st.gains, p.ev.blocks, p.st.inst.algebra,
                               p.st.inst.d);
        auto [xb, xe] = multiplier_directions(p.st.inst.plant, p.st.gains, p.st.inst.algebra,
                                              p.st.inst.d);
        const double s = unit_floor(g.db.norm() + g.de.norm() + lambda.norm());
        CHECK((res.rb - (g.db + lambda * xb)).norm() <= 1e-12 * s * s);
        CHECK((res.re - (g.de + lambda * xe)).norm() <= 1e-12 * s * s);

        // lambda = 0 collapses the residuals onto the plain gradient
        const auto res0 = stationarity_residuals(p.st.inst.plant, p.st.gains,
                                                 Matrix::Zero(2, 2), p.ev.blocks,
                                                 p.st.inst.algebra, p.st.inst.d);
        CHECK((res0.rb - g.db).norm() <= 1e-13 * s);
        CHECK((res0.re - g.de).norm() <= 1e-13 * s);
    }
}

TEST_CASE("stale Gramian blocks are rejected") {
    Rng rng(507);
    const auto p = prepared_instance(rng, {2, 2, 2, 2, 2, 2});
    LuenbergerGains other = p.st.gains;
    other.b += Matrix::Ones(2, 2);
    CHECK_THROWS_AS(grad_V(p.st.inst.plant, other, p.ev.blocks, p.st.inst.algebra,
                           p.st.inst.d),
                    StaleGramians);
}

TEST_CASE("multiplier least squares recovers a planted multiplier") {
    Rng rng(508);
    const Matrix xb = randn(rng, 4, 4);
    const Matrix xe = randn(rng, 4, 2);
    const Matrix planted = testing::random_antisymmetric(rng, 4);
    GradV g;
    g.db = -planted * xb;
    g.de = -planted * xe;
    const Matrix fit = multiplier_least_squares(g, xb, xe);
    CHECK((fit - planted).norm() <= 1e-10 * unit_floor(planted.norm()));
}

TEST_CASE("solve_stationarity converges on a stabilizable instance") {
    Rng rng(509);
    const auto p = prepared_instance(rng, {2, 2, 2, 2, 2, 2});
    StationaritySolveOptions opts;
    opts.tol = 1e-6;
    opts.max_iter = 500;
    const auto state = solve_stationarity(p.st.inst.plant, p.st.inst.algebra, p.st.inst.d,
                                          p.st.gains, opts);
    CHECK(state.converged);
    CHECK(state.residuals.max_norm() <= 1e-6);
    CHECK(state.constraint_res.norm() <= 1e-6);
    CHECK(state.cost <= p.ev.cost + 1e-9 * unit_floor(p.ev.cost));

    const GainConstraintData data =
        build_constraint_data(p.st.inst.plant, p.st.inst.algebra, p.st.inst.d);
    double v_prev = std::numeric_limits<double>::infinity();
    for (const auto& rec : state.history) {
        CHECK(rec.f_norm <= 1.01 * data.feasibility_tol());
        CHECK(rec.cost <= v_prev + 1e-9 * unit_floor(rec.cost));
        v_prev = rec.cost;
    }

    // restarting at the stationary point terminates immediately
    const auto again = solve_stationarity(p.st.inst.plant, p.st.inst.algebra, p.st.inst.d,
                                          state.gains, opts);
    CHECK(again.converged);
    CHECK(again.iterations == 0);
    CHECK((again.gains.b - state.gains.b).norm() == 0.0);

    CHECK_THROWS_AS(solve_stationarity(p.st.inst.plant, p.st.inst.algebra, p.st.inst.d,
                                       p.st.gains, StationaritySolveOptions{-1.0}),
                    ValidationError);
}

TEST_CASE("cost is second-order flat along feasible directions at stationarity") {
    Rng rng(510);
    const auto p = prepared_instance(rng, {2, 2, 2, 2, 2, 2});
    StationaritySolveOptions opts;
    opts.tol = 1e-8;
    opts.max_iter = 2000;
    const auto state = solve_stationarity(p.st.inst.plant, p.st.inst.algebra, p.st.inst.d,
                                          p.st.gains, opts);
    REQUIRE(state.converged);
    const auto data = build_constraint_data(p.st.inst.plant, p.st.inst.algebra, p.st.inst.d);
    const double v0 = state.cost;
    const Matrix gamma = state.gains.gamma();

    // linearized constraint along a direction: delta K base^T - (.)^T
    const Matrix base = gamma - data.gamma0;
    const Matrix kbase = data.K * base.transpose();  // (m2+p1) x n
    const Index w = data.m2 + data.p1;
    const Index rows = data.n * (data.n - 1) / 2;
    auto vech = [&](const Matrix& m) {
        Vector v(rows);
        Index idx = 0;
        for (Index i = 0; i < data.n; ++i)
            for (Index j = i + 1; j < data.n; ++j) v(idx++) = m(i, j);
        return v;
    };
    Matrix jac(rows, data.n * w);
    for (Index c = 0; c < w; ++c)
        for (Index r = 0; r < data.n; ++r) {
            Matrix unit = Matrix::Zero(data.n, w);
            unit(r, c) = 1.0;
            const Matrix lin = unit * kbase;
            jac.col(c * data.n + r) = vech(lin - lin.transpose());
        }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(jac);

    int tested = 0;
    for (int t = 0; t < 50; ++t) {
        // project a random direction onto the tangent space of the manifold
        Matrix dir = randn(rng, data.n, w);
        const Matrix lin = dir * kbase;
        const Vector corr = cod.solve(-vech(lin - lin.transpose()));
        dir += Eigen::Map<const Matrix>(corr.data(), data.n, w);
        const double dn = dir.norm();
        if (dn < 1e-8) continue;
        dir /= dn;

        auto value_at = [&](double step) -> std::optional<double> {
            const LuenbergerGains g2 = data.split(gamma + step * dir);
            const auto ev = evaluate_gains(p.st.inst.plant, g2, p.st.inst.algebra, p.st.inst.d);
            if (!ev) return std::nullopt;
            return ev->cost;
        };
        const auto v3 = value_at(1e-3);
        const auto v4 = value_at(1e-4);
        if (!v3 || !v4) continue;
        const double c3 = std::abs(*v3 - v0) / 1e-6;
        const double c4 = std::abs(*v4 - v0) / 1e-8;
        // second-order behavior: the fitted curvature stays bounded as t shrinks
        CHECK(c4 <= 3.0 * c3 + 1e-3 * unit_floor(v0));
        ++tested;
    }
    CHECK(tested >= 30);
}
