#include <catch2/catch_amalgamated.hpp>

#include "cqlqg/linalg.hpp"
#include "support.hpp"

using namespace cqlqg;
using cqlqg::testing::Rng;
using cqlqg::testing::randn;
using cqlqg::testing::random_antisymmetric;
using cqlqg::testing::random_hurwitz;

TEST_CASE("kron_sum basics") {
    Matrix z(1, 1);
    z << 0.0;
    CHECK(kron_sum(z, z)(0, 0) == 0.0);

    Matrix a(1, 1), b(1, 1);
    a << 2.0;
    b << 3.0;
    CHECK(kron_sum(a, b)(0, 0) == 5.0);
}

TEST_CASE("kron_sum eigenvalues are pairwise sums") {
    Rng rng(101);
    const Matrix a = randn(rng, 2, 2);
    const Matrix b = randn(rng, 2, 2);
    const auto ea = testing::sorted_eigenvalues(a);
    const auto eb = testing::sorted_eigenvalues(b);
    Matrix sums(4, 4);  // compare against a diagonal carrying all pairwise sums
    sums.setZero();
    std::vector<std::complex<double>> expected;
    for (const auto& x : ea)
        for (const auto& y : eb) expected.push_back(x + y);
    std::sort(expected.begin(), expected.end(), [](const auto& x, const auto& y) {
        if (x.real() != y.real()) return x.real() < y.real();
        return x.imag() < y.imag();
    });
    const auto actual = testing::sorted_eigenvalues(kron_sum(a, b));
    for (size_t i = 0; i < actual.size(); ++i)
        CHECK(std::abs(actual[i] - expected[i]) < 1e-10);
}

TEST_CASE("kron_sum is the vec operator of A X + X B^T") {
    Rng rng(102);
    for (int t = 0; t < 50; ++t) {
        const Index n = 1 + static_cast<Index>(rng() % 5);
        const Index k = 1 + static_cast<Index>(rng() % 5);
        const Matrix a = randn(rng, n, n);
        const Matrix b = randn(rng, k, k);
        const Matrix x = randn(rng, n, k);
        const Vector lhs = vec(a * x + x * b.transpose());
        const Vector rhs = kron_sum(a, b) * vec(x);
        CHECK((lhs - rhs).norm() <= 1e-12 * unit_floor(rhs.norm()));
    }
}

TEST_CASE("is_hurwitz basics") {
    const auto neg = is_hurwitz(-Matrix::Identity(3, 3), 1e-9);
    CHECK(neg.hurwitz);
    CHECK(neg.abscissa == Catch::Approx(-1.0));

    const auto rot = is_hurwitz(symplectic_unit(), 1e-9);
    CHECK_FALSE(rot.hurwitz);
    CHECK(std::abs(rot.abscissa) < 1e-12);

    Matrix tri(2, 2);
    tri << -1.0, 7.0, 0.0, 0.5;
    const auto mixed = is_hurwitz(tri);
    CHECK_FALSE(mixed.hurwitz);
    CHECK(mixed.abscissa == Catch::Approx(0.5));

    CHECK(is_hurwitz(Matrix(0, 0)).hurwitz);
}

TEST_CASE("lyapunov_solve basics") {
    const Matrix a = -Matrix::Identity(2, 2);
    const Matrix p = lyapunov_solve(a, 2.0 * Matrix::Identity(2, 2));
    CHECK((p - Matrix::Identity(2, 2)).norm() < 1e-12);

    CHECK(lyapunov_solve(a, Matrix::Zero(2, 2)).norm() == 0.0);
    CHECK(lyapunov_solve(Matrix(0, 0), Matrix(0, 0)).size() == 0);

    CHECK_THROWS_AS(lyapunov_solve(Matrix::Identity(2, 2), Matrix::Identity(2, 2)), NotHurwitz);
    CHECK_THROWS_AS(lyapunov_solve(symplectic_unit(), Matrix::Identity(2, 2)), NotHurwitz);
}

TEST_CASE("lyapunov_solve result is exactly symmetric and meets the residual bound") {
    Rng rng(103);
    for (int t = 0; t < 25; ++t) {
        const Index n = 2 + static_cast<Index>(rng() % 6);
        const Matrix a = random_hurwitz(rng, n);
        const Matrix b = randn(rng, n, n);
        const Matrix q = b * b.transpose();
        const Matrix p = lyapunov_solve(a, q);
        CHECK((p - p.transpose()).norm() == 0.0);
        const double res = (a * p + p * a.transpose() + q).norm();
        CHECK(res <= 1e-9 * std::max({1.0, a.norm() * p.norm(), q.norm()}));
    }
}

TEST_CASE("lyapunov_solve matches the integral Gramian") {
    Rng rng(104);
    const Matrix a = random_hurwitz(rng, 4);
    const Matrix b = randn(rng, 4, 3);
    const Matrix q = b * b.transpose();
    const Matrix p = lyapunov_solve(a, q);
    const Matrix p_quad = testing::gramian_quadrature(a, q);
    CHECK((p - p_quad).norm() <= 1e-6 * unit_floor(p.norm()));
}

TEST_CASE("sylvester_solve basics") {
    const Matrix i2 = Matrix::Identity(2, 2);
    CHECK((sylvester_solve(-i2, -i2, 2.0 * i2) - i2).norm() < 1e-12);

    Matrix a1(1, 1), a2(1, 1), q(1, 1);
    a1 << -2.0;
    a2 << -1.0;
    q << 3.0;
    CHECK(sylvester_solve(a1, a2, q)(0, 0) == Catch::Approx(1.0));

    // spectral overlap: A1 = 1, A2 = -1 makes A1 X + X A2^T singular
    a1 << 1.0;
    a2 << -1.0;
    CHECK_THROWS_AS(sylvester_solve(a1, a2, q), SingularSystem);
}

TEST_CASE("sylvester_solve agrees with an explicit vectorized solve") {
    Rng rng(105);
    for (int t = 0; t < 20; ++t) {
        const Index n = 2 + static_cast<Index>(rng() % 4);
        const Index k = 2 + static_cast<Index>(rng() % 4);
        const Matrix a1 = random_hurwitz(rng, n);
        const Matrix a2 = random_hurwitz(rng, k);
        const Matrix q = randn(rng, n, k);
        const Matrix x = sylvester_solve(a1, a2, q);

        // independent oracle: assemble the Kronecker operator by hand
        Matrix op = Eigen::kroneckerProduct(Matrix::Identity(k, k), a1) +
                    Eigen::kroneckerProduct(a2, Matrix::Identity(n, n));
        const Vector xs = op.partialPivLu().solve(-vec(q));
        CHECK((vec(x) - xs).norm() <= 1e-9 * unit_floor(xs.norm()));
    }
}

TEST_CASE("skew_factorize canonical inputs") {
    const auto id = skew_factorize(symplectic_unit(), true);
    CHECK((id.psi - Matrix::Identity(2, 2)).norm() < 1e-13);
    CHECK(id.rank == 2);

    const auto scaled = skew_factorize(2.0 * symplectic_unit(), true);
    CHECK((scaled.psi - std::sqrt(2.0) * Matrix::Identity(2, 2)).norm() < 1e-13);

    const auto stacked = skew_factorize(canonical_skew(2), true);
    CHECK((stacked.psi - Matrix::Identity(4, 4)).norm() < 1e-13);
}

TEST_CASE("skew_factorize round trip on random antisymmetric matrices") {
    Rng rng(106);
    for (int t = 0; t < 1000; ++t) {
        const Index mu = 2 * (1 + static_cast<Index>(rng() % 10));  // up to 20
        const Matrix w = random_antisymmetric(rng, mu);
        const auto fac = skew_factorize(w, false);
        const double res =
            (fac.psi * canonical_skew(mu / 2) * fac.psi.transpose() - w).norm();
        CHECK(res <= 1e-10 * unit_floor(w.norm()));
    }
}

TEST_CASE("skew_factorize rank-revealing path pads with zero columns") {
    Matrix w = Matrix::Zero(4, 4);
    w.topLeftCorner(2, 2) = symplectic_unit();
    const auto fac = skew_factorize(w, false);
    CHECK(fac.rank == 2);
    CHECK(fac.psi.col(2).norm() == 0.0);
    CHECK(fac.psi.col(3).norm() == 0.0);
    CHECK((fac.psi * canonical_skew(2) * fac.psi.transpose() - w).norm() < 1e-12);

    CHECK_THROWS_AS(skew_factorize(w, true), SingularInput);
}

TEST_CASE("skew_factorize input validation") {
    CHECK_THROWS_AS(skew_factorize(Matrix::Zero(3, 3), false), OddDimension);
    CHECK_THROWS_AS(skew_factorize(Matrix::Identity(2, 2), false), NotAntisymmetric);
    CHECK(skew_factorize(Matrix(0, 0), true).psi.size() == 0);
}

TEST_CASE("solve_skew_quadratic canonical and degenerate cases") {
    const Matrix k = canonical_skew(2);
    const Matrix beta = solve_skew_quadratic(k, symplectic_unit());
    Matrix expect(2, 4);
    expect << 1, 0, 0, 0, 0, 1, 0, 0;
    CHECK((beta - expect).norm() < 1e-13);

    const Matrix zero = solve_skew_quadratic(k, Matrix::Zero(2, 2));
    CHECK(zero.norm() == 0.0);

    CHECK_THROWS_AS(solve_skew_quadratic(symplectic_unit(), Matrix::Zero(4, 4)),
                    DimensionMismatch);
    CHECK_THROWS_AS(solve_skew_quadratic(canonical_skew(2), Matrix::Zero(1, 1)),
                    DimensionMismatch);
}

TEST_CASE("solve_skew_quadratic satisfies the equation on random data") {
    Rng rng(107);
    for (int t = 0; t < 200; ++t) {
        const Index mu = 2 * (1 + static_cast<Index>(rng() % 8));
        const Index nu = 2 * (1 + static_cast<Index>(rng() % (mu / 2)));
        const Matrix k = testing::random_ccr(rng, mu);
        const Matrix alpha = random_antisymmetric(rng, nu);
        const Matrix beta = solve_skew_quadratic(k, alpha);
        const double res = (beta * k * beta.transpose() - alpha).norm();
        CHECK(res <= 1e-10 * std::max({1.0, alpha.norm(), k.norm()}));
    }
}
