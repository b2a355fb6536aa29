#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "cqlqg/errors.hpp"

// Dense real matrix kernels shared by the whole toolkit: Lyapunov/Sylvester
// solvers via Kronecker-sum vectorization, Hurwitz tests, and the canonical
// factorization of antisymmetric matrices that underpins the quadratic gain
// equations.  Everything here is sized for desk-scale problems (n <= ~24);
// the solvers use dense LU on the vectorized system on purpose, so that the
// vec identity they are tested against is also the method of solution.

namespace cqlqg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Index = Eigen::Index;

inline constexpr double kDefaultRtol = 1e-9;
inline constexpr double kDefaultHurwitzMargin = 1e-9;
inline constexpr double kSkewRtol = 1e-10;
inline constexpr double kSkewRankTol = 1e-11;
inline constexpr double kAntisymCheckTol = 1e-8;

inline double unit_floor(double x) { return std::max(1.0, x); }

// 2x2 block [[0,1],[-1,0]]; the building block of every CCR/Ito matrix here.
inline Matrix symplectic_unit() {
    Matrix j(2, 2);
    j << 0.0, 1.0, -1.0, 0.0;
    return j;
}

// I_pairs (x) [[0,1],[-1,0]]
inline Matrix canonical_skew(Index pairs) {
    Matrix j = Matrix::Zero(2 * pairs, 2 * pairs);
    for (Index k = 0; k < pairs; ++k) {
        j(2 * k, 2 * k + 1) = 1.0;
        j(2 * k + 1, 2 * k) = -1.0;
    }
    return j;
}

inline Matrix symmetric_part(const Matrix& x) { return 0.5 * (x + x.transpose()); }
inline Matrix antisymmetric_part(const Matrix& x) { return 0.5 * (x - x.transpose()); }

inline void require_square(const Matrix& a, const char* name) {
    if (a.rows() != a.cols())
        throw DimensionMismatch(std::string(name) + " must be square, got " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
}

inline void require_antisymmetric(const Matrix& w, const char* name) {
    require_square(w, name);
    double defect = (w + w.transpose()).norm();
    if (defect > kAntisymCheckTol * unit_floor(w.norm()))
        throw NotAntisymmetric(std::string(name) + " asymmetry defect " + std::to_string(defect));
}

// Column-stacking vectorization; all Kronecker identities in this file use it.
inline Vector vec(const Matrix& x) {
    return Eigen::Map<const Vector>(x.data(), x.size());
}

inline Matrix unvec(const Vector& v, Index rows, Index cols) {
    if (v.size() != rows * cols)
        throw DimensionMismatch("unvec: size " + std::to_string(v.size()) + " vs " +
                                std::to_string(rows) + "x" + std::to_string(cols));
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

// Operator of X |-> A X + X B^T on vec(X), X being rows(A) x rows(B):
// I (x) A + B (x) I.  kron_sum(a, a) is the Kronecker sum a (+) a.
inline Matrix kron_sum(const Matrix& a, const Matrix& b) {
    require_square(a, "kron_sum: A");
    require_square(b, "kron_sum: B");
    const Index n = a.rows(), k = b.rows();
    return Eigen::kroneckerProduct(Matrix::Identity(k, k), a) +
           Eigen::kroneckerProduct(b, Matrix::Identity(n, n));
}

struct StabilityReport {
    bool hurwitz = false;
    double abscissa = 0.0;  // max real part of the spectrum
};

inline StabilityReport is_hurwitz(const Matrix& a, double margin = kDefaultHurwitzMargin) {
    require_square(a, "is_hurwitz: A");
    if (a.rows() == 0)
        return {true, -std::numeric_limits<double>::infinity()};
    Eigen::EigenSolver<Matrix> es(a, false);
    if (es.info() != Eigen::Success)
        throw NumericalError("eigenvalue iteration failed in is_hurwitz");
    const double abscissa = es.eigenvalues().real().maxCoeff();
    return {abscissa < -margin, abscissa};
}

// A P + P A^T + Q = 0 for Hurwitz A; the result is symmetrized.
inline Matrix lyapunov_solve(const Matrix& a, const Matrix& q,
                             double rtol = kDefaultRtol,
                             double margin = kDefaultHurwitzMargin) {
    require_square(a, "lyapunov_solve: A");
    require_square(q, "lyapunov_solve: Q");
    if (a.rows() != q.rows())
        throw DimensionMismatch("lyapunov_solve: A is " + std::to_string(a.rows()) +
                                ", Q is " + std::to_string(q.rows()));
    const Index n = a.rows();
    if (n == 0) return Matrix(0, 0);

    const StabilityReport stab = is_hurwitz(a, margin);
    if (!stab.hurwitz)
        throw NotHurwitz("lyapunov_solve: spectral abscissa " + std::to_string(stab.abscissa));

    const Matrix qs = symmetric_part(q);
    Eigen::FullPivLU<Matrix> lu(kron_sum(a, a));
    if (!lu.isInvertible())
        throw SingularSystem("lyapunov_solve: Kronecker-sum system is singular");
    Matrix p = unvec(lu.solve(-vec(qs)), n, n);
    p = symmetric_part(p);

    const double res = (a * p + p * a.transpose() + qs).norm();
    const double scale = std::max({1.0, a.norm() * p.norm(), qs.norm()});
    if (res > rtol * scale)
        throw SingularSystem("lyapunov_solve: residual " + std::to_string(res) +
                             " exceeds tolerance at scale " + std::to_string(scale));
    return p;
}

// A1 X + X A2^T + Q = 0 with X of shape rows(A1) x rows(A2).
inline Matrix sylvester_solve(const Matrix& a1, const Matrix& a2, const Matrix& q,
                              double rtol = kDefaultRtol) {
    require_square(a1, "sylvester_solve: A1");
    require_square(a2, "sylvester_solve: A2");
    if (q.rows() != a1.rows() || q.cols() != a2.rows())
        throw DimensionMismatch("sylvester_solve: Q must be " + std::to_string(a1.rows()) +
                                "x" + std::to_string(a2.rows()));
    const Index n = a1.rows(), k = a2.rows();
    if (n == 0 || k == 0) return Matrix(n, k);

    Eigen::FullPivLU<Matrix> lu(kron_sum(a1, a2));
    if (!lu.isInvertible())
        throw SingularSystem("sylvester_solve: spectra of A1 and -A2^T overlap");
    Matrix x = unvec(lu.solve(-vec(q)), n, k);

    const double res = (a1 * x + x * a2.transpose() + q).norm();
    const double scale = std::max({1.0, (a1.norm() + a2.norm()) * x.norm(), q.norm()});
    if (res > rtol * scale)
        throw SingularSystem("sylvester_solve: residual " + std::to_string(res) +
                             " exceeds tolerance");
    return x;
}

// Factor psi of an antisymmetric W with W = psi (I (x) bJ) psi^T.
// rank counts the columns carrying nonzero canonical blocks; the remaining
// columns of psi are zero and span nothing (they mark the kernel of W).
struct SkewFactorization {
    Matrix psi;
    Index half_order = 0;
    Index rank = 0;

    bool nonsingular() const { return rank == psi.rows(); }
};

// Canonical factorization of a real antisymmetric matrix.
//
// The invariant planes of W are recovered from the Hermitian matrix i*W and
// then re-based deterministically: within every eigenvalue cluster the block
// vectors are taken as projections of standard basis vectors (largest first),
// paired with their image under W.  That keeps the output reproducible and
// makes already-canonical inputs factor through the identity.  Blocks are
// ordered by descending theta with theta > 0; kernel directions become zero
// columns of psi.
inline SkewFactorization skew_factorize(const Matrix& w, bool require_nonsingular,
                                        double rtol = kSkewRtol) {
    require_square(w, "skew_factorize: W");
    const Index mu = w.rows();
    if (mu % 2 != 0)
        throw OddDimension("skew_factorize: order " + std::to_string(mu) + " is odd");
    require_antisymmetric(w, "skew_factorize: W");
    const Matrix wa = antisymmetric_part(w);

    SkewFactorization out;
    out.psi = Matrix::Zero(mu, mu);
    out.half_order = mu / 2;
    if (mu == 0) return out;

    const std::complex<double> iunit(0.0, 1.0);
    ComplexMatrix h = iunit * wa.cast<std::complex<double>>();
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
    if (es.info() != Eigen::Success)
        throw NumericalError("skew_factorize: Hermitian eigensolver failed");
    const Vector evals = es.eigenvalues();  // ascending
    const double scale = std::max(std::abs(evals(0)), std::abs(evals(mu - 1)));
    const double ztol = kSkewRankTol * unit_floor(scale);
    const double ctol = 1e-8 * unit_floor(scale);

    // Positive eigenvalues, descending.
    std::vector<Index> pos;
    for (Index i = mu - 1; i >= 0 && evals(i) > ztol; --i) pos.push_back(i);

    Index col = 0;
    size_t s = 0;
    while (s < pos.size()) {
        size_t t = s + 1;
        while (t < pos.size() && evals(pos[t - 1]) - evals(pos[t]) <= ctol) ++t;
        const Index sc = static_cast<Index>(t - s);

        // Real invariant subspace of the cluster, as an orthogonal projector.
        Matrix raw(mu, 2 * sc);
        for (Index k = 0; k < sc; ++k) {
            const ComplexVector u = es.eigenvectors().col(pos[s + k]);
            raw.col(2 * k) = std::sqrt(2.0) * u.real();
            raw.col(2 * k + 1) = std::sqrt(2.0) * u.imag();
        }
        Eigen::HouseholderQR<Matrix> qr(raw);
        const Matrix qc = qr.householderQ() * Matrix::Identity(mu, 2 * sc);
        Matrix proj = qc * qc.transpose();

        for (Index k = 0; k < sc; ++k) {
            Index jstar = 0;
            double best = -1.0;
            for (Index j = 0; j < mu; ++j) {
                const double nj = proj.col(j).norm();
                if (nj > best) {
                    best = nj;
                    jstar = j;
                }
            }
            Vector qv = proj.col(jstar);
            qv /= qv.norm();
            const Vector wq = wa * qv;
            const double th = wq.norm();
            if (!(th > 0.0))
                throw NumericalError("skew_factorize: degenerate block");
            Vector pv = -wq / th;
            pv = proj * pv;
            pv -= qv * qv.dot(pv);
            pv /= pv.norm();
            const double theta = qv.dot(wa * pv);
            if (!(theta > 0.0))
                throw NumericalError("skew_factorize: nonpositive block value");
            out.psi.col(col) = std::sqrt(theta) * qv;
            out.psi.col(col + 1) = std::sqrt(theta) * pv;
            col += 2;
            proj -= qv * qv.transpose() + pv * pv.transpose();
        }
        s = t;
    }
    out.rank = col;

    if (require_nonsingular && out.rank < mu)
        throw SingularInput("skew_factorize: rank " + std::to_string(out.rank) + " < " +
                            std::to_string(mu) + " but a nonsingular factor was requested");

    const double res = (out.psi * canonical_skew(out.half_order) * out.psi.transpose() - wa).norm();
    if (res > rtol * unit_floor(wa.norm()))
        throw NumericalError("skew_factorize: reconstruction residual " + std::to_string(res));
    return out;
}

// Particular solution beta of beta K beta^T = alpha with K nonsingular
// antisymmetric of order mu and alpha antisymmetric of even order nu <= mu;
// beta is the zero-padded factor of alpha pushed through the inverse factor
// of K.
inline Matrix solve_skew_quadratic(const Matrix& k, const Matrix& alpha,
                                   double rtol = kSkewRtol) {
    require_square(k, "solve_skew_quadratic: K");
    require_square(alpha, "solve_skew_quadratic: alpha");
    const Index mu = k.rows(), nu = alpha.rows();
    if (nu > mu)
        throw DimensionMismatch("solve_skew_quadratic: alpha order " + std::to_string(nu) +
                                " exceeds K order " + std::to_string(mu));
    if (nu % 2 != 0)
        throw DimensionMismatch("solve_skew_quadratic: alpha order must be even");
    if (mu == 0) return Matrix(0, 0);

    const SkewFactorization fk = skew_factorize(k, /*require_nonsingular=*/true, rtol);
    const SkewFactorization fa = skew_factorize(alpha, /*require_nonsingular=*/false, rtol);

    Matrix padded = Matrix::Zero(nu, mu);
    padded.leftCols(nu) = fa.psi;
    // beta = [phi 0] psi^{-1}
    Matrix beta = fk.psi.transpose().partialPivLu().solve(padded.transpose()).transpose();

    const double res = (beta * k * beta.transpose() - antisymmetric_part(alpha)).norm();
    const double scale = std::max({1.0, alpha.norm(), k.norm()});
    if (res > rtol * scale)
        throw NumericalError("solve_skew_quadratic: residual " + std::to_string(res));
    return beta;
}

}  // namespace cqlqg
