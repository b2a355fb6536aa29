#pragma once

#include <complex>
#include <vector>

#include "cqlqg/linalg.hpp"

// Ito/commutation structure of the field channels.  Channel counts come in
// conjugate pairs, so every count here is even; the CCR matrices are fixed
// Kronecker stacks of the 2x2 symplectic unit.

namespace cqlqg {

struct CcrAlgebra {
    Index m1 = 0;  // plant noise channels
    Index m2 = 0;  // controller noise channels
    Index p1 = 0;  // plant output channels
    Index p2 = 0;  // controller output channels
    Matrix bJ;     // 2x2 block
    Matrix J1;     // m1 x m1
    Matrix J2;     // m2 x m2
    Matrix J;      // (m1+m2) x (m1+m2), block diagonal of J1, J2

    Index m() const { return m1 + m2; }

    // Output CCR matrices; feedthrough selection keeps them canonical.
    Matrix tilde_j1() const { return canonical_skew(p1 / 2); }
    Matrix tilde_j2() const { return canonical_skew(p2 / 2); }

    ComplexMatrix omega1() const { return ito_matrix(J1); }
    ComplexMatrix omega2() const { return ito_matrix(J2); }
    ComplexMatrix omega() const { return ito_matrix(J); }

private:
    static ComplexMatrix ito_matrix(const Matrix& j) {
        const std::complex<double> iunit(0.0, 1.0);
        return ComplexMatrix::Identity(j.rows(), j.cols()) +
               iunit * j.cast<std::complex<double>>();
    }
};

inline CcrAlgebra build_ccr_algebra(Index m1, Index m2, Index p1, Index p2) {
    auto check_even_positive = [](Index v, const char* name) {
        if (v <= 0 || v % 2 != 0)
            throw OddChannelCount(std::string(name) + " must be even and positive, got " +
                                  std::to_string(v));
    };
    check_even_positive(m1, "m1");
    check_even_positive(m2, "m2");
    check_even_positive(p1, "p1");
    check_even_positive(p2, "p2");
    if (p1 > m1)
        throw OutputExceedsField("p1 = " + std::to_string(p1) + " exceeds m1 = " +
                                 std::to_string(m1));
    if (p2 > m2)
        throw OutputExceedsField("p2 = " + std::to_string(p2) + " exceeds m2 = " +
                                 std::to_string(m2));

    CcrAlgebra alg;
    alg.m1 = m1;
    alg.m2 = m2;
    alg.p1 = p1;
    alg.p2 = p2;
    alg.bJ = symplectic_unit();
    alg.J1 = canonical_skew(m1 / 2);
    alg.J2 = canonical_skew(m2 / 2);
    alg.J = Matrix::Zero(m1 + m2, m1 + m2);
    alg.J.topLeftCorner(m1, m1) = alg.J1;
    alg.J.bottomRightCorner(m2, m2) = alg.J2;
    return alg;
}

// Feedthrough built from conjugate channel pairs of an identity permutation:
// pair k (1-based) selects rows (2k-1, 2k).  The result satisfies D D^T = I
// and D (I (x) bJ) D^T = I (x) bJ by construction.
inline Matrix feedthrough_from_pairs(const std::vector<Index>& pairs, Index p, Index m) {
    if (p % 2 != 0 || m % 2 != 0)
        throw OddChannelCount("feedthrough dimensions must be even");
    if (static_cast<Index>(pairs.size()) != p / 2)
        throw BadFeedthrough("expected " + std::to_string(p / 2) + " channel pairs, got " +
                             std::to_string(pairs.size()));
    Matrix d = Matrix::Zero(p, m);
    std::vector<bool> used(static_cast<size_t>(m / 2), false);
    for (Index k = 0; k < p / 2; ++k) {
        const Index pr = pairs[static_cast<size_t>(k)];
        if (pr < 1 || pr > m / 2)
            throw BadFeedthrough("channel pair index " + std::to_string(pr) + " out of range 1.." +
                                 std::to_string(m / 2));
        if (used[static_cast<size_t>(pr - 1)])
            throw BadFeedthrough("channel pair " + std::to_string(pr) + " selected twice");
        used[static_cast<size_t>(pr - 1)] = true;
        d(2 * k, 2 * (pr - 1)) = 1.0;
        d(2 * k + 1, 2 * (pr - 1) + 1) = 1.0;
    }
    return d;
}

inline Matrix canonical_feedthrough(Index p, Index m) {
    std::vector<Index> pairs;
    for (Index k = 1; k <= p / 2; ++k) pairs.push_back(k);
    return feedthrough_from_pairs(pairs, p, m);
}

// D must satisfy D D^T = I and transport the channel CCR matrix to the
// canonical output form.
inline void validate_feedthrough(const Matrix& d, const Matrix& j_channels, const char* name) {
    const Index p = d.rows(), m = d.cols();
    if (p > m || p % 2 != 0 || m % 2 != 0 || j_channels.rows() != m)
        throw BadFeedthrough(std::string(name) + ": inconsistent dimensions");
    const double r1 = (d * d.transpose() - Matrix::Identity(p, p)).norm();
    const double r2 = (d * j_channels * d.transpose() - canonical_skew(p / 2)).norm();
    if (r1 > 1e-12 * unit_floor(d.norm() * d.norm()) || r2 > 1e-12 * unit_floor(d.norm() * d.norm()))
        throw BadFeedthrough(std::string(name) + ": rows are not conjugate pairs of a permutation (residuals " +
                             std::to_string(r1) + ", " + std::to_string(r2) + ")");
}

}  // namespace cqlqg
