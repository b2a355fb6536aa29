#pragma once

#include <algorithm>
#include <complex>
#include <optional>
#include <random>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "cqlqg/cost.hpp"
#include "cqlqg/luenberger.hpp"
#include "cqlqg/optimality.hpp"
#include "cqlqg/systems.hpp"

// Shared generators and independent oracles for the test suites.  Everything
// is seeded explicitly so runs are reproducible.

namespace cqlqg::testing {

using Rng = std::mt19937_64;

inline Matrix randn(Rng& rng, Index rows, Index cols, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

inline Matrix random_symmetric(Rng& rng, Index n, double scale = 1.0) {
    return symmetric_part(randn(rng, n, n, scale));
}

inline Matrix random_antisymmetric(Rng& rng, Index n, double scale = 1.0) {
    return antisymmetric_part(randn(rng, n, n, scale));
}

// Nonsingular antisymmetric matrix G (I (x) bJ) G^T with well-conditioned G.
inline Matrix random_ccr(Rng& rng, Index n, double scale = 1.0) {
    while (true) {
        const Matrix g = randn(rng, n, n, scale);
        Eigen::JacobiSVD<Matrix> svd(g);
        if (svd.singularValues()(n - 1) > 0.15 * svd.singularValues()(0)) {
            return g * canonical_skew(n / 2) * g.transpose();
        }
    }
}

inline Matrix random_hurwitz(Rng& rng, Index n, double scale = 1.0) {
    Matrix a = randn(rng, n, n, scale);
    const double abscissa = is_hurwitz(a, 0.0).abscissa;
    std::uniform_real_distribution<double> shift(0.3, 1.2);
    a -= (abscissa + shift(rng)) * Matrix::Identity(n, n);
    return a;
}

struct Dims {
    Index n = 2, m1 = 2, m2 = 2, p1 = 2, p2 = 2, r = 2;
};

struct Instance {
    Dims dims;
    CcrAlgebra algebra;
    QuantumPlant plant;
    Matrix d;  // controller feedthrough
};

inline Instance random_instance(Rng& rng, const Dims& dims, double coupling_scale = 1.0) {
    Instance inst;
    inst.dims = dims;
    inst.algebra = build_ccr_algebra(dims.m1, dims.m2, dims.p1, dims.p2);
    EnergyCouplingParams par;
    par.R = random_symmetric(rng, dims.n, 0.6);
    par.M = randn(rng, dims.m1, dims.n, coupling_scale);
    par.L = randn(rng, dims.p2, dims.n, 0.7);
    const Matrix theta1 = random_ccr(rng, dims.n, 0.8);
    const Matrix d_plant = canonical_feedthrough(dims.p1, dims.m1);
    Matrix f = randn(rng, dims.r, dims.n, 1.0);
    Matrix g;
    do {
        g = randn(rng, dims.r, dims.p2, 1.0);
    } while (Eigen::ColPivHouseholderQR<Matrix>(g).rank() != dims.p2);
    inst.plant = plant_from_params(par, theta1, d_plant, f, g, inst.algebra);
    inst.d = canonical_feedthrough(dims.p2, dims.m2);
    return inst;
}

inline QuantumController random_controller(Rng& rng, const Instance& inst,
                                           std::optional<Matrix> theta2 = std::nullopt) {
    EnergyCouplingParams par;
    par.R = random_symmetric(rng, inst.dims.n, 0.6);
    par.M = randn(rng, inst.dims.m2, inst.dims.n, 1.0);
    par.L = randn(rng, inst.dims.p1, inst.dims.n, 0.7);
    const Matrix th = theta2 ? *theta2 : random_ccr(rng, inst.dims.n, 0.8);
    return controller_from_params(par, th, inst.d, inst.algebra);
}

// Instance plus stabilizing feasible gains, produced by re-drawing plants
// until the randomized search succeeds.
struct StableInstance {
    Instance inst;
    LuenbergerGains gains;
};

inline StableInstance stable_feasible_instance(Rng& rng, const Dims& dims,
                                               int search_budget = 400,
                                               int plant_tries = 60) {
    for (int t = 0; t < plant_tries; ++t) {
        Instance inst = random_instance(rng, dims);
        const uint64_t seed = rng();
        const auto gains =
            search_stabilizing_gains(inst.plant, inst.algebra, inst.d, search_budget, seed, 5e-3);
        if (gains) return {std::move(inst), *gains};
    }
    throw std::runtime_error("stable_feasible_instance: no stabilizable draw found");
}

// Luenberger controller induced by feasible gains (Theta2 = -Theta1).
inline QuantumController luenberger_controller(const Instance& inst,
                                               const LuenbergerGains& gains) {
    QuantumController ctrl;
    ctrl.b = gains.b;
    ctrl.e = gains.e;
    ctrl.d = inst.d;
    ctrl.Theta2 = -inst.plant.Theta1;
    ctrl.c = c_from_b(gains.b, inst.plant, inst.d, inst.algebra);
    ctrl.a = luenberger_a(inst.plant, gains, ctrl.c);
    ctrl.tildeJ2 = inst.d * inst.algebra.J2 * inst.d.transpose();
    return ctrl;
}

// integral_0^T exp(tA) Q exp(tA)^T dt by composite Simpson quadrature with a
// cached single-panel propagator.
inline Matrix gramian_quadrature(const Matrix& a, const Matrix& q, double decay = 1e-10,
                                 int panels = 4000) {
    const double abscissa = is_hurwitz(a, 0.0).abscissa;
    const double horizon = std::log(1.0 / decay) / (-abscissa);
    const double h = horizon / panels;
    const Matrix step = (h * a).exp();
    Matrix expo = Matrix::Identity(a.rows(), a.cols());
    Matrix sum = Matrix::Zero(a.rows(), a.cols());
    for (int k = 0; k <= panels; ++k) {
        const Matrix f = expo * q * expo.transpose();
        double w = (k == 0 || k == panels) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        sum += w * f;
        expo = expo * step;
    }
    return (h / 3.0) * sum;
}

// (1/2) integral_0^inf ||C exp(tA) B||_F^2 dt
inline double h2_quadrature(const Matrix& a, const Matrix& b, const Matrix& c,
                            double decay = 1e-10, int panels = 4000) {
    const double abscissa = is_hurwitz(a, 0.0).abscissa;
    const double horizon = std::log(1.0 / decay) / (-abscissa);
    const double h = horizon / panels;
    const Matrix step = (h * a).exp();
    Matrix expo = Matrix::Identity(a.rows(), a.cols());
    double sum = 0.0;
    for (int k = 0; k <= panels; ++k) {
        const double f = (c * expo * b).squaredNorm();
        double w = (k == 0 || k == panels) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        sum += w * f;
        expo = expo * step;
    }
    return 0.5 * (h / 3.0) * sum;
}

inline std::vector<std::complex<double>> sorted_eigenvalues(const Matrix& a) {
    Eigen::EigenSolver<Matrix> es(a, false);
    std::vector<std::complex<double>> ev(es.eigenvalues().data(),
                                         es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(ev.begin(), ev.end(), [](const auto& x, const auto& y) {
        if (x.real() != y.real()) return x.real() < y.real();
        return x.imag() < y.imag();
    });
    return ev;
}

inline double eigenvalue_multiset_distance(const Matrix& a, const Matrix& b) {
    const auto ea = sorted_eigenvalues(a);
    const auto eb = sorted_eigenvalues(b);
    double worst = 0.0;
    for (size_t i = 0; i < ea.size(); ++i) worst = std::max(worst, std::abs(ea[i] - eb[i]));
    return worst;
}

// Random symplectic element of Sp(K): exp(K S) with S symmetric.
inline Matrix random_symplectic(Rng& rng, const Matrix& k, double scale = 0.5) {
    const Matrix s = random_symmetric(rng, k.rows(), scale);
    return (k * s).exp();
}

}  // namespace cqlqg::testing
