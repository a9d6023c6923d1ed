#include <doctest.h>

#include "dse/synthetic.hpp"
#include "dse/wls.hpp"
#include "oracles.hpp"

using namespace dse;

namespace {

WlsConfig equal_weights(Eigen::Index rows, double w = 1.0) { return {RVector::Constant(rows, w)}; }

}  // namespace

TEST_CASE("wls examples") {
    std::mt19937_64 rng(1);
    const CVector y = oracle::random_vector(rng, 4);
    CHECK((wls_estimate(CMatrix::Identity(4, 4), y, equal_weights(4)) - y).cwiseAbs().maxCoeff() <= 1e-14);

    CMatrix h(2, 1);
    h << 1.0, 1.0;
    CVector y2(2);
    y2 << 1.0, 3.0;
    CHECK(std::abs(wls_estimate(h, y2, equal_weights(2))(0) - 2.0) <= 1e-14);

    RVector w(2);
    w << 3.0, 1.0;
    CHECK(std::abs(wls_estimate(h, y2, {w})(0) - 1.5) <= 1e-14);
}

TEST_CASE("residual is orthogonal to the weighted columns") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.5, 4.0);
    for (int trial = 0; trial < 50; ++trial) {
        const CMatrix h = oracle::random_matrix(rng, 12, 5);
        const CVector y = oracle::random_vector(rng, 12);
        RVector w(12);
        for (auto& v : w) v = u(rng);
        const CVector x = wls_estimate(h, y, {w});
        const CVector g = h.adjoint() * w.cast<Complex>().asDiagonal() * (y - h * x);
        CHECK(g.norm() <= 1e-9 * y.norm());

        const CVector scaled = wls_estimate(h, y, {w * 37.5});
        CHECK((scaled - x).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("Monte Carlo covariance matches the information inverse") {
    std::mt19937_64 rng(3);
    const CMatrix h = oracle::random_matrix(rng, 9, 5);
    RVector var(9);
    std::uniform_real_distribution<double> u(0.01, 0.1);
    for (auto& v : var) v = u(rng);
    const WlsConfig cfg{var.cwiseInverse()};
    const WlsSolver solver(h, cfg);
    const CMatrix expect = (h.adjoint() * cfg.weights.cast<Complex>().asDiagonal() * h).inverse();
    const CVector x = oracle::random_vector(rng, 5);
    const int trials = 10000;
    CMatrix sum = CMatrix::Zero(5, 5);
    for (int k = 0; k < trials; ++k) {
        CVector y = h * x;
        for (Eigen::Index r = 0; r < 9; ++r) y(r) += complex_normal(rng, std::sqrt(var(r)));
        const CVector e = solver.solve(y) - x;
        sum += e * e.adjoint();
    }
    const CMatrix emp = sum / static_cast<double>(trials);
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(std::abs(emp(i, i).real() / expect(i, i).real() - 1.0) <= 0.1);
    CHECK((emp - expect).norm() <= 0.1 * expect.norm());
}

TEST_CASE("wls errors and tracking") {
    CMatrix h(3, 2);
    h << 1, 2, 2, 4, 3, 6;
    CHECK_THROWS_AS(wls_estimate(h, CVector::Zero(3), equal_weights(3)), ObservabilityError);
    CHECK_THROWS_AS(wls_estimate(CMatrix::Identity(2, 2), CVector::Zero(2), equal_weights(2, 0.0)), ArgumentError);
    RVector w(2);
    w << 1.0, -1.0;
    CHECK_THROWS_AS(WlsSolver(CMatrix::Identity(2, 2), {w}), ArgumentError);

    std::mt19937_64 rng(4);
    const CMatrix hh = oracle::random_matrix(rng, 6, 3);
    const WlsSolver solver(hh, equal_weights(6));
    const CMatrix ys = oracle::random_matrix(rng, 50, 6);
    const CMatrix a = wls_track(solver, ys, Execution::serial);
    const CMatrix b = wls_track(solver, ys, Execution::parallel);
    CHECK(a == b);
    CHECK((a.row(7).transpose() - solver.solve(ys.row(7).transpose())).cwiseAbs().maxCoeff() == 0.0);
}
