#include <doctest.h>

#include "oracles.hpp"

using namespace dse;

namespace {

AugmentedCovariance scalar_cov(double g, double c = 0.0) {
    return {CMatrix::Constant(1, 1, g), CMatrix::Constant(1, 1, c)};
}

StateSpaceModel random_model(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m, bool proper) {
    StateSpaceModel model;
    model.f = oracle::random_matrix(rng, n, n, 0.35);
    model.h = oracle::random_matrix(rng, m, n, 1.0);
    model.q = oracle::random_statistics(rng, n, proper, 0.1);
    model.r = oracle::random_statistics(rng, m, proper, 0.5);
    return model;
}

}  // namespace

TEST_CASE("init") {
    const auto s = init(CVector::Zero(3), AugmentedCovariance::proper(CMatrix::Identity(3, 3)));
    CHECK(s.x_hat == CVector::Zero(3));
    CHECK(s.p.gamma == CMatrix::Identity(3, 3));
    CHECK(s.step == 0);
    CHECK_THROWS_AS(init(CVector::Zero(2), AugmentedCovariance::proper(CMatrix::Identity(3, 3))), ShapeError);
    CHECK_THROWS(init(CVector::Zero(1), scalar_cov(-1.0)));

    std::mt19937_64 rng(1);
    const auto stats = estimate_noise_covariance(oracle::random_matrix(rng, 100, 3, 0.1));
    CHECK_NOTHROW(init(CVector::Zero(3), stats.covariance));
}

TEST_CASE("predict") {
    const auto model0 = StateSpaceModel::random_walk(CMatrix::Identity(2, 2), AugmentedCovariance::zero(2),
                                                     AugmentedCovariance::proper(CMatrix::Identity(2, 2)));
    std::mt19937_64 rng(2);
    const auto p0 = oracle::random_statistics(rng, 2, false);
    const auto s0 = init(oracle::random_vector(rng, 2), p0);
    const auto s1 = predict(s0, model0);
    CHECK(s1.x_hat == s0.x_hat);
    CHECK((s1.p.gamma - s0.p.gamma).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((s1.p.c - s0.p.c).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(s1.step == 1);

    auto model1 = model0;
    model1.q = AugmentedCovariance::proper(CMatrix::Identity(2, 2));
    const auto s2 = predict(s0, model1);
    CHECK((s2.p.gamma - s0.p.gamma - CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-15);

    // Dense augmented oracle: F^a P^a F^aH + Q^a.
    for (int trial = 0; trial < 20; ++trial) {
        const auto model = random_model(rng, 4, 3, trial % 2 == 0);
        const auto s = init(oracle::random_vector(rng, 4), oracle::random_statistics(rng, 4, false));
        const auto out = predict(s, model);
        CMatrix fa = CMatrix::Zero(8, 8);
        fa.topLeftCorner(4, 4) = model.f;
        fa.bottomRightCorner(4, 4) = model.f.conjugate();
        const CMatrix expect = fa * assemble_block(s.p) * fa.adjoint() + assemble_block(model.q);
        CHECK((assemble_block(out.p) - expect).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((out.x_hat - model.f * s.x_hat).cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("gain limits") {
    const auto p = AugmentedCovariance::proper(CMatrix::Identity(2, 2));
    const auto s = init(CVector::Zero(2), p);
    auto precise = StateSpaceModel::random_walk(CMatrix::Identity(2, 2), AugmentedCovariance::zero(2),
                                                AugmentedCovariance::proper(1e-10 * CMatrix::Identity(2, 2)));
    auto g = gain(s, precise);
    CHECK((g.g11 - CMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(g.g12.cwiseAbs().maxCoeff() <= 1e-8);

    auto vague = precise;
    vague.r = AugmentedCovariance::proper(1e10 * CMatrix::Identity(2, 2));
    g = gain(s, vague);
    CHECK(g.g11.cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(g.g12.cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("gain matches the real-stacked Kalman gain") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto model = random_model(rng, 3, 4, true);
        const auto s = init(CVector::Zero(3), oracle::random_statistics(rng, 3, true));
        const auto g = gain(s, model);
        // The real gain K acts on [Re e; Im e]; the complex pair acts as G11 e + G12 e*.
        const Eigen::MatrixXd hr = oracle::real_operator(model.h);
        const Eigen::MatrixXd pr = oracle::real_covariance(s.p);
        const Eigen::MatrixXd rr = oracle::real_covariance(model.r);
        const Eigen::MatrixXd k = pr * hr.transpose() * (hr * pr * hr.transpose() + rr).inverse();
        const CVector e = oracle::random_vector(rng, 4);
        const CVector ours = g.g11 * e + g.g12 * e.conjugate();
        CHECK((ours - oracle::unstack(k * oracle::stack(e))).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("update examples") {
    const auto model = StateSpaceModel::random_walk(CMatrix::Ones(1, 1), scalar_cov(0.0), scalar_cov(1.0));
    const auto s = init(CVector::Zero(1), scalar_cov(1.0));
    CVector y(1);
    y << 2.0;
    const auto out = update(s, y, model);
    CHECK(std::abs(out.x_hat(0) - Complex(1.0, 0.0)) <= 1e-15);
    CHECK(std::abs(out.p.gamma(0, 0) - 0.5) <= 1e-15);

    std::mt19937_64 rng(4);
    const auto m = random_model(rng, 3, 5, false);
    const auto st = init(oracle::random_vector(rng, 3), oracle::random_statistics(rng, 3, false));
    const CVector exact = m.h * st.x_hat;
    CHECK((update(st, exact, m).x_hat - st.x_hat).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK_THROWS_AS(update(st, CVector::Zero(2), m), ShapeError);
}

TEST_CASE("innovation") {
    const auto model = StateSpaceModel::random_walk(CMatrix::Constant(1, 1, 2.0), scalar_cov(0.0), scalar_cov(1.0));
    const auto s = init(CVector::Ones(1), scalar_cov(1.0));
    CVector y(1);
    y << 5.0;
    CHECK(innovation(s, y, model)(0) == Complex(3.0, 0.0));
    y << 2.0;
    CHECK(innovation(s, y, model)(0) == Complex(0.0, 0.0));
}

TEST_CASE("reduced update equals the full augmented update") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const auto m = random_model(rng, 4, 6, trial % 3 == 0);
        const auto s = init(oracle::random_vector(rng, 4), oracle::random_statistics(rng, 4, false));
        const CVector y = oracle::random_vector(rng, 6);
        CHECK((update(s, y, m).x_hat - oracle::full_augmented_update(s, y, m)).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("trajectory matches the real-stacked Kalman filter") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 6; ++trial) {
        const bool proper = trial % 2 == 0;
        auto m = random_model(rng, 3, 4, proper);
        // Keep the dynamics stable so the trajectory stays bounded.
        const double radius = Eigen::ComplexEigenSolver<CMatrix>(m.f).eigenvalues().cwiseAbs().maxCoeff();
        m.f *= 0.9 / std::max(radius, 0.9);
        const auto p0 = oracle::random_statistics(rng, 3, proper);
        auto s = init(CVector::Zero(3), p0);
        oracle::RealKalman rk{Eigen::VectorXd::Zero(6), oracle::real_covariance(p0)};
        const Eigen::MatrixXd fr = oracle::real_operator(m.f), hr = oracle::real_operator(m.h);
        const Eigen::MatrixXd qr = oracle::real_covariance(m.q), rr = oracle::real_covariance(m.r);
        CVector x = oracle::draw(rng, p0);
        double worst = 0.0;
        for (int t = 0; t < 200; ++t) {
            x = m.f * x + oracle::draw(rng, m.q);
            const CVector y = m.h * x + oracle::draw(rng, m.r);
            s = update(predict(s, m), y, m);
            rk.predict(fr, qr);
            rk.update(oracle::stack(y), hr, rr);
            worst = std::max(worst, (s.x_hat - oracle::unstack(rk.x)).cwiseAbs().maxCoeff());
        }
        CHECK(worst <= 1e-8);
    }
}

TEST_CASE("Joseph form agrees with the subtractive form") {
    std::mt19937_64 rng(7);
    const auto m = random_model(rng, 3, 4, false);
    auto a = init(CVector::Zero(3), oracle::random_statistics(rng, 3, false));
    auto b = a;
    FilterOptions joseph;
    joseph.covariance_form = CovarianceForm::joseph;
    for (int t = 0; t < 50; ++t) {
        const CVector y = oracle::random_vector(rng, 4);
        a = update(predict(a, m), y, m);
        b = update(predict(b, m), y, m, joseph);
    }
    CHECK((a.x_hat - b.x_hat).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((a.p.gamma - b.p.gamma).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("information is monotone without process noise") {
    std::mt19937_64 rng(8);
    auto m = random_model(rng, 4, 3, false);
    m.f = CMatrix::Identity(4, 4);
    m.q = AugmentedCovariance::zero(4);
    auto s = init(CVector::Zero(4), oracle::random_statistics(rng, 4, false));
    double trace = s.p.gamma.trace().real();
    for (int t = 0; t < 50; ++t) {
        s = update(predict(s, m), oracle::random_vector(rng, 3), m);
        const double now = s.p.gamma.trace().real();
        CHECK(now <= trace * (1.0 + 1e-12));
        trace = now;
    }
}

TEST_CASE("singular innovation covariance is regularized and flagged") {
    const auto model = StateSpaceModel::random_walk(CMatrix::Ones(2, 1), scalar_cov(0.0),
                                                    AugmentedCovariance::zero(2));
    const auto s = init(CVector::Zero(1), scalar_cov(1.0, 0.0));
    const auto g = gain(s, model);
    CHECK(g.regularized);
    CVector y(2);
    y << 1.0, 1.0;
    const auto out = update(s, y, model);
    CHECK(out.diagnostics.regularized_updates == 1);
    CHECK(std::isfinite(out.x_hat(0).real()));
}

TEST_CASE("R scaling inflates the chosen rows") {
    const auto model = StateSpaceModel::random_walk(CMatrix::Ones(2, 1), scalar_cov(0.0),
                                                    AugmentedCovariance::proper(CMatrix::Identity(2, 2)));
    const auto s = init(CVector::Zero(1), scalar_cov(1.0));
    CVector y(2);
    y << 1.0, 100.0;
    const std::vector<double> scale{1.0, 1e6};
    const auto out = update(s, y, model, {}, std::span<const double>(scale));
    CHECK(std::abs(out.x_hat(0) - 0.5) < 1e-3);
}
