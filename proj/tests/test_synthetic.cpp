#include <doctest.h>

#include <numeric>

#include "dse/synthetic.hpp"

using namespace dse;

namespace {

double lag_correlation(const CVector& x, int lag) {
    const Complex mean = x.mean();
    const CVector d = x.array() - mean;
    Complex num = 0.0;
    for (Eigen::Index t = lag; t < d.size(); ++t) num += d(t) * std::conj(d(t - lag));
    return std::abs(num) / d.squaredNorm();
}

CVector increments(const CVector& x) { return x.tail(x.size() - 1) - x.head(x.size() - 1); }

}  // namespace

TEST_CASE("constant profiles without noise or PV") {
    ScenarioConfig c;
    c.areas = 1;
    c.customers_per_area = 4;
    c.steps = 50;
    c.increment_sd = 0.0;
    c.pv_penetration = 0.0;
    const auto p = generate_profiles(c);
    for (Eigen::Index k = 0; k < p.truth.cols(); ++k)
        CHECK((p.truth.col(k).array() - p.truth(0, k)).abs().maxCoeff() == 0.0);
}

TEST_CASE("increments are white over a week") {
    ScenarioConfig c;
    c.areas = 1;
    c.customers_per_area = 10;
    c.steps = 10080;
    const auto p = generate_profiles(c);
    const double bound = 3.0 * c.increment_sd / std::sqrt(static_cast<double>(c.steps));
    for (Eigen::Index k = 0; k < p.truth.cols(); ++k) {
        const CVector d = increments(p.truth.col(k));
        double worst = 0.0;
        for (int lag = 1; lag <= 30; ++lag) worst = std::max(worst, lag_correlation(d, lag));
        CHECK(worst < 0.05);
        CHECK(std::abs(d.mean()) < bound);
    }
}

TEST_CASE("previous day is correlated and bounded") {
    ScenarioConfig c;
    c.areas = 2;
    c.customers_per_area = 5;
    c.pv_penetration = 0.0;
    const auto p = generate_profiles(c);
    for (Eigen::Index k = 0; k < p.truth.cols(); ++k) {
        CHECK(p.truth.col(k).cwiseAbs().minCoeff() >= c.min_magnitude - 1e-12);
        CHECK(p.truth.col(k).cwiseAbs().maxCoeff() <= c.max_magnitude + 1e-12);
    }
    CHECK((p.truth - p.previous_day).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("PV lowers midday load") {
    ScenarioConfig c;
    c.areas = 1;
    c.customers_per_area = 10;
    c.pv_penetration = 1.0;
    c.increment_sd = 0.0;
    const auto p = generate_profiles(c);
    for (Eigen::Index k = 0; k < p.truth.cols(); ++k) {
        CHECK(std::abs(p.truth(0, k)) > std::abs(p.truth(720, k)));
        CHECK(std::abs(p.truth(1439, k) - p.truth(0, k)) < 1e-12);
    }
}

TEST_CASE("reproducibility") {
    ScenarioConfig c;
    c.seed = 11;
    c.steps = 200;
    const auto s = six_bus_scenario(c);
    const auto a = generate_scenario_data(s, Execution::serial);
    const auto b = generate_scenario_data(s, Execution::parallel);
    CHECK(a.today.injections == b.today.injections);
    CHECK(a.today.pseudo == b.today.pseudo);
    CHECK(a.meters.current == b.meters.current);
    CHECK(a.history.injections == b.history.injections);
    CHECK((a.today.injections - a.history.injections).cwiseAbs().maxCoeff() > 0.0);
    c.seed = 12;
    CHECK(generate_scenario_data(six_bus_scenario(c)).today.injections != a.today.injections);
}

TEST_CASE("truth flow satisfies the load-flow equation") {
    ScenarioConfig c;
    c.steps = 30;
    const auto s = six_bus_scenario(c);
    const auto run = simulate(s);
    const auto b = build_bibc(s.network);
    const auto d = build_dlf(s.network);
    for (Eigen::Index t = 0; t < c.steps; ++t) {
        const auto sol = direct_load_flow(b, d, run.injections.row(t).transpose(), 1.0);
        CHECK((sol.bus_voltages - run.flow.bus_voltages.row(t).transpose()).cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("meter corruption") {
    ScenarioConfig c;
    c.steps = 10000;
    c.meter_sd = 0.01;
    const auto s = six_bus_scenario(c);
    const auto run = simulate(s);

    auto exact = s.plan;
    for (auto& m : exact.voltage_meters) m.sd = 0.0;
    for (auto& m : exact.current_meters) m.sd = 0.0;
    const auto clean = corrupt_measurements(run, s.network, exact, 1);
    CHECK(clean.current.col(0) == run.flow.branch_currents.col(s.network.branch_index(2)));

    const auto noisy = corrupt_measurements(run, s.network, s.plan, 1, {{100, RowKind::current, 2, 8.0}});
    const CVector err = noisy.current.col(0) - run.flow.branch_currents.col(s.network.branch_index(2));
    CHECK(std::abs(std::abs(err(100)) - 8.0 * 0.01) <= 1e-12);
    CVector rest = err;
    rest(100) = 0.0;
    const double sd = std::sqrt(rest.squaredNorm() / static_cast<double>(rest.size() - 2));
    CHECK(std::abs(sd / 0.01 - 1.0) <= 0.05);

    CHECK_THROWS_AS(corrupt_measurements(run, s.network, s.plan, 1, {{5, RowKind::current, 99, 8.0}}), ArgumentError);
}

TEST_CASE("aggregate_subarea") {
    CMatrix p(2, 2);
    p << 1.0, 2.0, 1.0, 2.0;
    CHECK(aggregate_subarea(p, {{0}}).col(0) == p.col(0));
    CHECK(aggregate_subarea(p, {{0, 1}}).col(0) == CVector::Constant(2, 3.0));
    CHECK_THROWS_AS(aggregate_subarea(p, {{}}), ArgumentError);
}

TEST_CASE("aggregation smooths scaling factors") {
    ScenarioConfig c;
    const auto p = generate_profiles(c);
    const CVector total = p.truth.rowwise().sum();
    std::mt19937_64 rng(5);
    std::vector<int> ids(static_cast<size_t>(p.truth.cols()));
    std::iota(ids.begin(), ids.end(), 0);
    std::vector<double> mean_cv;
    for (int size : {1, 5, 20}) {
        double sum = 0.0;
        for (int draw = 0; draw < 20; ++draw) {
            std::shuffle(ids.begin(), ids.end(), rng);
            const std::vector<int> members(ids.begin(), ids.begin() + size);
            sum += scaling_factor_cv(aggregate_subarea(p.truth, {members}).col(0), total);
        }
        mean_cv.push_back(sum / 20.0);
    }
    CHECK(mean_cv[1] < mean_cv[0]);
    CHECK(mean_cv[2] < mean_cv[1]);
}

TEST_CASE("config validation") {
    ScenarioConfig c;
    c.pv_penetration = 1.5;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = {};
    c.meter_sd = -1.0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = {};
    c.areas = 4;
    CHECK_THROWS_AS(six_bus_scenario(c), ArgumentError);
}
