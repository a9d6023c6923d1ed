#include <doctest.h>

#include "dse/synthetic.hpp"
#include "oracles.hpp"

using namespace dse;

namespace {

ScenarioConfig small_feeder_config(std::uint64_t seed = 5) {
    ScenarioConfig c;
    c.seed = seed;
    c.areas = 3;
    c.customers_per_area = 8;
    c.steps = 60;
    c.customer_scale = 0.1;
    c.pseudo_sd = 0.01;
    return c;
}

MeterStream exact_meters(const TruthRun& run, const RadialNetwork& net, const MeteringPlan& plan) {
    MeterStream m;
    const auto steps = run.flow.bus_voltages.rows();
    m.voltage.resize(steps, static_cast<Eigen::Index>(plan.voltage_meters.size()));
    m.current.resize(steps, static_cast<Eigen::Index>(plan.current_meters.size()));
    for (size_t k = 0; k < plan.voltage_meters.size(); ++k) {
        m.voltage_buses.push_back(plan.voltage_meters[k].bus);
        m.voltage.col(static_cast<Eigen::Index>(k)) = run.flow.bus_voltages.col(net.bus_index(plan.voltage_meters[k].bus));
    }
    for (size_t k = 0; k < plan.current_meters.size(); ++k) {
        m.current_branches.push_back(plan.current_meters[k].branch);
        m.current.col(static_cast<Eigen::Index>(k)) =
            run.flow.branch_currents.col(net.branch_index(plan.current_meters[k].branch));
    }
    return m;
}

}  // namespace

TEST_CASE("scaling factor examples") {
    CVector p(2);
    p << 3.0, 1.0;
    auto sf = compute_scaling_factors(p);
    CHECK(std::abs(sf.sf(0) - 0.75) < 1e-15);
    CHECK(std::abs(sf.sf(1) - 0.25) < 1e-15);
    CHECK(compute_scaling_factors(CVector::Constant(1, Complex(2.0, 1.0))).sf(0) == Complex(1.0, 0.0));

    p << Complex(1, 1), Complex(1, -1);
    sf = compute_scaling_factors(p);
    CHECK(std::abs(sf.sf(0) - Complex(0.5, 0.5)) < 1e-15);
    CHECK(std::abs(sf.sf(1) - Complex(0.5, -0.5)) < 1e-15);
    CHECK(std::abs(sf.sf.sum() - 1.0) <= 1e-12);

    CVector up = update_pseudo_injections(sf, Complex(0.0, 2.0));
    CHECK(std::abs(up.sum() - Complex(0.0, 2.0)) <= 1e-12);
    CHECK(update_pseudo_injections(sf, 0.0).cwiseAbs().maxCoeff() == 0.0);
    CVector half(2);
    half << 0.75, 0.25;
    up = update_pseudo_injections({half, 0}, 4.0);
    CHECK(up(0) == Complex(3.0, 0.0));
    CHECK(up(1) == Complex(1.0, 0.0));

    p << Complex(1e-10, 0), Complex(-1e-10, 1e-12);
    CHECK_THROWS_AS(compute_scaling_factors(p), DegenerateDenominatorError);

    p << Complex(1, 1), Complex(-1, 0);
    const auto mag = compute_scaling_factors(p, 0, ScalingMode::magnitude);
    CHECK(std::abs(mag.sf.sum() - 1.0) <= 1e-15);
    CHECK(std::abs(mag.sf(0).imag()) == 0.0);
    CHECK(mag.sf(0).real() > mag.sf(1).real());
}

TEST_CASE("scaling factors sum to one on random data") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        const CVector p = oracle::random_vector(rng, 1 + trial % 30).array() + Complex(3.0, -1.0);
        const auto sf = compute_scaling_factors(p);
        CHECK(std::abs(sf.sf.sum() - 1.0) <= 1e-12);
        const Complex total = oracle::random_vector(rng, 1)(0);
        CHECK(std::abs(update_pseudo_injections(sf, total).sum() - total) <= 1e-12 * std::max(1.0, std::abs(total)));
    }
}

TEST_CASE("partition validation and layers") {
    const auto s = large_feeder_scenario(small_feeder_config());
    const Partition p(s.network, s.partition);
    REQUIRE(p.layer_schedule().size() == 2);
    CHECK(p.layer_schedule()[0] == std::vector<int>{1, 2, 3});
    CHECK(p.layer_schedule()[1] == std::vector<int>{4});
    CHECK(p.subarea(4).parent == 3);
    CHECK(p.subarea(4).layer == 3);
    // Union covers every bus exactly once.
    Eigen::Index covered = p.main_area().size();
    for (const auto& sub : p.subareas()) covered += sub.network.size();
    CHECK(covered == s.network.size());
    CHECK(p.area_of(10) == 0);

    auto overlap = s.partition;
    overlap[1].buses.push_back(overlap[0].buses.front());
    CHECK_THROWS_AS(Partition(s.network, overlap), ValidationError);

    auto wrong_boundary = s.partition;
    wrong_boundary[0].boundary_bus = 11;
    CHECK_THROWS_AS(Partition(s.network, wrong_boundary), ValidationError);

    auto dup = s.partition;
    dup[1].id = dup[0].id;
    CHECK_THROWS_AS(Partition(s.network, dup), ValidationError);

    auto unknown = s.partition;
    unknown[0].buses.push_back(4242);
    CHECK_THROWS_AS(Partition(s.network, unknown), ValidationError);

    const Partition empty(s.network, {});
    CHECK(empty.subareas().empty());
    CHECK(empty.main_area().size() == s.network.size());
}

TEST_CASE("exact pseudo data and noiseless meters reproduce the truth") {
    auto c = small_feeder_config();
    const auto s = large_feeder_scenario(c);
    const auto run = simulate(s, 0);
    auto plan = s.plan;
    plan.pseudo_sd = 1e-7;
    for (auto& v : plan.voltage_meters) v.sd = 1e-7;
    for (auto& i : plan.current_meters) i.sd = 1e-7;
    const auto meters = exact_meters(run, s.network, plan);
    const PseudoHistory history{run.injections, std::nullopt};
    const Partition p(s.network, s.partition);
    EstimatorConfig config;
    config.detect_bad_data = false;
    const auto multi = run_multilayer(s.network, p, plan, history, meters, c.steps, config);
    CHECK((multi.voltages - run.flow.bus_voltages).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((multi.injections - run.injections).cwiseAbs().maxCoeff() <= 1e-8);

    const auto single = run_single_layer(s.network, plan, history, meters, c.steps, config);
    CHECK((single.voltages - run.flow.bus_voltages).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((single.injections - run.injections).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("perfect voltage meters on every bus recover the injections in one step") {
    std::mt19937_64 rng(2);
    const auto spec = oracle::random_tree(rng, 8);
    const RadialNetwork net(spec.buses, spec.branches);
    const CVector truth = oracle::random_vector(rng, net.size(), 0.2);
    const auto flow = direct_load_flow(build_bibc(net), build_dlf(net), truth, 1.0);
    MeteringPlan plan;
    plan.pseudo_sd = 1.0;
    MeterStream meters;
    meters.voltage.resize(1, net.size());
    for (Eigen::Index k = 0; k < net.size(); ++k) {
        plan.voltage_meters.push_back({net.bus_ids()[static_cast<size_t>(k)], 1e-9});
        meters.voltage_buses.push_back(net.bus_ids()[static_cast<size_t>(k)]);
        meters.voltage(0, k) = flow.bus_voltages(k);
    }
    CMatrix pseudo(3, net.size());
    pseudo.row(0) = CVector::Zero(net.size()).transpose();
    pseudo.row(1) = oracle::random_vector(rng, net.size(), 0.2).transpose();
    pseudo.row(2) = oracle::random_vector(rng, net.size(), 0.2).transpose();
    EstimatorConfig config;
    config.detect_bad_data = false;
    const auto out = run_single_layer(net, plan, {pseudo, std::nullopt}, meters, 1, config);
    CHECK((out.injections.row(0).transpose() - truth).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("empty partition is bit-identical to the single-layer estimator") {
    for (std::uint64_t seed : {1, 2, 3}) {
        ScenarioConfig c;
        c.seed = seed;
        c.steps = 120;
        const auto s = six_bus_scenario(c);
        const auto data = generate_scenario_data(s);
        const Partition p(s.network, {});
        const auto single = run_single_layer(s.network, s.plan, data.pseudo_history(), data.meters, c.steps);
        const auto multi = run_multilayer(s.network, p, s.plan, data.pseudo_history(), data.meters, c.steps);
        CHECK(single.voltages == multi.voltages);
        CHECK(single.injections == multi.injections);
    }
}

TEST_CASE("multi-layer: serial and parallel schedules agree bit for bit") {
    const auto c = small_feeder_config(9);
    const auto s = large_feeder_scenario(c);
    const auto data = generate_scenario_data(s);
    const Partition p(s.network, s.partition);
    EstimatorConfig serial;
    serial.execution = Execution::serial;
    const auto a = run_multilayer(s.network, p, s.plan, data.pseudo_history(), data.meters, c.steps, serial);
    const auto b = run_multilayer(s.network, p, s.plan, data.pseudo_history(), data.meters, c.steps);
    CHECK(a.voltages == b.voltages);
    CHECK(a.injections == b.injections);
    CHECK(a.diagnostics.max_sf_sum_error <= 1e-12);
    CHECK(a.diagnostics.max_conservation_error <= 1e-12);
}

TEST_CASE("shallower layers do not depend on deeper ones") {
    const auto c = small_feeder_config(4);
    const auto s = large_feeder_scenario(c);
    const auto data = generate_scenario_data(s);
    const Partition p(s.network, s.partition);
    const auto& nested = p.subarea(4);

    // Redistribute pseudo load inside the nested subarea, keeping its total.
    PseudoHistory changed = data.pseudo_history();
    const auto first = s.network.bus_index(nested.members.front());
    const auto last = s.network.bus_index(nested.members.back());
    for (Eigen::Index t = 0; t < c.steps; ++t) {
        const Complex shift = 0.3 * changed.pseudo(t, first);
        changed.pseudo(t, first) -= shift;
        changed.pseudo(t, last) += shift;
    }
    const auto a = run_multilayer(s.network, p, s.plan, data.pseudo_history(), data.meters, c.steps);
    const auto b = run_multilayer(s.network, p, s.plan, changed, data.meters, c.steps);
    double shallow = 0.0, deep = 0.0;
    for (Eigen::Index k = 0; k < s.network.size(); ++k) {
        const double diff = (a.voltages.col(k) - b.voltages.col(k)).cwiseAbs().maxCoeff();
        if (p.area_of(s.network.bus_ids()[static_cast<size_t>(k)]) == 4)
            deep = std::max(deep, diff);
        else
            shallow = std::max(shallow, diff);
    }
    CHECK(shallow <= 1e-12);
    CHECK(deep > 1e-9);
}

TEST_CASE("bad data on the head meter is flagged and ignored") {
    ScenarioConfig c;
    c.steps = 200;
    const auto s = six_bus_scenario(c);
    const auto run = simulate(s, 0);
    const auto hist = simulate(s, 1);
    const std::vector<Spike> spikes{{150, RowKind::current, 2, 5000.0}};
    const auto meters = corrupt_measurements(run, s.network, s.plan, 3, spikes);
    const PseudoHistory history{run.pseudo, Calibration{hist.injections, hist.pseudo}};
    const auto out = run_single_layer(s.network, s.plan, history, meters, c.steps);
    bool seen = false;
    for (const auto& ev : out.diagnostics.bad_data) seen |= ev.step == 150 && ev.kind == RowKind::current && ev.device == 2;
    CHECK(seen);
    EstimatorConfig off;
    off.detect_bad_data = false;
    const auto raw = run_single_layer(s.network, s.plan, history, meters, c.steps, off);
    const double err_on = (out.voltages.row(150) - run.flow.bus_voltages.row(150)).cwiseAbs().maxCoeff();
    const double err_off = (raw.voltages.row(150) - run.flow.bus_voltages.row(150)).cwiseAbs().maxCoeff();
    CHECK(err_on < err_off);
}

TEST_CASE("estimator input checks") {
    ScenarioConfig c;
    c.steps = 20;
    const auto s = six_bus_scenario(c);
    const auto data = generate_scenario_data(s);
    CHECK_THROWS_AS(run_single_layer(s.network, s.plan, data.pseudo_history(), data.meters, 21), ShapeError);
    CHECK_THROWS_AS(run_single_layer(s.network, s.plan, data.pseudo_history(), data.meters, 0), ArgumentError);
    MeterStream partial = data.meters;
    partial.current_branches = {99};
    CHECK_THROWS_AS(run_single_layer(s.network, s.plan, data.pseudo_history(), partial, 5), DataError);
}
