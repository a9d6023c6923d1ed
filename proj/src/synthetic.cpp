#include "dse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dse {

namespace {

constexpr std::uint64_t kTopologyStream = 1;
constexpr std::uint64_t kLoadStream = 2;
constexpr std::uint64_t kPseudoStream = 3;
constexpr std::uint64_t kPvStream = 4;
constexpr std::uint64_t kPseudoNoiseStream = 5;
constexpr std::uint64_t kMeterStream = 6;
constexpr std::uint64_t kPopulationStream = 7;

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Complex reflect(Complex value, double lo, double hi) {
    double mag = std::abs(value);
    if (mag >= lo && mag <= hi) return value;
    const double angle = std::arg(value);
    const double span = hi - lo;
    if (span <= 0.0) return std::polar(lo, angle);
    double offset = std::fmod(std::abs(mag - lo), 2.0 * span);
    if (mag < lo) offset = std::fmod(lo - mag, 2.0 * span);
    mag = offset <= span ? lo + offset : hi - (offset - span);
    return std::polar(mag, angle);
}

double reflect_scalar(double value, double lo, double hi) {
    if (value >= lo && value <= hi) return value;
    const double span = hi - lo;
    if (span <= 0.0) return lo;
    double offset = std::fmod(std::abs(value - lo), 2.0 * span);
    return offset <= span ? lo + offset : hi - (offset - span);
}

/// Fixed attributes of one customer, shared by every simulated day.
struct Customer {
    Complex start;
    bool has_pv = false;
    double pv_capacity = 0.0;
};

std::vector<Customer> population(const ScenarioConfig& c) {
    std::vector<Customer> out(static_cast<size_t>(c.customers()));
    auto rng = derived_engine(c.seed, kPopulationStream, 0);
    const auto pv_count = static_cast<size_t>(std::lround(c.pv_penetration * static_cast<double>(out.size())));
    std::vector<size_t> order(out.size());
    for (size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::shuffle(order.begin(), order.end(), rng);
    for (auto& cust : out) {
        const double mag = uniform(rng, c.start_min, c.start_max);
        const double phi = uniform(rng, c.pf_angle_min, c.pf_angle_max);
        cust.start = std::polar(mag, -phi);
    }
    for (size_t k = 0; k < pv_count && k < order.size(); ++k) {
        auto& cust = out[order[k]];
        cust.has_pv = true;
        cust.pv_capacity = uniform(rng, c.pv.capacity_min, c.pv.capacity_max) * std::abs(cust.start);
    }
    return out;
}

/// Bounded complex random walk from `start`.
CVector load_walk(const ScenarioConfig& c, Complex start, std::mt19937_64& rng) {
    CVector out(c.steps);
    Complex at = start;
    for (Eigen::Index t = 0; t < c.steps; ++t) {
        out(t) = at;
        at = reflect(at + complex_normal(rng, c.increment_sd), c.min_magnitude, c.max_magnitude);
    }
    return out;
}

CVector pv_profile(const ScenarioConfig& c, double capacity, std::mt19937_64& rng) {
    CVector out(c.steps);
    const auto& pv = c.pv;
    double cloud = uniform(rng, pv.cloud_min, 1.0);
    std::normal_distribution<double> step(0.0, pv.cloud_sd);
    for (Eigen::Index t = 0; t < c.steps; ++t) {
        const double minute = static_cast<double>(t % 1440);
        double shape = 0.0;
        if (minute > pv.sunrise_minute && minute < pv.sunset_minute)
            shape = std::sin(std::numbers::pi * (minute - pv.sunrise_minute) / (pv.sunset_minute - pv.sunrise_minute));
        out(t) = Complex(-capacity * shape * cloud, 0.0);
        if (pv.cloud_sd > 0.0) cloud = reflect_scalar(cloud + step(rng), pv.cloud_min, 1.0);
    }
    return out;
}

}  // namespace

void ScenarioConfig::validate() const {
    if (customers_per_area <= 0 || areas <= 0) throw ArgumentError("scenario needs at least one area and customer");
    if (steps < 2) throw ArgumentError("scenario needs at least two steps");
    if (increment_sd < 0.0 || meter_sd < 0.0 || pseudo_sd < 0.0 || pv.cloud_sd < 0.0)
        throw ArgumentError("standard deviations must be non-negative");
    if (pv_penetration < 0.0 || pv_penetration > 1.0) throw ArgumentError("pv_penetration must lie in [0, 1]");
    if (!(day_correlation > 0.0 && day_correlation < 1.0)) throw ArgumentError("day_correlation must lie in (0, 1)");
    if (!(min_magnitude > 0.0 && max_magnitude >= min_magnitude)) throw ArgumentError("invalid magnitude bounds");
    if (start_min < min_magnitude || start_max > max_magnitude || start_min > start_max)
        throw ArgumentError("start magnitudes must lie within the magnitude bounds");
    if (!(customer_scale > 0.0)) throw ArgumentError("customer_scale must be positive");
}

std::mt19937_64 derived_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

Complex complex_normal(std::mt19937_64& rng, double sd) {
    if (sd == 0.0) return {};
    std::normal_distribution<double> n(0.0, sd / std::numbers::sqrt2);
    const double re = n(rng);
    return {re, n(rng)};
}

CustomerProfiles generate_profiles(const ScenarioConfig& config, std::uint64_t day) {
    config.validate();
    const auto customers = population(config);
    const auto count = static_cast<Eigen::Index>(customers.size());
    CustomerProfiles out{CMatrix(config.steps, count), CMatrix(config.steps, count)};
    const double rho = config.day_correlation;
    const double norm = std::sqrt(rho * rho + (1.0 - rho) * (1.0 - rho));
    const std::uint64_t base = day * static_cast<std::uint64_t>(count);

#pragma omp parallel for schedule(static)
    for (Eigen::Index k = 0; k < count; ++k) {
        const auto& cust = customers[static_cast<size_t>(k)];
        const auto idx = base + static_cast<std::uint64_t>(k);
        auto load_rng = derived_engine(config.seed, kLoadStream, idx);
        auto pseudo_rng = derived_engine(config.seed, kPseudoStream, idx);
        CVector truth = load_walk(config, cust.start, load_rng);
        CVector other = load_walk(config, cust.start, pseudo_rng);
        CVector previous(config.steps);
        for (Eigen::Index t = 0; t < config.steps; ++t) {
            const Complex d = (rho * (truth(t) - cust.start) + (1.0 - rho) * (other(t) - cust.start)) / norm;
            previous(t) = reflect(cust.start + d, config.min_magnitude, config.max_magnitude);
        }
        if (cust.has_pv) {
            auto pv_rng = derived_engine(config.seed, kPvStream, idx);
            truth += pv_profile(config, cust.pv_capacity, pv_rng);
            previous += pv_profile(config, cust.pv_capacity, pv_rng);
        }
        out.truth.col(k) = truth;
        out.previous_day.col(k) = previous;
    }
    return out;
}

CMatrix aggregate_subarea(const CMatrix& profiles, const std::vector<std::vector<int>>& membership) {
    CMatrix out = CMatrix::Zero(profiles.rows(), static_cast<Eigen::Index>(membership.size()));
    for (size_t g = 0; g < membership.size(); ++g) {
        if (membership[g].empty()) throw ArgumentError("subarea " + std::to_string(g) + " has no members");
        for (int c : membership[g]) {
            if (c < 0 || c >= profiles.cols()) throw ArgumentError("member index outside the profile matrix");
            out.col(static_cast<Eigen::Index>(g)) += profiles.col(c);
        }
    }
    return out;
}

double scaling_factor_cv(const CVector& part, const CVector& total) {
    require_shape(part.size() == total.size() && part.size() >= 2, "scaling factor series need equal length >= 2");
    const RVector r = (part.array() / total.array()).abs().matrix();
    const double mean = r.mean();
    if (!(mean > 0.0)) throw ArgumentError("scaling factor series has zero mean");
    const double var = (r.array() - mean).square().sum() / static_cast<double>(r.size() - 1);
    return std::sqrt(var) / mean;
}

// ---------------------------------------------------------------- scenarios

Scenario six_bus_scenario(const ScenarioConfig& config) {
    config.validate();
    if (config.areas != 5) throw ArgumentError("the 6-bus scenario has exactly five areas");
    auto rng = derived_engine(config.seed, kTopologyStream, 0);
    auto feeder = [&] { return Complex(uniform(rng, 0.004, 0.012), uniform(rng, 0.002, 0.006)); };

    std::vector<BusSpec> buses{{1, true, "source"}, {2, false, "head"}};
    std::vector<BranchSpec> branches{{2, 1, 2, {0.0008, 0.003}}};
    const std::vector<std::pair<BusId, BusId>> links{{2, 3}, {2, 4}, {4, 5}, {5, 6}, {4, 7}};
    for (size_t a = 0; a < links.size(); ++a) {
        auto [from, to] = links[a];
        buses.push_back({to, false, std::to_string(a + 1)});
        branches.push_back({to, from, to, feeder()});
    }
    Scenario s{config, RadialNetwork(buses, branches), {}, {}, {}};
    s.plan.voltage_meters = {{2, config.meter_sd > 0.0 ? config.meter_sd : 1e-6}};
    s.plan.current_meters = {{2, config.meter_sd > 0.0 ? config.meter_sd : 1e-6}};
    s.plan.pseudo_sd = config.pseudo_sd > 0.0 ? config.pseudo_sd : 1e-3;
    for (int a = 0; a < config.areas; ++a)
        for (int c = 0; c < config.customers_per_area; ++c) s.customer_bus.push_back(links[static_cast<size_t>(a)].second);
    return s;
}

Scenario large_feeder_scenario(const ScenarioConfig& config) {
    config.validate();
    if (config.areas < 2) throw ArgumentError("the large feeder needs at least two areas");
    if (config.customers_per_area < 4) throw ArgumentError("the large feeder needs at least four customers per area");
    auto rng = derived_engine(config.seed, kTopologyStream, 1);

    std::vector<BusSpec> buses{{1, true, "source"}, {2, false, "main"}};
    std::vector<BranchSpec> branches{{2, 1, 2, {0.0008, 0.003}}};
    std::vector<SubareaSpec> partition;
    std::vector<BusId> customer_bus;

    BusId previous_trunk = 2;
    const BusId first_customer = 100;
    BusId next = first_customer;
    int subarea_id = 1;
    for (int a = 0; a < config.areas; ++a) {
        const BusId trunk = 10 + a;
        buses.push_back({trunk, false, "main"});
        branches.push_back({trunk, previous_trunk, trunk, {0.002, 0.001}});
        previous_trunk = trunk;

        const bool split = a == config.areas - 1;
        const int half = config.customers_per_area / 2;
        std::vector<BusId> lateral;
        std::vector<BusId> nested;
        BusId nest_root = 0;
        for (int c = 0; c < config.customers_per_area; ++c) {
            const BusId bus = next++;
            BusId parent = trunk;
            const bool second = split && c >= half;
            auto& pool = second ? nested : lateral;
            if (second && nested.empty()) {
                nest_root = lateral[static_cast<size_t>(std::uniform_int_distribution<int>(
                    std::max(0, half - 4), half - 1)(rng))];
                parent = nest_root;
            } else if (!pool.empty()) {
                const auto lo = pool.size() > 6 ? pool.size() - 6 : 0;
                parent = pool[std::uniform_int_distribution<size_t>(lo, pool.size() - 1)(rng)];
            }
            pool.push_back(bus);
            buses.push_back({bus, false, std::to_string(a + 1)});
            branches.push_back({bus, parent, bus, {uniform(rng, 0.002, 0.006), uniform(rng, 0.001, 0.003)}});
            customer_bus.push_back(bus);
        }
        partition.push_back({subarea_id++, trunk, lateral});
        if (split) partition.push_back({subarea_id++, nest_root, nested});
    }
    Scenario s{config, RadialNetwork(buses, branches), std::move(partition), {}, std::move(customer_bus)};
    const double sd = config.meter_sd > 0.0 ? config.meter_sd : 1e-6;
    s.plan.voltage_meters = {{2, sd}};
    s.plan.current_meters = {{2, sd}};
    s.plan.pseudo_sd = config.pseudo_sd > 0.0 ? config.pseudo_sd : 1e-3;
    return s;
}

TruthRun simulate(const Scenario& scenario, std::uint64_t day, Execution execution) {
    const auto& c = scenario.config;
    const auto& net = scenario.network;
    const auto profiles = generate_profiles(c, day);
    TruthRun run;
    run.customer_currents = profiles.truth * c.customer_scale;
    run.pseudo_customers = profiles.previous_day * c.customer_scale;
    run.injections = CMatrix::Zero(c.steps, net.size());
    run.pseudo = CMatrix::Zero(c.steps, net.size());
    for (size_t k = 0; k < scenario.customer_bus.size(); ++k) {
        const auto col = net.bus_index(scenario.customer_bus[k]);
        run.injections.col(col) += run.customer_currents.col(static_cast<Eigen::Index>(k));
        run.pseudo.col(col) += run.pseudo_customers.col(static_cast<Eigen::Index>(k));
    }
    for (Eigen::Index b = 0; b < net.size(); ++b) {
        auto rng = derived_engine(c.seed, kPseudoNoiseStream, day * 1000003ULL + static_cast<std::uint64_t>(b));
        for (Eigen::Index t = 0; t < c.steps; ++t) run.pseudo(t, b) += complex_normal(rng, c.pseudo_sd);
    }
    run.flow = flow_series(build_bibc(net), build_dlf(net), run.injections, CVector::Ones(c.steps), execution);
    return run;
}

MeterStream corrupt_measurements(const TruthRun& truth, const RadialNetwork& network, const MeteringPlan& plan,
                                 std::uint64_t seed, const std::vector<Spike>& spikes) {
    MeterStream out;
    const auto steps = truth.flow.bus_voltages.rows();
    out.voltage.resize(steps, static_cast<Eigen::Index>(plan.voltage_meters.size()));
    out.current.resize(steps, static_cast<Eigen::Index>(plan.current_meters.size()));
    std::uint64_t device = 0;
    for (size_t k = 0; k < plan.voltage_meters.size(); ++k, ++device) {
        const auto& vm = plan.voltage_meters[k];
        out.voltage_buses.push_back(vm.bus);
        auto rng = derived_engine(seed, kMeterStream, device);
        const bool ref = vm.bus == network.reference_bus();
        const auto col = ref ? Eigen::Index{-1} : network.bus_index(vm.bus);
        for (Eigen::Index t = 0; t < steps; ++t) {
            const Complex v = ref ? Complex(1.0, 0.0) : truth.flow.bus_voltages(t, col);
            out.voltage(t, static_cast<Eigen::Index>(k)) = v + complex_normal(rng, vm.sd);
        }
    }
    for (size_t k = 0; k < plan.current_meters.size(); ++k, ++device) {
        const auto& cm = plan.current_meters[k];
        out.current_branches.push_back(cm.branch);
        auto rng = derived_engine(seed, kMeterStream, device);
        const auto col = network.branch_index(cm.branch);
        for (Eigen::Index t = 0; t < steps; ++t)
            out.current(t, static_cast<Eigen::Index>(k)) = truth.flow.branch_currents(t, col) + complex_normal(rng, cm.sd);
    }

    auto rng = derived_engine(seed, kMeterStream, 1ULL << 40);
    std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
    for (const auto& sp : spikes) {
        if (sp.step < 0 || sp.step >= steps) throw ArgumentError("spike step outside the stream");
        const Complex offset = std::polar(1.0, phase(rng));
        if (sp.kind == RowKind::voltage) {
            auto it = std::find(out.voltage_buses.begin(), out.voltage_buses.end(), sp.device);
            if (it == out.voltage_buses.end()) throw ArgumentError("spike on an unmetered bus");
            const auto k = static_cast<size_t>(it - out.voltage_buses.begin());
            const bool ref = sp.device == network.reference_bus();
            const Complex v = ref ? Complex(1.0, 0.0) : truth.flow.bus_voltages(sp.step, network.bus_index(sp.device));
            out.voltage(sp.step, static_cast<Eigen::Index>(k)) = v + sp.multiple * plan.voltage_meters[k].sd * offset;
        } else if (sp.kind == RowKind::current) {
            auto it = std::find(out.current_branches.begin(), out.current_branches.end(), sp.device);
            if (it == out.current_branches.end()) throw ArgumentError("spike on an unmetered branch");
            const auto k = static_cast<size_t>(it - out.current_branches.begin());
            out.current(sp.step, static_cast<Eigen::Index>(k)) =
                truth.flow.branch_currents(sp.step, network.branch_index(sp.device)) +
                sp.multiple * plan.current_meters[k].sd * offset;
        } else {
            throw ArgumentError("spikes apply to metered rows only");
        }
    }
    return out;
}

ScenarioData generate_scenario_data(const Scenario& scenario, Execution execution) {
    ScenarioData data{simulate(scenario, 0, execution), simulate(scenario, 1, execution), {}};
    data.meters = corrupt_measurements(data.today, scenario.network, scenario.plan, scenario.config.seed);
    return data;
}

}  // namespace dse
