#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dse/layering.hpp"

namespace dse {

struct PvParams {
    double sunrise_minute = 360.0;
    double sunset_minute = 1080.0;
    double cloud_sd = 0.02;        // per-minute step of the cloud factor
    double cloud_min = 0.5;        // cloud factor lives in [cloud_min, 1]
    double capacity_min = 0.3;     // midday offset as a fraction of |i0|
    double capacity_max = 0.8;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    int customers_per_area = 20;
    int areas = 5;
    Eigen::Index steps = 1440;
    double increment_sd = 0.01;  // customer per-unit
    double pv_penetration = 0.2;
    PvParams pv;
    double day_correlation = 0.8;
    double meter_sd = 1e-4;   // system per-unit
    double pseudo_sd = 0.1;   // system per-unit, white error per pseudo bus
    double min_magnitude = 0.1;
    double max_magnitude = 2.0;
    double start_min = 0.4;
    double start_max = 1.2;
    double pf_angle_min = 0.1;  // radians, lagging
    double pf_angle_max = 0.4;
    /// Customer per-unit to system per-unit.
    double customer_scale = 0.05;

    void validate() const;
    int customers() const { return customers_per_area * areas; }
};

/// Customer currents for one day and the previous-day surrogate that serves
/// as pseudo data. Rows are steps, columns customers, customer per-unit.
struct CustomerProfiles {
    CMatrix truth;
    CMatrix previous_day;
};

/// Independent engine for (seed, stream, index).
std::mt19937_64 derived_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Circular complex Gaussian with E|w|^2 = sd^2.
Complex complex_normal(std::mt19937_64& rng, double sd);

/// `day` selects an independent draw of the same population.
CustomerProfiles generate_profiles(const ScenarioConfig& config, std::uint64_t day = 0);

/// Per-group elementwise sums; `membership[g]` lists the columns of group g.
CMatrix aggregate_subarea(const CMatrix& profiles, const std::vector<std::vector<int>>& membership);

/// Coefficient of variation of |part(t) / total(t)| over the series.
double scaling_factor_cv(const CVector& part, const CVector& total);

// ---------------------------------------------------------------- scenarios

struct Scenario {
    ScenarioConfig config;
    RadialNetwork network;
    std::vector<SubareaSpec> partition;
    MeteringPlan plan;
    std::vector<BusId> customer_bus;  // bus hosting each customer
};

/// Source bus 1, transformer to LV busbar 2, five area buses 3..7 with
/// twenty customers lumped on each. Feeder-head meters on bus 2 and branch 2.
Scenario six_bus_scenario(const ScenarioConfig& config);

/// Source, transformer, LV busbar and one trunk bus per area; every customer
/// is its own bus on a random lateral below its trunk bus. The last area's
/// lateral is split in two with the second half nested below a customer bus
/// of the first. Laterals are the subareas.
Scenario large_feeder_scenario(const ScenarioConfig& config);

struct TruthRun {
    CMatrix customer_currents;  // system per-unit, T x customers
    CMatrix injections;         // T x n
    FlowSeries flow;
    CMatrix pseudo_customers;   // previous-day surrogate, system per-unit
    CMatrix pseudo;             // bus pseudo data including white error, T x n
};

TruthRun simulate(const Scenario& scenario, std::uint64_t day = 0, Execution execution = Execution::parallel);

struct Spike {
    Eigen::Index step = 0;
    RowKind kind = RowKind::current;
    int device = 0;
    double multiple = 8.0;  // in meter SDs
};

/// Meter readings = truth + circular Gaussian noise at each meter's SD. A
/// spiked reading is the true value displaced by `multiple` SDs.
MeterStream corrupt_measurements(const TruthRun& truth, const RadialNetwork& network, const MeteringPlan& plan,
                                 std::uint64_t seed, const std::vector<Spike>& spikes = {});

/// Today's run, a calibration day and today's meter stream.
struct ScenarioData {
    TruthRun today;
    TruthRun history;
    MeterStream meters;

    PseudoHistory pseudo_history() const { return {today.pseudo, Calibration{history.injections, history.pseudo}}; }
};

ScenarioData generate_scenario_data(const Scenario& scenario, Execution execution = Execution::parallel);

}  // namespace dse
