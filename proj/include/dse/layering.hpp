#pragma once

#include <algorithm>
#include <memory>
#include <unordered_map>
#include <optional>
#include <vector>

#include "dse/ackf.hpp"
#include "dse/measurement.hpp"

namespace dse {

// ---------------------------------------------------------------- partition

struct SubareaSpec {
    int id = 0;
    BusId boundary_bus = 0;
    std::vector<BusId> buses;
};

struct Subarea {
    int id = 0;
    BusId boundary_bus = 0;
    int parent = 0;  // 0: main area, otherwise the parent subarea id
    int layer = 2;
    std::vector<BusId> members;
    RadialNetwork network;  // rooted at the boundary bus
};

/// Main area plus subareas hanging from boundary buses. Layer 1 is the main
/// area, layer 2 the subareas attached to it, deeper layers nest inside
/// subareas.
class Partition {
public:
    Partition(const RadialNetwork& network, std::vector<SubareaSpec> specs);

    const RadialNetwork& main_area() const { return main_; }
    const std::vector<Subarea>& subareas() const { return subareas_; }
    const Subarea& subarea(int id) const;
    /// Subarea ids per layer, starting at layer 2.
    const std::vector<std::vector<int>>& layer_schedule() const { return layers_; }
    /// Area owning a bus: 0 for the main area.
    int area_of(BusId bus) const;

private:
    RadialNetwork main_;
    std::vector<Subarea> subareas_;
    std::vector<std::vector<int>> layers_;
    std::unordered_map<BusId, int> owner_;
};

// ---------------------------------------------------------- scaling factors

enum class ScalingMode { complex, magnitude };

struct ScalingFactors {
    CVector sf;
    Eigen::Index step = 0;
};

/// SF_j = P_j / sum_i P_i over the components of one step. Throws
/// DegenerateDenominatorError when |sum| <= 1e-9.
ScalingFactors compute_scaling_factors(const CVector& pseudo, Eigen::Index step = 0,
                                       ScalingMode mode = ScalingMode::complex);
/// Row `step` of a per-component time series (rows are steps).
ScalingFactors compute_scaling_factors(const CMatrix& pseudo_series, Eigen::Index step,
                                       ScalingMode mode = ScalingMode::complex);

/// SF_j * measured_total.
CVector update_pseudo_injections(const ScalingFactors& sf, Complex measured_total);

// ------------------------------------------------------------------ inputs

/// Dense meter time series: one row per step, one column per device.
struct MeterStream {
    std::vector<BusId> voltage_buses;
    std::vector<BranchId> current_branches;
    CMatrix voltage;
    CMatrix current;

    Eigen::Index steps() const { return std::max(voltage.rows(), current.rows()); }
    MeterValues at(Eigen::Index t) const;
};

/// Historical day pair: injections as later measured, and the pseudo data
/// that stood in for them. Rows are steps, columns network buses.
struct Calibration {
    CMatrix truth;
    CMatrix pseudo;
};

struct PseudoHistory {
    CMatrix pseudo;  // previous-day injections used as pseudo data, T x n
    std::optional<Calibration> calibration;
};

struct EstimatorConfig {
    FilterOptions filter;
    ScalingMode scaling_mode = ScalingMode::complex;
    /// Rescale pseudo rows by the feeder-head current when such a meter exists.
    bool update_pseudo = true;
    bool detect_bad_data = true;
    double bad_data_k = 5.0;
    double bad_data_inflation = 1e6;
    Eigen::Index band_window = 1440;
    Eigen::Index band_warmup = 30;
    Execution execution = Execution::parallel;
};

struct BadDataEvent {
    Eigen::Index step = 0;
    RowKind kind = RowKind::current;
    int device = 0;
    double innovation = 0.0;
    double limit = 0.0;
};

struct EstimationDiagnostics {
    std::vector<BadDataEvent> bad_data;
    long regularized_updates = 0;
    long degenerate_scaling_steps = 0;
    bool pseudo_updated = false;
    /// Largest |sum SF - 1| seen.
    double max_sf_sum_error = 0.0;
    /// Largest |sum of updated injections - parent total| / |parent total|.
    double max_conservation_error = 0.0;
    double offline_seconds = 0.0;
    double realtime_seconds = 0.0;
};

struct EstimationResult {
    CMatrix voltages;     // T x n, full network order
    CMatrix injections;   // T x n
    EstimationDiagnostics diagnostics;
};

// --------------------------------------------------------------- estimators

/// ACKF over the full injected-current state vector.
EstimationResult run_single_layer(const RadialNetwork& network, const MeteringPlan& plan,
                                  const PseudoHistory& history, const MeterStream& meters, Eigen::Index steps,
                                  const EstimatorConfig& config = {});

/// Hierarchical estimator: ACKF on the main area, boundary voltages from its
/// estimate, subarea injections from scaling factors and forward solves per
/// layer. Meters inside subareas are not used.
EstimationResult run_multilayer(const RadialNetwork& network, const Partition& partition, const MeteringPlan& plan,
                                const PseudoHistory& history, const MeterStream& meters, Eigen::Index steps,
                                const EstimatorConfig& config = {});

/// Snapshot WLS on the same measurement frames as the single-layer ACKF.
EstimationResult run_wls(const RadialNetwork& network, const MeteringPlan& plan, const PseudoHistory& history,
                         const MeterStream& meters, Eigen::Index steps, const EstimatorConfig& config = {});

}  // namespace dse
