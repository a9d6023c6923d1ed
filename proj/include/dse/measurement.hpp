#pragma once

#include <map>
#include <optional>
#include <vector>

#include "dse/augmented_complex.hpp"
#include "dse/grid_model.hpp"

namespace dse {

struct VoltageMeter {
    BusId bus = 0;
    double sd = 0.01;  // per-unit
};

struct CurrentMeter {
    BranchId branch = 0;
    double sd = 0.01;  // per-unit
};

/// Which quantities are metered and which buses carry pseudo injections.
/// A voltage meter on the reference bus supplies v_ref and adds no row.
struct MeteringPlan {
    std::vector<VoltageMeter> voltage_meters;
    std::vector<CurrentMeter> current_meters;
    std::vector<BusId> pseudo_buses;  // empty: every non-reference bus
    double pseudo_sd = 0.1;
    std::map<BusId, double> pseudo_sd_override;

    /// Plan restricted to the devices of `network`: pseudo buses outside it
    /// are dropped, as are meters on unknown buses or branches.
    MeteringPlan restricted_to(const RadialNetwork& network) const;
};

enum class RowKind { pseudo, current, voltage };

/// Row bookkeeping shared by H, R and measurement vectors. Row blocks are
/// ordered pseudo injections, metered branch currents, metered voltages.
struct MeasurementLayout {
    std::vector<Eigen::Index> pseudo_bus;      // network bus index per pseudo row
    std::vector<Eigen::Index> current_branch;  // network branch index per current row
    std::vector<Eigen::Index> voltage_bus;     // network bus index per voltage row
    std::vector<double> pseudo_sd;
    std::vector<double> current_sd;
    std::vector<double> voltage_sd;
    std::optional<double> reference_meter_sd;

    Eigen::Index rows() const {
        return static_cast<Eigen::Index>(pseudo_bus.size() + current_branch.size() + voltage_bus.size());
    }
    Eigen::Index current_offset() const { return static_cast<Eigen::Index>(pseudo_bus.size()); }
    Eigen::Index voltage_offset() const {
        return static_cast<Eigen::Index>(pseudo_bus.size() + current_branch.size());
    }
    RowKind kind(Eigen::Index row) const;
    /// Metered rows (branch currents and bus voltages); pseudo rows are not
    /// monitored for bad data.
    std::vector<bool> monitored_rows() const;
};

MeasurementLayout make_layout(const MeteringPlan& plan, const RadialNetwork& network);

struct ObservationMatrix {
    CMatrix h;
    MeasurementLayout layout;
};

/// H = [I (pseudo rows); BIBC_m; -DLF_m]. Throws PlanError for unknown
/// devices and ObservabilityError when H lacks full column rank.
ObservationMatrix build_observation_matrix(const MeteringPlan& plan, const RadialNetwork& network,
                                           const BibcMatrix& bibc, const DlfMatrix& dlf);

/// Complex meter values for one time step, keyed by device id.
struct MeterValues {
    std::map<BusId, Complex> voltage;
    std::map<BranchId, Complex> current;
};

/// One time step of measurements. Voltage rows hold v_measured - v_ref so the
/// -DLF_m rows of H apply without an affine term.
struct MeasurementFrame {
    CVector pseudo_i_inj;
    CVector metered_i_branch;
    CVector metered_v;
    long timestamp = 0;
    Complex v_ref{1.0, 0.0};

    CVector stacked() const;
};

/// v_ref from the reference-bus voltage meter when present, else 1 + 0j.
Complex reference_voltage(const MeteringPlan& plan, const RadialNetwork& network, const MeterValues& readings);

/// `pseudo` holds one entry per network bus (network order).
MeasurementFrame assemble_frame(const MeasurementLayout& layout, const RadialNetwork& network,
                                const CVector& pseudo, const MeterValues& readings, Complex v_ref,
                                long timestamp = 0);

/// Block-diagonal R^a over pseudo, branch-current and voltage rows. When
/// `pseudo_block` is given it replaces the diagonal pseudo variances.
AugmentedCovariance build_r(const MeasurementLayout& layout,
                            const std::optional<AugmentedCovariance>& pseudo_block = std::nullopt);

struct BadDataReport {
    /// flags(t, row) for each step and measurement row.
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> flags;
    RVector sd_band;
    double multiplier = 5.0;

    Eigen::Index flagged_count() const { return flags.count(); }
};

/// Flags monitored rows whose innovation magnitude exceeds k * SD. One step
/// per row of `innovations`.
BadDataReport detect_bad_data(const CMatrix& innovations, const RVector& sd_band, double k = 5.0,
                              const std::vector<bool>& monitored = {});

/// Per-row innovation SD over a trailing window of accepted samples.
class InnovationBand {
public:
    InnovationBand(Eigen::Index rows, Eigen::Index window = 1440, Eigen::Index warmup = 30);

    /// SD per row; zero for rows still warming up.
    RVector sd() const;
    bool ready(Eigen::Index row) const;
    void push(Eigen::Index row, Complex value);

private:
    Eigen::Index window_;
    Eigen::Index warmup_;
    std::vector<std::vector<Complex>> samples_;
    std::vector<size_t> head_;
};

struct SynthesizedValue {
    Complex value;
    bool fallback = false;  // pseudo quantity was zero; angle 0 used
};

struct MeterLocation {
    RowKind kind = RowKind::voltage;  // voltage: bus index, current: branch index
    Eigen::Index index = 0;
};

/// magnitude * exp(j angle(pseudo quantity at location)).
SynthesizedValue synthesize_angle(double magnitude, const FlowSolution& pseudo_solution, MeterLocation location);

}  // namespace dse
