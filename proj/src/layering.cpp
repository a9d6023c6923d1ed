#include "dse/layering.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "dse/wls.hpp"

namespace dse {

// ---------------------------------------------------------------- partition

Partition::Partition(const RadialNetwork& network, std::vector<SubareaSpec> specs)
    : main_(network) {
    for (auto id : network.bus_ids()) owner_[id] = 0;
    std::map<int, const SubareaSpec*> by_id;
    for (const auto& s : specs) {
        if (s.id <= 0) throw ValidationError("subarea ids must be positive");
        if (!by_id.emplace(s.id, &s).second)
            throw ValidationError("duplicate subarea id " + std::to_string(s.id));
        if (s.buses.empty()) throw ValidationError("subarea " + std::to_string(s.id) + " has no buses");
        if (!network.has_bus(s.boundary_bus))
            throw ValidationError("subarea " + std::to_string(s.id) + " boundary bus " +
                                  std::to_string(s.boundary_bus) + " is not a non-reference bus");
        for (BusId b : s.buses) {
            if (!network.has_bus(b))
                throw ValidationError("subarea " + std::to_string(s.id) + " lists unknown bus " + std::to_string(b));
            if (owner_[b] != 0)
                throw ValidationError("bus " + std::to_string(b) + " belongs to subareas " +
                                      std::to_string(owner_[b]) + " and " + std::to_string(s.id));
            owner_[b] = s.id;
        }
    }

    // Every child of a bus stays in the bus's area unless it starts a
    // subarea whose boundary is that bus.
    auto boundary_of = [&](int area) { return by_id.at(area)->boundary_bus; };
    for (Eigen::Index k = 0; k < network.size(); ++k) {
        BusId bus = network.bus_ids()[static_cast<size_t>(k)];
        BusId up = network.parent_id(k);
        int mine = owner_[bus];
        int above = up == network.reference_bus() ? 0 : owner_[up];
        if (mine == above) continue;
        if (mine == 0 || boundary_of(mine) != up)
            throw ValidationError("bus " + std::to_string(bus) + " crosses from area " + std::to_string(above) +
                                  " to area " + std::to_string(mine) + " away from a boundary bus");
    }

    std::map<int, int> layer_of;
    for (const auto& [id, spec] : by_id) {
        if (owner_[spec->boundary_bus] == id)
            throw ValidationError("subarea " + std::to_string(id) + " contains its own boundary bus");
        int depth = 2;
        int at = owner_[spec->boundary_bus];
        std::set<int> seen{id};
        while (at != 0) {
            if (!seen.insert(at).second) throw ValidationError("subarea nesting is cyclic");
            ++depth;
            at = owner_[boundary_of(at)];
        }
        layer_of[id] = depth;
    }

    std::vector<BusId> main_members;
    for (auto id : network.bus_ids())
        if (owner_[id] == 0) main_members.push_back(id);
    main_ = network.induced(network.reference_bus(), main_members);

    for (const auto& [id, spec] : by_id) {
        std::vector<BusId> members;
        for (auto b : network.bus_ids())
            if (owner_[b] == id) members.push_back(b);
        subareas_.push_back({id, spec->boundary_bus, owner_[spec->boundary_bus], layer_of[id], members,
                             network.induced(spec->boundary_bus, members)});
    }
    int deepest = 1;
    for (const auto& [id, layer] : layer_of) deepest = std::max(deepest, layer);
    layers_.assign(static_cast<size_t>(deepest - 1), {});
    for (const auto& s : subareas_) layers_[static_cast<size_t>(s.layer - 2)].push_back(s.id);
}

const Subarea& Partition::subarea(int id) const {
    for (const auto& s : subareas_)
        if (s.id == id) return s;
    throw ArgumentError("unknown subarea " + std::to_string(id));
}

int Partition::area_of(BusId bus) const {
    auto it = owner_.find(bus);
    if (it == owner_.end()) throw ArgumentError("unknown bus " + std::to_string(bus));
    return it->second;
}

// ---------------------------------------------------------- scaling factors

ScalingFactors compute_scaling_factors(const CVector& pseudo, Eigen::Index step, ScalingMode mode) {
    if (pseudo.size() == 0) throw ArgumentError("scaling factors need at least one component");
    CVector parts = pseudo;
    if (mode == ScalingMode::magnitude) parts = pseudo.cwiseAbs().cast<Complex>();
    const Complex total = parts.sum();
    if (std::abs(total) <= 1e-9)
        throw DegenerateDenominatorError("aggregate pseudo current is near zero at step " + std::to_string(step));
    return {parts / total, step};
}

ScalingFactors compute_scaling_factors(const CMatrix& pseudo_series, Eigen::Index step, ScalingMode mode) {
    require_shape(step >= 0 && step < pseudo_series.rows(), "scaling factor step outside the pseudo series");
    return compute_scaling_factors(CVector(pseudo_series.row(step).transpose()), step, mode);
}

CVector update_pseudo_injections(const ScalingFactors& sf, Complex measured_total) { return sf.sf * measured_total; }

// ------------------------------------------------------------------ inputs

MeterValues MeterStream::at(Eigen::Index t) const {
    MeterValues out;
    for (size_t k = 0; k < voltage_buses.size(); ++k)
        out.voltage[voltage_buses[k]] = voltage(t, static_cast<Eigen::Index>(k));
    for (size_t k = 0; k < current_branches.size(); ++k)
        out.current[current_branches[k]] = current(t, static_cast<Eigen::Index>(k));
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Factors with the equal-share fallback for degenerate denominators.
CVector safe_factors(const CVector& parts, Eigen::Index step, ScalingMode mode, EstimationDiagnostics& diag) {
    try {
        auto sf = compute_scaling_factors(parts, step, mode);
        diag.max_sf_sum_error = std::max(diag.max_sf_sum_error, std::abs(sf.sf.sum() - 1.0));
        return sf.sf;
    } catch (const DegenerateDenominatorError&) {
        ++diag.degenerate_scaling_steps;
        return CVector::Constant(parts.size(), 1.0 / static_cast<double>(parts.size()));
    }
}

CMatrix factor_series(const CMatrix& parts, ScalingMode mode, EstimationDiagnostics& diag) {
    CMatrix out(parts.rows(), parts.cols());
    for (Eigen::Index t = 0; t < parts.rows(); ++t)
        out.row(t) = safe_factors(parts.row(t).transpose(), t, mode, diag).transpose();
    return out;
}

void note_conservation(EstimationDiagnostics& diag, Complex sum, Complex total) {
    if (std::abs(total) > 0.0)
        diag.max_conservation_error = std::max(diag.max_conservation_error, std::abs(sum - total) / std::abs(total));
}

/// Off-line part of one filtered layer: matrices, scaling factors, noise
/// statistics.
struct LayerModel {
    const RadialNetwork* network = nullptr;
    MeteringPlan plan;
    BibcMatrix bibc;
    DlfMatrix dlf;
    ObservationMatrix obs;
    std::optional<Eigen::Index> head_row;  // current row carrying the whole layer load
    CMatrix pseudo;                        // aggregated per local bus, T x n
    CMatrix factors;                       // scaling factors per step, when head_row is set
    StateSpaceModel model;
    AugmentedCovariance p0;

    CVector pseudo_at(Eigen::Index t, Complex head_current, EstimationDiagnostics& diag) const {
        if (!head_row) return pseudo.row(t).transpose();
        CVector updated = update_pseudo_injections({factors.row(t).transpose(), t}, head_current);
        note_conservation(diag, updated.sum(), head_current);
        return updated;
    }
};

LayerModel build_layer(const RadialNetwork& network, const MeteringPlan& plan, CMatrix pseudo,
                       const std::optional<Calibration>& calibration, const EstimatorConfig& config,
                       EstimationDiagnostics& diag) {
    LayerModel m;
    m.network = &network;
    m.plan = plan;
    m.bibc = build_bibc(network);
    m.dlf = build_dlf(network);
    m.obs = build_observation_matrix(plan, network, m.bibc, m.dlf);
    m.pseudo = std::move(pseudo);
    const auto n = network.size();
    const auto& layout = m.obs.layout;

    if (config.update_pseudo) {
        for (size_t k = 0; k < layout.current_branch.size(); ++k) {
            const auto row = m.bibc.entries.row(layout.current_branch[k]);
            if ((row.array() == Complex(1.0, 0.0)).all()) {
                m.head_row = layout.current_offset() + static_cast<Eigen::Index>(k);
                break;
            }
        }
    }
    if (m.head_row) m.factors = factor_series(m.pseudo, config.scaling_mode, diag);
    diag.pseudo_updated = m.head_row.has_value();

    auto pseudo_columns = [&](const CMatrix& full) {
        CMatrix out(full.rows(), static_cast<Eigen::Index>(layout.pseudo_bus.size()));
        for (size_t k = 0; k < layout.pseudo_bus.size(); ++k)
            out.col(static_cast<Eigen::Index>(k)) = full.col(layout.pseudo_bus[k]);
        return out;
    };

    std::optional<AugmentedCovariance> pseudo_block;
    AugmentedCovariance q;
    if (calibration && calibration->truth.rows() >= 3) {
        const CMatrix& truth = calibration->truth;
        CMatrix rows = calibration->pseudo;
        if (m.head_row) {
            EstimationDiagnostics scratch;
            CMatrix hist_factors = factor_series(calibration->pseudo, config.scaling_mode, scratch);
            for (Eigen::Index t = 0; t < rows.rows(); ++t) rows.row(t) = hist_factors.row(t) * truth.row(t).sum();
        }
        const CMatrix errors = rows - truth;
        m.p0 = estimate_noise_covariance(errors).covariance;
        pseudo_block = estimate_noise_covariance(pseudo_columns(errors)).covariance;
        const auto steps = truth.rows();
        q = estimate_noise_covariance(truth.bottomRows(steps - 1) - truth.topRows(steps - 1)).covariance;
    } else {
        const auto steps = m.pseudo.rows();
        if (steps < 3) throw ArgumentError("pseudo history too short to estimate process noise");
        q = estimate_noise_covariance(m.pseudo.bottomRows(steps - 1) - m.pseudo.topRows(steps - 1)).covariance;
        m.p0 = AugmentedCovariance::proper(CMatrix::Identity(n, n) * plan.pseudo_sd * plan.pseudo_sd);
    }
    m.model = StateSpaceModel::random_walk(m.obs.h, q, build_r(layout, pseudo_block));
    return m;
}

/// Assembled measurement vector for one step. `head_override` replaces the
/// head current used for the pseudo update (bad-data substitution).
CVector measurement_vector(const LayerModel& m, Eigen::Index t, const MeterValues& readings, Complex v_ref,
                           std::optional<Complex> head_override, EstimationDiagnostics& diag) {
    Complex head{};
    if (m.head_row) {
        BranchId id = m.network->branch_ids()[static_cast<size_t>(
            m.obs.layout.current_branch[static_cast<size_t>(*m.head_row - m.obs.layout.current_offset())])];
        auto it = readings.current.find(id);
        if (it == readings.current.end())
            throw DataError("missing reading for current meter on branch " + std::to_string(id));
        head = head_override ? *head_override : it->second;
    }
    CVector pseudo = m.pseudo_at(t, head, diag);
    return assemble_frame(m.obs.layout, *m.network, pseudo, readings, v_ref, static_cast<long>(t)).stacked();
}

/// Real-time part of one filtered layer.
class FilterLayer {
public:
    FilterLayer(LayerModel model, const EstimatorConfig& config)
        : m_(std::move(model)), config_(config), band_(m_.obs.layout.rows(), config.band_window, config.band_warmup) {}

    const LayerModel& model() const { return m_; }

    /// Returns the posterior state; `v_ref` is the layer root voltage.
    const CVector& step(Eigen::Index t, const MeterValues& readings, Complex v_ref, EstimationDiagnostics& diag) {
        const auto& layout = m_.obs.layout;
        if (!state_) {
            CVector y0 = measurement_vector(m_, t, readings, v_ref, std::nullopt, diag);
            CVector x0(m_.network->size());
            for (Eigen::Index l = 0; l < x0.size(); ++l) x0(l) = 0.0;
            if (m_.head_row) {
                BranchId id = m_.network->branch_ids()[static_cast<size_t>(
                    layout.current_branch[static_cast<size_t>(*m_.head_row - layout.current_offset())])];
                x0 = update_pseudo_injections({m_.factors.row(t).transpose(), t}, readings.current.at(id));
            } else {
                x0 = m_.pseudo.row(t).transpose();
            }
            state_ = init(x0, m_.p0);
        }
        FilterState predicted = predict(*state_, m_.model);

        std::optional<Complex> head_override;
        std::vector<double> scale;
        if (config_.detect_bad_data && layout.voltage_offset() + static_cast<Eigen::Index>(layout.voltage_bus.size()) >
                                           layout.current_offset()) {
            CVector y = measurement_vector(m_, t, readings, v_ref, std::nullopt, scratch_);
            const auto first = layout.current_offset();
            const auto count = layout.rows() - first;
            CVector e = y.tail(count) - m_.model.h.bottomRows(count) * predicted.x_hat;
            RVector sd = band_.sd();
            for (Eigen::Index k = 0; k < count; ++k) {
                const auto row = first + k;
                const double limit = config_.bad_data_k * sd(row);
                if (band_.ready(row) && std::abs(e(k)) > limit) {
                    if (scale.empty()) scale.assign(static_cast<size_t>(layout.rows()), 1.0);
                    scale[static_cast<size_t>(row)] = config_.bad_data_inflation;
                    diag.bad_data.push_back(make_event(t, row, std::abs(e(k)), limit));
                    if (m_.head_row && row == *m_.head_row)
                        head_override = (m_.model.h.row(row) * predicted.x_hat)(0);
                } else {
                    band_.push(row, e(k));
                }
            }
        }
        CVector y = measurement_vector(m_, t, readings, v_ref, head_override, diag);
        if (scale.empty())
            state_ = update(predicted, y, m_.model, config_.filter);
        else
            state_ = update(predicted, y, m_.model, config_.filter, std::span<const double>(scale));
        diag.regularized_updates = std::max(diag.regularized_updates, state_->diagnostics.regularized_updates);
        return state_->x_hat;
    }

private:
    BadDataEvent make_event(Eigen::Index t, Eigen::Index row, double value, double limit) const {
        const auto& layout = m_.obs.layout;
        BadDataEvent ev{t, layout.kind(row), 0, value, limit};
        if (ev.kind == RowKind::current)
            ev.device = m_.network->branch_ids()[static_cast<size_t>(
                layout.current_branch[static_cast<size_t>(row - layout.current_offset())])];
        else
            ev.device = m_.network->bus_ids()[static_cast<size_t>(
                layout.voltage_bus[static_cast<size_t>(row - layout.voltage_offset())])];
        return ev;
    }

    LayerModel m_;
    EstimatorConfig config_;
    InnovationBand band_;
    std::optional<FilterState> state_;
    EstimationDiagnostics scratch_;
};

void check_inputs(const RadialNetwork& network, const PseudoHistory& history, const MeterStream& meters,
                  Eigen::Index steps) {
    if (steps <= 0) throw ArgumentError("step count must be positive");
    require_shape(history.pseudo.rows() >= steps && history.pseudo.cols() == network.size(),
                  "pseudo history must cover every step and every bus");
    require_shape(meters.steps() >= steps, "meter stream shorter than the requested step count");
    if (history.calibration) {
        const auto& c = *history.calibration;
        require_shape(c.truth.cols() == network.size() && c.pseudo.cols() == network.size() &&
                          c.truth.rows() == c.pseudo.rows(),
                      "calibration series must match the network and each other");
    }
}

CMatrix select_columns(const CMatrix& full, const std::vector<Eigen::Index>& columns) {
    CMatrix out(full.rows(), static_cast<Eigen::Index>(columns.size()));
    for (size_t k = 0; k < columns.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = full.col(columns[k]);
    return out;
}

// ------------------------------------------------------------- layered model

/// One area of the partition with its aggregation bookkeeping.
struct AreaModel {
    int id = 0;
    int parent = -1;                   // index into the area list, -1 for main
    Eigen::Index parent_local = -1;    // boundary bus index within the parent area
    const RadialNetwork* network = nullptr;
    std::vector<Eigen::Index> global;  // local bus -> full network bus index
    std::vector<std::vector<size_t>> children;  // local bus -> child area indices
    BibcMatrix bibc;
    DlfMatrix dlf;
    CMatrix own_pseudo;  // T x n_local
    CMatrix aggregate;   // own + child totals
    CMatrix factors;     // scaling factors within the area
    CMatrix shares;      // for subareas: share at the parent boundary bus, T x 1
    std::vector<Eigen::Index> attach_branches;  // full network branches entering the area
};

/// Per-step values of one area.
struct AreaState {
    CVector injections;  // aggregated per local bus
    CVector voltages;
    Complex total;
    double conservation = 0.0;
};

struct LayeredModel {
    std::vector<AreaModel> areas;  // main first
    std::vector<std::vector<size_t>> layers;
};

/// Totals entering each area plus aggregates per local bus, computed from
/// branch currents of a full-network flow (rows are steps).
void aggregate_areas(std::vector<AreaModel>& areas, const CMatrix& own, const CMatrix& branch_currents,
                     std::vector<CMatrix>& totals_out, std::vector<CMatrix>& aggregates_out) {
    const auto steps = own.rows();
    totals_out.assign(areas.size(), CMatrix());
    aggregates_out.assign(areas.size(), CMatrix());
    for (size_t a = 0; a < areas.size(); ++a) {
        auto& area = areas[a];
        if (area.parent >= 0) {
            CMatrix total = CMatrix::Zero(steps, 1);
            for (auto b : area.attach_branches) total.col(0) += branch_currents.col(b);
            totals_out[a] = std::move(total);
        }
    }
    for (size_t a = 0; a < areas.size(); ++a) {
        const auto& area = areas[a];
        CMatrix agg = select_columns(own, area.global);
        for (size_t l = 0; l < area.children.size(); ++l)
            for (auto c : area.children[l]) agg.col(static_cast<Eigen::Index>(l)) += totals_out[c].col(0);
        aggregates_out[a] = std::move(agg);
    }
}

}  // namespace

// --------------------------------------------------------------- estimators

EstimationResult run_single_layer(const RadialNetwork& network, const MeteringPlan& plan,
                                  const PseudoHistory& history, const MeterStream& meters, Eigen::Index steps,
                                  const EstimatorConfig& config) {
    check_inputs(network, history, meters, steps);
    EstimationResult result;
    auto& diag = result.diagnostics;
    auto start = Clock::now();
    FilterLayer layer(build_layer(network, plan, history.pseudo, history.calibration, config, diag), config);
    diag.offline_seconds = seconds_since(start);

    result.voltages.resize(steps, network.size());
    result.injections.resize(steps, network.size());
    start = Clock::now();
    for (Eigen::Index t = 0; t < steps; ++t) {
        const MeterValues readings = meters.at(t);
        const Complex v_ref = reference_voltage(plan, network, readings);
        const CVector& x = layer.step(t, readings, v_ref, diag);
        const auto flow = direct_load_flow(layer.model().bibc, layer.model().dlf, x, v_ref);
        result.injections.row(t) = x.transpose();
        result.voltages.row(t) = flow.bus_voltages.transpose();
    }
    diag.realtime_seconds = seconds_since(start);
    return result;
}

EstimationResult run_multilayer(const RadialNetwork& network, const Partition& partition, const MeteringPlan& plan,
                                const PseudoHistory& history, const MeterStream& meters, Eigen::Index steps,
                                const EstimatorConfig& config) {
    check_inputs(network, history, meters, steps);
    EstimationResult result;
    auto& diag = result.diagnostics;
    auto start = Clock::now();

    // Area matrices.
    LayeredModel lm;
    std::unordered_map<int, size_t> index_of{{0, 0}};
    lm.areas.push_back({});
    lm.areas[0].network = &partition.main_area();
    for (const auto& s : partition.subareas()) {
        index_of[s.id] = lm.areas.size();
        AreaModel a;
        a.id = s.id;
        a.network = &s.network;
        lm.areas.push_back(std::move(a));
    }
    for (auto& area : lm.areas) {
        area.bibc = build_bibc(*area.network);
        area.dlf = build_dlf(*area.network);
        for (auto id : area.network->bus_ids()) area.global.push_back(network.bus_index(id));
        area.children.assign(area.global.size(), {});
    }
    for (const auto& s : partition.subareas()) {
        auto& area = lm.areas[index_of.at(s.id)];
        auto& parent = lm.areas[index_of.at(s.parent)];
        area.parent = static_cast<int>(index_of.at(s.parent));
        area.parent_local = parent.network->bus_index(s.boundary_bus);
        parent.children[static_cast<size_t>(area.parent_local)].push_back(index_of.at(s.id));
        for (auto id : s.members)
            if (network.parent_id(network.bus_index(id)) == s.boundary_bus)
                area.attach_branches.push_back(network.bus_index(id));
    }
    for (const auto& layer : partition.layer_schedule()) {
        lm.layers.emplace_back();
        for (int id : layer) lm.layers.back().push_back(index_of.at(id));
    }

    // Pseudo power flow on the whole network.
    const auto full_bibc = build_bibc(network);
    const auto full_dlf = build_dlf(network);
    auto branch_flows = [&](const CMatrix& injections) {
        return flow_series(full_bibc, full_dlf, injections, CVector::Ones(injections.rows()), config.execution)
            .branch_currents;
    };
    const CMatrix pseudo = history.pseudo.topRows(steps);
    std::vector<CMatrix> totals, aggregates;
    aggregate_areas(lm.areas, pseudo, branch_flows(pseudo), totals, aggregates);

    std::optional<Calibration> main_calibration;
    if (history.calibration) {
        std::vector<CMatrix> ht, ha, pt, pa;
        aggregate_areas(lm.areas, history.calibration->truth, branch_flows(history.calibration->truth), ht, ha);
        aggregate_areas(lm.areas, history.calibration->pseudo, branch_flows(history.calibration->pseudo), pt, pa);
        main_calibration = Calibration{ha[0], pa[0]};
    }

    // Scaling factors within each subarea and shares at boundaries.
    for (size_t a = 1; a < lm.areas.size(); ++a) {
        auto& area = lm.areas[a];
        area.aggregate = aggregates[a];
        area.factors = factor_series(area.aggregate, config.scaling_mode, diag);
        const auto& parent = lm.areas[static_cast<size_t>(area.parent)];
        const auto boundary = area.parent_local;
        const auto& siblings = parent.children[static_cast<size_t>(boundary)];
        const auto slot = static_cast<Eigen::Index>(std::find(siblings.begin(), siblings.end(), a) - siblings.begin());
        area.shares.resize(steps, 1);
        CVector parts(static_cast<Eigen::Index>(siblings.size()) + 1);
        for (Eigen::Index t = 0; t < steps; ++t) {
            parts(0) = pseudo(t, parent.global[static_cast<size_t>(boundary)]);
            for (size_t s = 0; s < siblings.size(); ++s)
                parts(static_cast<Eigen::Index>(s) + 1) = totals[siblings[s]](t, 0);
            area.shares(t, 0) = safe_factors(parts, t, config.scaling_mode, diag)(slot + 1);
        }
    }

    MeteringPlan main_plan = plan.restricted_to(partition.main_area());
    FilterLayer main_layer(build_layer(partition.main_area(), main_plan, aggregates[0], main_calibration, config, diag),
                           config);
    diag.offline_seconds = seconds_since(start);

    result.voltages.resize(steps, network.size());
    result.injections.resize(steps, network.size());
    std::vector<AreaState> state(lm.areas.size());
    start = Clock::now();
    for (Eigen::Index t = 0; t < steps; ++t) {
        // Main-area ACKF with updated pseudo data.
        const MeterValues readings = meters.at(t);
        const Complex v_ref = reference_voltage(plan, network, readings);
        auto& main = state[0];
        main.injections = main_layer.step(t, readings, v_ref, diag);
        // Boundary voltages.
        main.voltages = direct_load_flow(lm.areas[0].bibc, lm.areas[0].dlf, main.injections, v_ref).bus_voltages;

        // Subareas one layer at a time; subareas within a layer are independent.
        for (const auto& layer : lm.layers) {
            auto solve = [&](size_t a) {
                const auto& area = lm.areas[a];
                const auto& parent = state[static_cast<size_t>(area.parent)];
                auto& s = state[a];
                s.total = area.shares(t, 0) * parent.injections(area.parent_local);
                s.injections = update_pseudo_injections({area.factors.row(t).transpose(), t}, s.total);
                s.conservation = std::abs(s.total) > 0.0 ? std::abs(s.injections.sum() - s.total) / std::abs(s.total) : 0.0;
                s.voltages = subarea_forward_solve(area.bibc, area.dlf, s.injections, parent.voltages(area.parent_local))
                                 .bus_voltages;
            };
            const auto count = static_cast<long>(layer.size());
            if (config.execution == Execution::parallel && count > 1) {
#pragma omp parallel for schedule(static)
                for (long k = 0; k < count; ++k) solve(layer[static_cast<size_t>(k)]);
            } else {
                for (long k = 0; k < count; ++k) solve(layer[static_cast<size_t>(k)]);
            }
            for (auto a : layer) diag.max_conservation_error = std::max(diag.max_conservation_error, state[a].conservation);
        }

        for (size_t a = 0; a < lm.areas.size(); ++a) {
            const auto& area = lm.areas[a];
            const auto& s = state[a];
            for (size_t l = 0; l < area.global.size(); ++l) {
                Complex own = s.injections(static_cast<Eigen::Index>(l));
                if (!area.children[l].empty()) {
                    Complex attached{};
                    for (auto c : area.children[l]) attached += state[c].total;
                    note_conservation(diag, own, attached + (own - attached));
                    own -= attached;
                }
                result.injections(t, area.global[l]) = own;
                result.voltages(t, area.global[l]) = s.voltages(static_cast<Eigen::Index>(l));
            }
        }
    }
    diag.realtime_seconds = seconds_since(start);
    return result;
}

EstimationResult run_wls(const RadialNetwork& network, const MeteringPlan& plan, const PseudoHistory& history,
                         const MeterStream& meters, Eigen::Index steps, const EstimatorConfig& config) {
    check_inputs(network, history, meters, steps);
    EstimationResult result;
    auto& diag = result.diagnostics;
    auto start = Clock::now();
    const LayerModel m = build_layer(network, plan, history.pseudo, history.calibration, config, diag);
    const WlsSolver solver(m.obs.h, WlsConfig::from_covariance(m.model.r));
    diag.offline_seconds = seconds_since(start);

    start = Clock::now();
    CMatrix ys(steps, m.obs.layout.rows());
    CVector v_ref(steps);
    for (Eigen::Index t = 0; t < steps; ++t) {
        const MeterValues readings = meters.at(t);
        v_ref(t) = reference_voltage(plan, network, readings);
        ys.row(t) = measurement_vector(m, t, readings, v_ref(t), std::nullopt, diag).transpose();
    }
    result.injections = wls_track(solver, ys, config.execution);
    result.voltages = flow_series(m.bibc, m.dlf, result.injections, v_ref, config.execution).bus_voltages;
    diag.realtime_seconds = seconds_since(start);
    return result;
}

}  // namespace dse
