#include "dse/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/QR>

namespace dse {

MeteringPlan MeteringPlan::restricted_to(const RadialNetwork& network) const {
    MeteringPlan out;
    out.pseudo_sd = pseudo_sd;
    out.pseudo_sd_override = pseudo_sd_override;
    for (const auto& vm : voltage_meters)
        if (network.has_bus(vm.bus) || vm.bus == network.reference_bus()) out.voltage_meters.push_back(vm);
    for (const auto& cm : current_meters)
        if (network.has_branch(cm.branch)) out.current_meters.push_back(cm);
    if (pseudo_buses.empty()) return out;
    for (BusId b : pseudo_buses)
        if (network.has_bus(b)) out.pseudo_buses.push_back(b);
    return out;
}

RowKind MeasurementLayout::kind(Eigen::Index row) const {
    if (row < current_offset()) return RowKind::pseudo;
    if (row < voltage_offset()) return RowKind::current;
    return RowKind::voltage;
}

std::vector<bool> MeasurementLayout::monitored_rows() const {
    std::vector<bool> out(static_cast<size_t>(rows()), true);
    std::fill(out.begin(), out.begin() + current_offset(), false);
    return out;
}

MeasurementLayout make_layout(const MeteringPlan& plan, const RadialNetwork& network) {
    auto check_sd = [](double sd, const std::string& what) {
        if (!(sd > 0.0)) throw ArgumentError(what + " standard deviation must be positive");
    };
    MeasurementLayout layout;
    std::vector<BusId> pseudo = plan.pseudo_buses;
    if (pseudo.empty()) pseudo = network.bus_ids();
    std::set<BusId> seen;
    for (BusId b : pseudo) {
        if (!seen.insert(b).second) throw PlanError("pseudo bus " + std::to_string(b) + " listed twice");
        layout.pseudo_bus.push_back(network.bus_index(b));
        auto it = plan.pseudo_sd_override.find(b);
        double sd = it == plan.pseudo_sd_override.end() ? plan.pseudo_sd : it->second;
        check_sd(sd, "pseudo bus " + std::to_string(b));
        layout.pseudo_sd.push_back(sd);
    }
    for (const auto& cm : plan.current_meters) {
        layout.current_branch.push_back(network.branch_index(cm.branch));
        check_sd(cm.sd, "current meter on branch " + std::to_string(cm.branch));
        layout.current_sd.push_back(cm.sd);
    }
    for (const auto& vm : plan.voltage_meters) {
        check_sd(vm.sd, "voltage meter on bus " + std::to_string(vm.bus));
        if (vm.bus == network.reference_bus()) {
            if (layout.reference_meter_sd) throw PlanError("reference bus carries two voltage meters");
            layout.reference_meter_sd = vm.sd;
            continue;
        }
        layout.voltage_bus.push_back(network.bus_index(vm.bus));
        layout.voltage_sd.push_back(vm.sd);
    }
    return layout;
}

ObservationMatrix build_observation_matrix(const MeteringPlan& plan, const RadialNetwork& network,
                                           const BibcMatrix& bibc, const DlfMatrix& dlf) {
    const auto n = network.size();
    require_shape(bibc.entries.cols() == n && dlf.entries.cols() == n, "BIBC/DLF do not match the network");
    ObservationMatrix out{CMatrix::Zero(0, n), make_layout(plan, network)};
    const auto& layout = out.layout;
    out.h = CMatrix::Zero(layout.rows(), n);
    Eigen::Index row = 0;
    for (auto b : layout.pseudo_bus) out.h(row++, b) = 1.0;
    for (auto br : layout.current_branch) out.h.row(row++) = bibc.entries.row(br);
    for (auto b : layout.voltage_bus) out.h.row(row++) = -dlf.entries.row(b);

    Eigen::ColPivHouseholderQR<CMatrix> qr(out.h);
    if (qr.rank() < n)
        throw ObservabilityError("observation matrix has rank " + std::to_string(qr.rank()) + " < " +
                                 std::to_string(n) + " states");
    return out;
}

CVector MeasurementFrame::stacked() const {
    CVector y(pseudo_i_inj.size() + metered_i_branch.size() + metered_v.size());
    y << pseudo_i_inj, metered_i_branch, metered_v;
    return y;
}

Complex reference_voltage(const MeteringPlan& plan, const RadialNetwork& network, const MeterValues& readings) {
    for (const auto& vm : plan.voltage_meters) {
        if (vm.bus != network.reference_bus()) continue;
        auto it = readings.voltage.find(vm.bus);
        if (it == readings.voltage.end())
            throw DataError("missing reading for reference voltage meter on bus " + std::to_string(vm.bus));
        return it->second;
    }
    return {1.0, 0.0};
}

MeasurementFrame assemble_frame(const MeasurementLayout& layout, const RadialNetwork& network,
                                const CVector& pseudo, const MeterValues& readings, Complex v_ref, long timestamp) {
    require_shape(pseudo.size() == network.size(), "pseudo vector must have one entry per network bus");
    MeasurementFrame f;
    f.timestamp = timestamp;
    f.v_ref = v_ref;
    f.pseudo_i_inj.resize(static_cast<Eigen::Index>(layout.pseudo_bus.size()));
    for (size_t k = 0; k < layout.pseudo_bus.size(); ++k)
        f.pseudo_i_inj(static_cast<Eigen::Index>(k)) = pseudo(layout.pseudo_bus[k]);

    f.metered_i_branch.resize(static_cast<Eigen::Index>(layout.current_branch.size()));
    for (size_t k = 0; k < layout.current_branch.size(); ++k) {
        BranchId id = network.branch_ids()[static_cast<size_t>(layout.current_branch[k])];
        auto it = readings.current.find(id);
        if (it == readings.current.end())
            throw DataError("missing reading for current meter on branch " + std::to_string(id) + " at step " +
                            std::to_string(timestamp));
        f.metered_i_branch(static_cast<Eigen::Index>(k)) = it->second;
    }

    f.metered_v.resize(static_cast<Eigen::Index>(layout.voltage_bus.size()));
    for (size_t k = 0; k < layout.voltage_bus.size(); ++k) {
        BusId id = network.bus_ids()[static_cast<size_t>(layout.voltage_bus[k])];
        auto it = readings.voltage.find(id);
        if (it == readings.voltage.end())
            throw DataError("missing reading for voltage meter on bus " + std::to_string(id) + " at step " +
                            std::to_string(timestamp));
        f.metered_v(static_cast<Eigen::Index>(k)) = it->second - v_ref;
    }
    return f;
}

AugmentedCovariance build_r(const MeasurementLayout& layout, const std::optional<AugmentedCovariance>& pseudo_block) {
    const auto m = layout.rows();
    const auto np = layout.current_offset();
    auto out = AugmentedCovariance::zero(m);
    auto check = [](double sd) {
        if (!(sd > 0.0)) throw ArgumentError("measurement standard deviation must be positive");
    };
    if (pseudo_block) {
        require_shape(pseudo_block->dimension() == np, "pseudo covariance block does not match pseudo rows");
        out.gamma.topLeftCorner(np, np) = pseudo_block->gamma;
        out.c.topLeftCorner(np, np) = pseudo_block->c;
    } else {
        for (Eigen::Index k = 0; k < np; ++k) {
            double sd = layout.pseudo_sd[static_cast<size_t>(k)];
            check(sd);
            out.gamma(k, k) = sd * sd;
        }
    }
    Eigen::Index row = np;
    for (double sd : layout.current_sd) {
        check(sd);
        out.gamma(row, row) = sd * sd;
        ++row;
    }
    for (double sd : layout.voltage_sd) {
        check(sd);
        out.gamma(row, row) = sd * sd;
        ++row;
    }
    return out;
}

BadDataReport detect_bad_data(const CMatrix& innovations, const RVector& sd_band, double k,
                              const std::vector<bool>& monitored) {
    const auto rows = innovations.cols();
    require_shape(sd_band.size() == rows, "sd band must have one entry per measurement row");
    require_shape(monitored.empty() || static_cast<Eigen::Index>(monitored.size()) == rows,
                  "monitored mask must have one entry per measurement row");
    BadDataReport report;
    report.sd_band = sd_band;
    report.multiplier = k;
    report.flags.setConstant(innovations.rows(), rows, false);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (!monitored.empty() && !monitored[static_cast<size_t>(r)]) continue;
        if (!(sd_band(r) > 0.0)) throw ArgumentError("sd band must be strictly positive on monitored rows");
        const double limit = k * sd_band(r);
        for (Eigen::Index t = 0; t < innovations.rows(); ++t)
            report.flags(t, r) = std::abs(innovations(t, r)) > limit;
    }
    return report;
}

InnovationBand::InnovationBand(Eigen::Index rows, Eigen::Index window, Eigen::Index warmup)
    : window_(window), warmup_(warmup), samples_(static_cast<size_t>(rows)), head_(static_cast<size_t>(rows), 0) {
    if (window < 2 || warmup < 2 || warmup > window) throw ArgumentError("invalid innovation band window");
}

bool InnovationBand::ready(Eigen::Index row) const {
    return static_cast<Eigen::Index>(samples_[static_cast<size_t>(row)].size()) >= warmup_;
}

void InnovationBand::push(Eigen::Index row, Complex value) {
    auto& s = samples_[static_cast<size_t>(row)];
    if (static_cast<Eigen::Index>(s.size()) < window_) {
        s.push_back(value);
        return;
    }
    auto& h = head_[static_cast<size_t>(row)];
    s[h] = value;
    h = (h + 1) % s.size();
}

RVector InnovationBand::sd() const {
    RVector out = RVector::Zero(static_cast<Eigen::Index>(samples_.size()));
    for (size_t r = 0; r < samples_.size(); ++r) {
        const auto& s = samples_[r];
        if (static_cast<Eigen::Index>(s.size()) < warmup_) continue;
        Complex mean{};
        for (auto v : s) mean += v;
        mean /= static_cast<double>(s.size());
        double acc = 0.0;
        for (auto v : s) acc += std::norm(v - mean);
        out(static_cast<Eigen::Index>(r)) = std::sqrt(acc / static_cast<double>(s.size() - 1));
    }
    return out;
}

SynthesizedValue synthesize_angle(double magnitude, const FlowSolution& pseudo_solution, MeterLocation location) {
    const CVector& source =
        location.kind == RowKind::current ? pseudo_solution.branch_currents : pseudo_solution.bus_voltages;
    require_shape(location.index >= 0 && location.index < source.size(), "meter location outside the pseudo solution");
    Complex p = source(location.index);
    if (std::abs(p) == 0.0) return {Complex{magnitude, 0.0}, true};
    return {std::polar(magnitude, std::arg(p)), false};
}

}  // namespace dse
