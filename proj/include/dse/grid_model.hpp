#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dse/types.hpp"

namespace dse {

/// Per-unit bases for a single-phase-equivalent network. Currents and
/// impedances derive from voltage and power.
struct PerUnitBase {
    double voltage_v = 230.0;
    double power_va = 100e3;

    double current_a() const { return power_va / voltage_v; }
    double impedance_ohm() const { return voltage_v * voltage_v / power_va; }
};

struct BusSpec {
    BusId id = 0;
    bool is_reference = false;
    std::string area;  // empty: the bus id is its own area
};

struct BranchSpec {
    BranchId id = 0;
    BusId from = 0;
    BusId to = 0;
    Complex impedance;  // per-unit
};

/// Rooted tree of buses joined by series impedances, one phase.
///
/// Buses are stored in topological order from the reference bus (parents
/// before children, siblings by ascending id). Every non-reference bus owns
/// exactly one branch, the one joining it to its parent, so branch k and
/// non-reference bus k share an index. All matrices built from a network use
/// this ordering.
class RadialNetwork {
public:
    RadialNetwork(std::vector<BusSpec> buses, std::vector<BranchSpec> branches,
                  std::string phase = "1", PerUnitBase base = {});

    const std::string& phase() const { return phase_; }
    const PerUnitBase& base() const { return base_; }
    BusId reference_bus() const { return reference_; }

    /// Non-reference bus count; equals the branch count.
    Eigen::Index size() const { return static_cast<Eigen::Index>(bus_ids_.size()); }

    const std::vector<BusId>& bus_ids() const { return bus_ids_; }
    const std::vector<BranchId>& branch_ids() const { return branch_ids_; }
    const std::vector<std::string>& bus_areas() const { return areas_; }

    bool has_bus(BusId id) const;
    bool has_branch(BranchId id) const;
    Eigen::Index bus_index(BusId id) const;
    Eigen::Index branch_index(BranchId id) const;

    /// Index of the parent bus, or -1 when the parent is the reference bus.
    Eigen::Index parent(Eigen::Index bus) const { return parent_[static_cast<size_t>(bus)]; }
    BusId parent_id(Eigen::Index bus) const;
    Complex impedance(Eigen::Index branch) const { return impedance_[static_cast<size_t>(branch)]; }
    const std::vector<Eigen::Index>& children(Eigen::Index bus) const {
        return children_[static_cast<size_t>(bus)];
    }
    /// Children of the reference bus.
    const std::vector<Eigen::Index>& root_children() const { return root_children_; }

    /// Bus index plus all of its descendants, in network order.
    std::vector<Eigen::Index> subtree(Eigen::Index bus) const;

    /// Network rooted at `root` (reference or not) over `members`, which must
    /// form subtrees hanging from `root`. Branch ids and impedances carry over.
    RadialNetwork induced(BusId root, std::span<const BusId> members) const;

    std::vector<BusSpec> bus_specs() const;
    std::vector<BranchSpec> branch_specs() const;

private:
    std::string phase_;
    PerUnitBase base_;
    BusId reference_ = 0;
    std::string reference_area_;
    std::vector<BusId> bus_ids_;
    std::vector<BranchId> branch_ids_;
    std::vector<std::string> areas_;
    std::vector<Eigen::Index> parent_;
    std::vector<Complex> impedance_;
    std::vector<std::vector<Eigen::Index>> children_;
    std::vector<Eigen::Index> root_children_;
    std::unordered_map<BusId, Eigen::Index> bus_lookup_;
    std::unordered_map<BranchId, Eigen::Index> branch_lookup_;
};

/// Bus-injection to branch-current matrix: entry (b, j) is 1 when branch b
/// lies on the path from the reference bus to bus j.
struct BibcMatrix {
    CMatrix entries;
};

/// Direct load flow matrix: entry (k, j) is the impedance shared by the
/// reference-to-k and reference-to-j paths.
struct DlfMatrix {
    CMatrix entries;
};

struct FlowSolution {
    CVector branch_currents;
    CVector bus_voltages;
};

BibcMatrix build_bibc(const RadialNetwork& network);
DlfMatrix build_dlf(const RadialNetwork& network);

/// i_branch = BIBC i_inj, v = v_ref - DLF i_inj. Positive injection draws
/// current from the network.
FlowSolution direct_load_flow(const BibcMatrix& bibc, const DlfMatrix& dlf,
                              const CVector& i_inj, Complex v_ref);

/// Forward solve of one subarea rooted at its boundary bus.
FlowSolution subarea_forward_solve(const BibcMatrix& bibc_j, const DlfMatrix& dlf_j,
                                   const CVector& i_updated, Complex v_boundary);

/// Load flow over a time series: row t of `injections` is the injection
/// vector at step t. Output rows follow the same layout.
struct FlowSeries {
    CMatrix branch_currents;
    CMatrix bus_voltages;
};

FlowSeries flow_series(const BibcMatrix& bibc, const DlfMatrix& dlf, const CMatrix& injections,
                       const CVector& v_ref, Execution mode = Execution::parallel);

}  // namespace dse
