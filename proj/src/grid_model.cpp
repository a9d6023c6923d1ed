#include "dse/grid_model.hpp"

#include <algorithm>
#include <deque>
#include <unordered_set>

namespace dse {

namespace {

std::string bus_name(BusId id) { return "bus " + std::to_string(id); }
std::string branch_name(BranchId id) { return "branch " + std::to_string(id); }

}  // namespace

RadialNetwork::RadialNetwork(std::vector<BusSpec> buses, std::vector<BranchSpec> branches,
                             std::string phase, PerUnitBase base)
    : phase_(std::move(phase)), base_(base) {
    std::unordered_map<BusId, std::string> area_of;
    std::optional<BusId> reference;
    for (const auto& b : buses) {
        if (!area_of.emplace(b.id, b.area).second)
            throw TopologyError("duplicate " + bus_name(b.id));
        if (b.is_reference) {
            if (reference)
                throw TopologyError("multiple reference buses: " + std::to_string(*reference) +
                                    " and " + std::to_string(b.id));
            reference = b.id;
        }
    }
    if (!reference) throw TopologyError("network has no reference bus");
    reference_ = *reference;
    reference_area_ = area_of[reference_];

    if (branches.size() + 1 != buses.size())
        throw TopologyError("radial network needs bus count = branch count + 1 (" +
                            std::to_string(buses.size()) + " buses, " +
                            std::to_string(branches.size()) + " branches)");

    std::unordered_map<BusId, std::vector<size_t>> incident;
    std::unordered_set<BranchId> seen_branch;
    for (size_t k = 0; k < branches.size(); ++k) {
        const auto& br = branches[k];
        if (!seen_branch.insert(br.id).second)
            throw TopologyError("duplicate " + branch_name(br.id));
        for (BusId end : {br.from, br.to})
            if (!area_of.count(end))
                throw TopologyError(branch_name(br.id) + " references unknown " + bus_name(end));
        if (br.from == br.to) throw TopologyError(branch_name(br.id) + " is a self loop");
        if (br.impedance.real() < 0.0)
            throw ValidationError(branch_name(br.id) + " has negative resistance");
        incident[br.from].push_back(k);
        incident[br.to].push_back(k);
    }

    // Breadth-first walk from the reference; siblings by ascending bus id.
    std::unordered_map<BusId, Eigen::Index> index;
    std::vector<bool> used(branches.size(), false);
    std::deque<BusId> queue{reference_};
    std::unordered_set<BusId> visited{reference_};
    while (!queue.empty()) {
        BusId at = queue.front();
        queue.pop_front();
        std::vector<std::pair<BusId, size_t>> next;
        for (size_t k : incident[at]) {
            if (used[k]) continue;
            used[k] = true;
            BusId other = branches[k].from == at ? branches[k].to : branches[k].from;
            if (visited.count(other))
                throw TopologyError(branch_name(branches[k].id) + " closes a cycle at " +
                                    bus_name(other));
            visited.insert(other);
            next.emplace_back(other, k);
        }
        std::sort(next.begin(), next.end());
        Eigen::Index parent_idx = at == reference_ ? -1 : index.at(at);
        for (auto [child, k] : next) {
            auto idx = static_cast<Eigen::Index>(bus_ids_.size());
            index[child] = idx;
            bus_ids_.push_back(child);
            branch_ids_.push_back(branches[k].id);
            areas_.push_back(area_of[child]);
            parent_.push_back(parent_idx);
            impedance_.push_back(branches[k].impedance);
            queue.push_back(child);
        }
    }
    for (const auto& b : buses)
        if (!visited.count(b.id)) throw TopologyError(bus_name(b.id) + " is disconnected");

    children_.resize(bus_ids_.size());
    for (size_t k = 0; k < bus_ids_.size(); ++k) {
        if (parent_[k] < 0)
            root_children_.push_back(static_cast<Eigen::Index>(k));
        else
            children_[static_cast<size_t>(parent_[k])].push_back(static_cast<Eigen::Index>(k));
    }
    for (size_t k = 0; k < bus_ids_.size(); ++k) {
        bus_lookup_[bus_ids_[k]] = static_cast<Eigen::Index>(k);
        branch_lookup_[branch_ids_[k]] = static_cast<Eigen::Index>(k);
    }
}

bool RadialNetwork::has_bus(BusId id) const { return bus_lookup_.count(id) > 0; }
bool RadialNetwork::has_branch(BranchId id) const { return branch_lookup_.count(id) > 0; }

Eigen::Index RadialNetwork::bus_index(BusId id) const {
    auto it = bus_lookup_.find(id);
    if (it == bus_lookup_.end()) throw PlanError("unknown non-reference " + bus_name(id));
    return it->second;
}

Eigen::Index RadialNetwork::branch_index(BranchId id) const {
    auto it = branch_lookup_.find(id);
    if (it == branch_lookup_.end()) throw PlanError("unknown " + branch_name(id));
    return it->second;
}

BusId RadialNetwork::parent_id(Eigen::Index bus) const {
    auto p = parent(bus);
    return p < 0 ? reference_ : bus_ids_[static_cast<size_t>(p)];
}

std::vector<Eigen::Index> RadialNetwork::subtree(Eigen::Index bus) const {
    std::vector<Eigen::Index> out{bus};
    for (size_t k = 0; k < out.size(); ++k)
        for (auto c : children(out[k])) out.push_back(c);
    std::sort(out.begin(), out.end());
    return out;
}

RadialNetwork RadialNetwork::induced(BusId root, std::span<const BusId> members) const {
    std::unordered_set<BusId> member_set(members.begin(), members.end());
    if (member_set.count(root)) throw TopologyError("subnetwork root " + bus_name(root) + " listed as member");
    std::vector<BusSpec> buses{{root, true, root == reference_ ? reference_area_ : areas_[static_cast<size_t>(bus_index(root))]}};
    std::vector<BranchSpec> branches;
    for (BusId id : members) {
        auto k = bus_index(id);
        BusId up = parent_id(k);
        if (up != root && !member_set.count(up))
            throw TopologyError(bus_name(id) + " is not connected to subnetwork root " + bus_name(root) +
                                " through members");
        buses.push_back({id, false, areas_[static_cast<size_t>(k)]});
        branches.push_back({branch_ids_[static_cast<size_t>(k)], up, id, impedance_[static_cast<size_t>(k)]});
    }
    return RadialNetwork(std::move(buses), std::move(branches), phase_, base_);
}

std::vector<BusSpec> RadialNetwork::bus_specs() const {
    std::vector<BusSpec> out{{reference_, true, reference_area_}};
    for (size_t k = 0; k < bus_ids_.size(); ++k) out.push_back({bus_ids_[k], false, areas_[k]});
    return out;
}

std::vector<BranchSpec> RadialNetwork::branch_specs() const {
    std::vector<BranchSpec> out;
    for (size_t k = 0; k < bus_ids_.size(); ++k)
        out.push_back({branch_ids_[k], parent_id(static_cast<Eigen::Index>(k)), bus_ids_[k], impedance_[k]});
    return out;
}

BibcMatrix build_bibc(const RadialNetwork& network) {
    const auto n = network.size();
    BibcMatrix out{CMatrix::Zero(n, n)};
    for (Eigen::Index j = 0; j < n; ++j)
        for (auto b = j; b >= 0; b = network.parent(b)) out.entries(b, j) = 1.0;
    return out;
}

DlfMatrix build_dlf(const RadialNetwork& network) {
    const auto n = network.size();
    CMatrix dlf = CMatrix::Zero(n, n);
    std::vector<Complex> path(static_cast<size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
        auto p = network.parent(j);
        path[static_cast<size_t>(j)] = network.impedance(j) + (p < 0 ? Complex{} : path[static_cast<size_t>(p)]);
    }
    // In topological order, a bus inherits its parent's row except inside
    // its own subtree, where the bus itself is the deepest shared ancestor.
    for (Eigen::Index k = 0; k < n; ++k) {
        auto p = network.parent(k);
        if (p >= 0) dlf.row(k) = dlf.row(p);
        for (auto j : network.subtree(k)) dlf(k, j) = path[static_cast<size_t>(k)];
    }
    return {std::move(dlf)};
}

FlowSolution direct_load_flow(const BibcMatrix& bibc, const DlfMatrix& dlf, const CVector& i_inj,
                              Complex v_ref) {
    require_shape(bibc.entries.cols() == i_inj.size() && dlf.entries.cols() == i_inj.size() &&
                      dlf.entries.rows() == dlf.entries.cols(),
                  "load flow: injection vector length " + std::to_string(i_inj.size()) +
                      " does not match network size " + std::to_string(dlf.entries.cols()));
    FlowSolution out;
    out.branch_currents = bibc.entries * i_inj;
    out.bus_voltages = CVector::Constant(i_inj.size(), v_ref) - dlf.entries * i_inj;
    return out;
}

FlowSolution subarea_forward_solve(const BibcMatrix& bibc_j, const DlfMatrix& dlf_j,
                                   const CVector& i_updated, Complex v_boundary) {
    return direct_load_flow(bibc_j, dlf_j, i_updated, v_boundary);
}

FlowSeries flow_series(const BibcMatrix& bibc, const DlfMatrix& dlf, const CMatrix& injections,
                       const CVector& v_ref, Execution mode) {
    const auto steps = injections.rows();
    const auto n = injections.cols();
    require_shape(v_ref.size() == steps, "flow_series: v_ref length must equal step count");
    require_shape(dlf.entries.cols() == n && bibc.entries.cols() == n,
                  "flow_series: injection width does not match network size");
    FlowSeries out{CMatrix(steps, bibc.entries.rows()), CMatrix(steps, n)};
    auto solve_step = [&](Eigen::Index t) {
        CVector i = injections.row(t).transpose();
        auto s = direct_load_flow(bibc, dlf, i, v_ref(t));
        out.branch_currents.row(t) = s.branch_currents.transpose();
        out.bus_voltages.row(t) = s.bus_voltages.transpose();
    };
    if (mode == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (Eigen::Index t = 0; t < steps; ++t) solve_step(t);
    } else {
        for (Eigen::Index t = 0; t < steps; ++t) solve_step(t);
    }
    return out;
}

}  // namespace dse
