#include "dse/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dse::io {

namespace fs = std::filesystem;

namespace {

template <typename T>
T get_or(const json& doc, const char* key, T fallback) {
    auto it = doc.find(key);
    return it == doc.end() || it->is_null() ? fallback : it->get<T>();
}

template <typename T>
T required(const json& doc, const char* key, const std::string& where) {
    auto it = doc.find(key);
    if (it == doc.end()) throw DataError(where + " is missing '" + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw DataError(where + " has an invalid '" + key + "'");
    }
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double to_degrees(double rad) { return rad * 180.0 / std::numbers::pi; }
double to_radians(double deg) { return deg * std::numbers::pi / 180.0; }

double unit_base(char kind, const PerUnitBase& base) { return kind == 'V' ? base.voltage_v : base.current_a(); }

}  // namespace

// ------------------------------------------------------------------- JSON

json to_json(const RadialNetwork& network) {
    json doc;
    doc["base"] = {{"voltage_v", network.base().voltage_v}, {"power_va", network.base().power_va}};
    json buses = json::array();
    for (const auto& b : network.bus_specs())
        buses.push_back({{"id", b.id}, {"phase", network.phase()}, {"is_reference", b.is_reference}, {"area", b.area}});
    json branches = json::array();
    for (const auto& br : network.branch_specs())
        branches.push_back({{"id", br.id},
                            {"from", br.from},
                            {"to", br.to},
                            {"phase", network.phase()},
                            {"r", br.impedance.real()},
                            {"x", br.impedance.imag()},
                            {"unit", "pu"}});
    doc["buses"] = buses;
    doc["branches"] = branches;
    return doc;
}

std::map<std::string, RadialNetwork> networks_from_json(const json& doc) {
    if (!doc.is_object()) throw DataError("network document must be an object");
    PerUnitBase base;
    if (auto it = doc.find("base"); it != doc.end()) {
        base.voltage_v = get_or(*it, "voltage_v", base.voltage_v);
        base.power_va = get_or(*it, "power_va", base.power_va);
        if (!(base.voltage_v > 0.0 && base.power_va > 0.0)) throw ValidationError("per-unit bases must be positive");
    }
    std::map<std::string, std::pair<std::vector<BusSpec>, std::vector<BranchSpec>>> phases;
    for (const auto& b : required<json>(doc, "buses", "network")) {
        const std::string phase = get_or<std::string>(b, "phase", "1");
        phases[phase].first.push_back({required<int>(b, "id", "bus"), get_or(b, "is_reference", false),
                                       get_or<std::string>(b, "area", "")});
    }
    for (const auto& br : required<json>(doc, "branches", "network")) {
        const std::string phase = get_or<std::string>(br, "phase", "1");
        const std::string unit = get_or<std::string>(br, "unit", "pu");
        Complex z{required<double>(br, "r", "branch"), required<double>(br, "x", "branch")};
        if (unit == "ohm")
            z /= base.impedance_ohm();
        else if (unit != "pu")
            throw DataError("branch impedance unit must be 'pu' or 'ohm'");
        phases[phase].second.push_back(
            {required<int>(br, "id", "branch"), required<int>(br, "from", "branch"), required<int>(br, "to", "branch"), z});
    }
    std::map<std::string, RadialNetwork> out;
    for (auto& [phase, parts] : phases) out.emplace(phase, RadialNetwork(parts.first, parts.second, phase, base));
    return out;
}

RadialNetwork network_from_json(const json& doc) {
    auto all = networks_from_json(doc);
    if (all.size() != 1)
        throw DataError("expected a single-phase network, found " + std::to_string(all.size()) + " phases");
    return all.begin()->second;
}

json to_json(const MeteringPlan& plan) {
    json doc;
    doc["voltage_meters"] = json::array();
    for (const auto& vm : plan.voltage_meters) doc["voltage_meters"].push_back({{"bus", vm.bus}, {"sd", vm.sd}});
    doc["current_meters"] = json::array();
    for (const auto& cm : plan.current_meters)
        doc["current_meters"].push_back({{"branch", cm.branch}, {"sd", cm.sd}});
    doc["pseudo_buses"] = plan.pseudo_buses;
    doc["pseudo_sd"] = plan.pseudo_sd;
    json overrides = json::object();
    for (const auto& [bus, sd] : plan.pseudo_sd_override) overrides[std::to_string(bus)] = sd;
    doc["pseudo_sd_override"] = overrides;
    return doc;
}

MeteringPlan plan_from_json(const json& doc) {
    if (!doc.is_object()) throw DataError("plan document must be an object");
    MeteringPlan plan;
    for (const auto& vm : get_or(doc, "voltage_meters", json::array()))
        plan.voltage_meters.push_back({required<int>(vm, "bus", "voltage meter"), get_or(vm, "sd", 0.01)});
    for (const auto& cm : get_or(doc, "current_meters", json::array()))
        plan.current_meters.push_back({required<int>(cm, "branch", "current meter"), get_or(cm, "sd", 0.01)});
    plan.pseudo_buses = get_or(doc, "pseudo_buses", std::vector<BusId>{});
    plan.pseudo_sd = get_or(doc, "pseudo_sd", plan.pseudo_sd);
    for (const auto& [bus, sd] : get_or(doc, "pseudo_sd_override", json::object()).items())
        plan.pseudo_sd_override[std::stoi(bus)] = sd.get<double>();
    return plan;
}

json to_json(const std::vector<SubareaSpec>& partition) {
    json subs = json::array();
    for (const auto& s : partition) subs.push_back({{"id", s.id}, {"boundary_bus", s.boundary_bus}, {"buses", s.buses}});
    return {{"subareas", subs}};
}

std::vector<SubareaSpec> partition_from_json(const json& doc) {
    std::vector<SubareaSpec> out;
    for (const auto& s : get_or(doc, "subareas", json::array()))
        out.push_back({required<int>(s, "id", "subarea"), required<int>(s, "boundary_bus", "subarea"),
                       required<std::vector<BusId>>(s, "buses", "subarea")});
    return out;
}

json to_json(const ScenarioConfig& c) {
    return {{"seed", c.seed},
            {"customers_per_area", c.customers_per_area},
            {"areas", c.areas},
            {"steps", c.steps},
            {"increment_sd", c.increment_sd},
            {"pv_penetration", c.pv_penetration},
            {"pv",
             {{"sunrise_minute", c.pv.sunrise_minute},
              {"sunset_minute", c.pv.sunset_minute},
              {"cloud_sd", c.pv.cloud_sd},
              {"cloud_min", c.pv.cloud_min},
              {"capacity_min", c.pv.capacity_min},
              {"capacity_max", c.pv.capacity_max}}},
            {"day_correlation", c.day_correlation},
            {"meter_sd", c.meter_sd},
            {"pseudo_sd", c.pseudo_sd},
            {"min_magnitude", c.min_magnitude},
            {"max_magnitude", c.max_magnitude},
            {"start_min", c.start_min},
            {"start_max", c.start_max},
            {"pf_angle_min", c.pf_angle_min},
            {"pf_angle_max", c.pf_angle_max},
            {"customer_scale", c.customer_scale}};
}

ScenarioConfig scenario_from_json(const json& doc, ScenarioConfig c) {
    try {
        c.seed = get_or(doc, "seed", c.seed);
        c.customers_per_area = get_or(doc, "customers_per_area", c.customers_per_area);
        c.areas = get_or(doc, "areas", c.areas);
        c.steps = get_or(doc, "steps", c.steps);
        c.increment_sd = get_or(doc, "increment_sd", c.increment_sd);
        c.pv_penetration = get_or(doc, "pv_penetration", c.pv_penetration);
        if (auto it = doc.find("pv"); it != doc.end()) {
            c.pv.sunrise_minute = get_or(*it, "sunrise_minute", c.pv.sunrise_minute);
            c.pv.sunset_minute = get_or(*it, "sunset_minute", c.pv.sunset_minute);
            c.pv.cloud_sd = get_or(*it, "cloud_sd", c.pv.cloud_sd);
            c.pv.cloud_min = get_or(*it, "cloud_min", c.pv.cloud_min);
            c.pv.capacity_min = get_or(*it, "capacity_min", c.pv.capacity_min);
            c.pv.capacity_max = get_or(*it, "capacity_max", c.pv.capacity_max);
        }
        c.day_correlation = get_or(doc, "day_correlation", c.day_correlation);
        c.meter_sd = get_or(doc, "meter_sd", c.meter_sd);
        c.pseudo_sd = get_or(doc, "pseudo_sd", c.pseudo_sd);
        c.min_magnitude = get_or(doc, "min_magnitude", c.min_magnitude);
        c.max_magnitude = get_or(doc, "max_magnitude", c.max_magnitude);
        c.start_min = get_or(doc, "start_min", c.start_min);
        c.start_max = get_or(doc, "start_max", c.start_max);
        c.pf_angle_min = get_or(doc, "pf_angle_min", c.pf_angle_min);
        c.pf_angle_max = get_or(doc, "pf_angle_max", c.pf_angle_max);
        c.customer_scale = get_or(doc, "customer_scale", c.customer_scale);
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid scenario configuration: ") + e.what());
    }
    return c;
}

json to_json(const ErrorReport& report) {
    json areas = json::array();
    for (const auto& a : report.areas)
        areas.push_back({{"area", a.area},
                         {"amve_pct", a.amve_pct},
                         {"mmve_pct", a.mmve_pct},
                         {"aave_deg", a.aave_deg},
                         {"mave_deg", a.mave_deg},
                         {"sd_pu", a.sd_pu},
                         {"sd_deg", a.sd_deg},
                         {"samples", a.samples}});
    return {{"estimator", report.estimator},
            {"areas", areas},
            {"wall_time_s", report.wall_time_s},
            {"offline_time_s", report.offline_time_s},
            {"iterations", report.iterations},
            {"magnitude_error_denominator", "true |v|"},
            {"sd_definition", "signed error"}};
}

json to_json(const BenchmarkReport& report) {
    json entries = json::array();
    for (const auto& e : report.entries) {
        json j{{"estimator", to_string(e.kind)}, {"wall_times_s", e.wall_times}};
        if (e.report) j["report"] = to_json(*e.report);
        if (!e.error.empty()) j["error"] = e.error;
        j["diagnostics"] = {{"bad_data_events", e.diagnostics.bad_data.size()},
                            {"regularized_updates", e.diagnostics.regularized_updates},
                            {"degenerate_scaling_steps", e.diagnostics.degenerate_scaling_steps},
                            {"max_sf_sum_error", e.diagnostics.max_sf_sum_error},
                            {"max_conservation_error", e.diagnostics.max_conservation_error}};
        entries.push_back(j);
    }
    return {{"format_version", kFormatVersion},
            {"repetitions", report.repetitions},
            {"measurement_set", "identical for every estimator"},
            {"entries", entries}};
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

// -------------------------------------------------------------------- CSV

void write_table(const fs::path& path, const Table& table) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "# format_version: " << kFormatVersion << '\n';
    out << "# config: " << table.config.dump() << '\n';
    out << "timestamp,device_id,kind,magnitude,angle_deg\n";
    for (const auto& r : table.records) {
        out << r.timestamp << ',' << r.device << ',' << r.kind << ',' << format_double(r.magnitude) << ',';
        if (r.has_angle) out << format_double(r.angle_deg);
        out << '\n';
    }
}

Table read_table(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    Table table;
    std::string line;
    bool header = false;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string key = "# config: ";
            if (line.rfind(key, 0) == 0) {
                try {
                    table.config = json::parse(line.substr(key.size()));
                } catch (const json::parse_error&) {
                    throw DataError(path.string() + ": malformed config header");
                }
            }
            continue;
        }
        if (!header) {
            if (line != "timestamp,device_id,kind,magnitude,angle_deg")
                throw DataError(path.string() + ": unexpected column header '" + line + "'");
            header = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        auto fail = [&](const std::string& what) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
        };
        if (cells.size() != 5) fail("expected 5 columns");
        Record r;
        try {
            r.timestamp = std::stol(cells[0]);
            r.device = std::stoi(cells[1]);
            if (cells[2] != "V" && cells[2] != "I") fail("kind must be V or I");
            r.kind = cells[2][0];
            r.magnitude = std::stod(cells[3]);
            r.has_angle = !cells[4].empty();
            if (r.has_angle) r.angle_deg = std::stod(cells[4]);
        } catch (const std::invalid_argument&) {
            fail("non-numeric field");
        } catch (const std::out_of_range&) {
            fail("numeric field out of range");
        }
        if (!std::isfinite(r.magnitude) || r.magnitude < 0.0) fail("magnitude must be finite and non-negative");
        table.records.push_back(r);
    }
    if (!header) throw DataError(path.string() + ": missing column header");
    return table;
}

Table series_to_table(const CMatrix& series, const std::vector<int>& devices, char kind, const PerUnitBase& base,
                      const json& config) {
    require_shape(static_cast<Eigen::Index>(devices.size()) == series.cols(), "one device id per series column");
    const double scale = unit_base(kind, base);
    Table table{config, {}};
    table.records.reserve(static_cast<size_t>(series.size()));
    for (Eigen::Index t = 0; t < series.rows(); ++t)
        for (Eigen::Index k = 0; k < series.cols(); ++k) {
            const Complex v = series(t, k);
            table.records.push_back(
                {static_cast<long>(t), devices[static_cast<size_t>(k)], kind, std::abs(v) * scale, to_degrees(std::arg(v)), true});
        }
    return table;
}

CMatrix table_to_series(const Table& table, const std::vector<int>& devices, char kind, const PerUnitBase& base) {
    std::map<int, Eigen::Index> column;
    for (size_t k = 0; k < devices.size(); ++k) column[devices[k]] = static_cast<Eigen::Index>(k);
    long steps = 0;
    for (const auto& r : table.records)
        if (r.kind == kind && column.count(r.device)) steps = std::max(steps, r.timestamp + 1);
    const double scale = unit_base(kind, base);
    CMatrix out(steps, static_cast<Eigen::Index>(devices.size()));
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> seen =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(out.rows(), out.cols(), false);
    for (const auto& r : table.records) {
        if (r.kind != kind) continue;
        auto it = column.find(r.device);
        if (it == column.end()) continue;
        if (r.timestamp < 0) throw DataError("negative timestamp");
        if (!r.has_angle) throw DataError("series value without an angle for device " + std::to_string(r.device));
        out(r.timestamp, it->second) = std::polar(r.magnitude / scale, to_radians(r.angle_deg));
        seen(r.timestamp, it->second) = true;
    }
    for (Eigen::Index t = 0; t < out.rows(); ++t)
        for (Eigen::Index k = 0; k < out.cols(); ++k)
            if (!seen(t, k))
                throw DataError("missing value for device " + std::to_string(devices[static_cast<size_t>(k)]) +
                                " at step " + std::to_string(t));
    return out;
}

MeterStream meters_from_table(const Table& table, const RadialNetwork& network, const MeteringPlan& plan,
                              const CMatrix& pseudo) {
    MeterStream out;
    for (const auto& vm : plan.voltage_meters) out.voltage_buses.push_back(vm.bus);
    for (const auto& cm : plan.current_meters) out.current_branches.push_back(cm.branch);
    std::map<int, Eigen::Index> vcol, icol;
    for (size_t k = 0; k < out.voltage_buses.size(); ++k) vcol[out.voltage_buses[k]] = static_cast<Eigen::Index>(k);
    for (size_t k = 0; k < out.current_branches.size(); ++k)
        icol[out.current_branches[k]] = static_cast<Eigen::Index>(k);
    long steps = 0;
    for (const auto& r : table.records) steps = std::max(steps, r.timestamp + 1);
    out.voltage = CMatrix::Constant(steps, static_cast<Eigen::Index>(vcol.size()), Complex(NAN, NAN));
    out.current = CMatrix::Constant(steps, static_cast<Eigen::Index>(icol.size()), Complex(NAN, NAN));

    const auto bibc = build_bibc(network);
    const auto dlf = build_dlf(network);
    std::map<long, FlowSolution> pseudo_flow;
    auto flow_at = [&](long t) -> const FlowSolution& {
        auto it = pseudo_flow.find(t);
        if (it != pseudo_flow.end()) return it->second;
        if (t >= pseudo.rows()) throw DataError("no pseudo data to recover the angle at step " + std::to_string(t));
        return pseudo_flow.emplace(t, direct_load_flow(bibc, dlf, pseudo.row(t).transpose(), {1.0, 0.0})).first->second;
    };

    const auto& base = network.base();
    for (const auto& r : table.records) {
        const bool volt = r.kind == 'V';
        auto& cols = volt ? vcol : icol;
        auto it = cols.find(r.device);
        if (it == cols.end()) continue;
        const double mag = r.magnitude / unit_base(r.kind, base);
        Complex value;
        if (r.has_angle) {
            value = std::polar(mag, to_radians(r.angle_deg));
        } else if (volt && r.device == network.reference_bus()) {
            value = {mag, 0.0};
        } else {
            MeterLocation loc{volt ? RowKind::voltage : RowKind::current,
                              volt ? network.bus_index(r.device) : network.branch_index(r.device)};
            value = synthesize_angle(mag, flow_at(r.timestamp), loc).value;
        }
        (volt ? out.voltage : out.current)(r.timestamp, it->second) = value;
    }
    auto check = [&](const CMatrix& m, const std::vector<int>& ids, const char* what) {
        for (Eigen::Index t = 0; t < m.rows(); ++t)
            for (Eigen::Index k = 0; k < m.cols(); ++k)
                if (std::isnan(m(t, k).real()))
                    throw DataError(std::string("missing ") + what + " reading for device " +
                                    std::to_string(ids[static_cast<size_t>(k)]) + " at step " + std::to_string(t));
    };
    check(out.voltage, out.voltage_buses, "voltage");
    check(out.current, out.current_branches, "current");
    return out;
}

Table meters_to_table(const MeterStream& meters, const PerUnitBase& base, const json& config) {
    Table table{config, {}};
    for (Eigen::Index t = 0; t < meters.steps(); ++t) {
        for (size_t k = 0; k < meters.voltage_buses.size(); ++k) {
            const Complex v = meters.voltage(t, static_cast<Eigen::Index>(k));
            table.records.push_back({static_cast<long>(t), meters.voltage_buses[k], 'V', std::abs(v) * base.voltage_v,
                                     to_degrees(std::arg(v)), true});
        }
        for (size_t k = 0; k < meters.current_branches.size(); ++k) {
            const Complex i = meters.current(t, static_cast<Eigen::Index>(k));
            table.records.push_back({static_cast<long>(t), meters.current_branches[k], 'I',
                                     std::abs(i) * base.current_a(), to_degrees(std::arg(i)), true});
        }
    }
    return table;
}

// ----------------------------------------------------------------- bundle

void write_bundle(const fs::path& dir, const Scenario& scenario, const ScenarioData& data) {
    fs::create_directories(dir);
    const json config = to_json(scenario.config);
    const auto& net = scenario.network;
    const auto& base = net.base();
    const std::vector<int> buses(net.bus_ids().begin(), net.bus_ids().end());
    auto stamp = [&](json doc) {
        doc["format_version"] = kFormatVersion;
        doc["config"] = config;
        return doc;
    };
    write_json(dir / "scenario.json", stamp(json::object()));
    write_json(dir / "network.json", stamp(to_json(net)));
    write_json(dir / "partition.json", stamp(to_json(scenario.partition)));
    write_json(dir / "plan.json", stamp(to_json(scenario.plan)));
    write_table(dir / "truth.csv", series_to_table(data.today.flow.bus_voltages, buses, 'V', base, config));
    write_table(dir / "truth_injections.csv", series_to_table(data.today.injections, buses, 'I', base, config));
    write_table(dir / "pseudo.csv", series_to_table(data.today.pseudo, buses, 'I', base, config));
    write_table(dir / "history_truth.csv", series_to_table(data.history.injections, buses, 'I', base, config));
    write_table(dir / "history_pseudo.csv", series_to_table(data.history.pseudo, buses, 'I', base, config));
    write_table(dir / "meters.csv", meters_to_table(data.meters, base, config));
}

Bundle read_bundle(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("bundle directory " + dir.string() + " does not exist");
    const json scenario = read_json(dir / "scenario.json");
    auto network = network_from_json(read_json(dir / "network.json"));
    const std::vector<int> buses(network.bus_ids().begin(), network.bus_ids().end());
    const auto& base = network.base();
    Bundle b{scenario_from_json(get_or(scenario, "config", json::object())),
             network,
             partition_from_json(read_json(dir / "partition.json")),
             plan_from_json(read_json(dir / "plan.json")),
             table_to_series(read_table(dir / "truth.csv"), buses, 'V', base),
             table_to_series(read_table(dir / "truth_injections.csv"), buses, 'I', base),
             table_to_series(read_table(dir / "pseudo.csv"), buses, 'I', base),
             table_to_series(read_table(dir / "history_truth.csv"), buses, 'I', base),
             table_to_series(read_table(dir / "history_pseudo.csv"), buses, 'I', base),
             {}};
    b.meters = meters_from_table(read_table(dir / "meters.csv"), b.network, b.plan, b.pseudo);
    return b;
}

}  // namespace dse::io
