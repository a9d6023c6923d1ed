#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dse/metrics.hpp"
#include "dse/synthetic.hpp"

namespace dse::io {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

// ------------------------------------------------------------------- JSON

json to_json(const RadialNetwork& network);
/// One network per phase found in the document.
std::map<std::string, RadialNetwork> networks_from_json(const json& doc);
/// The document must describe exactly one phase.
RadialNetwork network_from_json(const json& doc);

json to_json(const MeteringPlan& plan);
MeteringPlan plan_from_json(const json& doc);

json to_json(const std::vector<SubareaSpec>& partition);
std::vector<SubareaSpec> partition_from_json(const json& doc);

json to_json(const ScenarioConfig& config);
/// Missing keys keep the values already in `base`.
ScenarioConfig scenario_from_json(const json& doc, ScenarioConfig base = {});

json to_json(const ErrorReport& report);
json to_json(const BenchmarkReport& report);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& doc);

// -------------------------------------------------------------------- CSV

/// One row of the time-series table: physical units, angle in degrees.
struct Record {
    long timestamp = 0;
    int device = 0;
    char kind = 'V';  // 'V' or 'I'
    double magnitude = 0.0;
    double angle_deg = 0.0;
    bool has_angle = true;
};

struct Table {
    json config;  // resolved configuration embedded in the header
    std::vector<Record> records;
};

void write_table(const std::filesystem::path& path, const Table& table);
Table read_table(const std::filesystem::path& path);

/// Series per device (columns) in per-unit, rows are steps. `kind` selects
/// volts or amps for the base conversion.
Table series_to_table(const CMatrix& series, const std::vector<int>& devices, char kind, const PerUnitBase& base,
                      const json& config);
CMatrix table_to_series(const Table& table, const std::vector<int>& devices, char kind, const PerUnitBase& base);

/// Meter readings for the devices of `plan`. Readings without an angle take
/// the angle of the pseudo load flow at the same step and location.
MeterStream meters_from_table(const Table& table, const RadialNetwork& network, const MeteringPlan& plan,
                              const CMatrix& pseudo);
Table meters_to_table(const MeterStream& meters, const PerUnitBase& base, const json& config);

// ----------------------------------------------------------------- bundle

struct Bundle {
    ScenarioConfig config;
    RadialNetwork network;
    std::vector<SubareaSpec> partition;
    MeteringPlan plan;
    CMatrix truth_voltages;
    CMatrix truth_injections;
    CMatrix pseudo;
    CMatrix history_truth;
    CMatrix history_pseudo;
    MeterStream meters;

    PseudoHistory pseudo_history() const { return {pseudo, Calibration{history_truth, history_pseudo}}; }
};

void write_bundle(const std::filesystem::path& dir, const Scenario& scenario, const ScenarioData& data);
Bundle read_bundle(const std::filesystem::path& dir);

}  // namespace dse::io
