#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dse/layering.hpp"

namespace dse {

struct AreaErrors {
    std::string area;
    double amve_pct = 0.0;
    double mmve_pct = 0.0;
    double aave_deg = 0.0;
    double mave_deg = 0.0;
    double sd_pu = 0.0;   // SD of the signed magnitude error
    double sd_deg = 0.0;  // SD of the signed angle error
    long samples = 0;
};

struct ErrorReport {
    std::string estimator;
    std::vector<AreaErrors> areas;  // sorted by area label
    double wall_time_s = 0.0;       // real-time loop only
    double offline_time_s = 0.0;
    int iterations = 1;

    const AreaErrors& area(const std::string& label) const;
    double max_mmve() const;
};

/// Per-area errors of `estimates` against `truth` (T x n, same bus order).
/// `area_map[k]` labels bus column k.
ErrorReport compute_metrics(const CMatrix& estimates, const CMatrix& truth, const std::vector<std::string>& area_map);

/// Signed angle difference in degrees wrapped to (-180, 180].
double wrapped_angle_deg(Complex estimate, Complex truth);

enum class EstimatorKind { ackf_single, ackf_multilayer, wls };

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator(const std::string& name);

struct BenchmarkInputs {
    const RadialNetwork* network = nullptr;
    const Partition* partition = nullptr;  // required for ackf_multilayer
    MeteringPlan plan;
    PseudoHistory history;
    MeterStream meters;
    CMatrix truth_voltages;
    Eigen::Index steps = 0;
    EstimatorConfig config;
};

struct BenchmarkEntry {
    EstimatorKind kind = EstimatorKind::ackf_single;
    std::optional<ErrorReport> report;
    std::string error;  // set when the estimator failed
    std::vector<double> wall_times;
    EstimationDiagnostics diagnostics;
};

struct BenchmarkReport {
    std::vector<BenchmarkEntry> entries;
    int repetitions = 1;
};

EstimationResult run_estimator(EstimatorKind kind, const BenchmarkInputs& inputs);

/// Each estimator runs `repetitions` times on identical inputs; the report
/// keeps the median real-time wall time. Failures are recorded and the
/// remaining estimators still run.
BenchmarkReport run_benchmark(const BenchmarkInputs& inputs, const std::vector<EstimatorKind>& estimators,
                              int repetitions);

}  // namespace dse
