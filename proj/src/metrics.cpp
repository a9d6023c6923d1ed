#include "dse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace dse {

const AreaErrors& ErrorReport::area(const std::string& label) const {
    for (const auto& a : areas)
        if (a.area == label) return a;
    throw ArgumentError("no area labelled " + label);
}

double ErrorReport::max_mmve() const {
    double out = 0.0;
    for (const auto& a : areas) out = std::max(out, a.mmve_pct);
    return out;
}

double wrapped_angle_deg(Complex estimate, Complex truth) {
    double d = (std::arg(estimate) - std::arg(truth)) * 180.0 / std::numbers::pi;
    d = std::fmod(d, 360.0);
    if (d > 180.0) d -= 360.0;
    if (d <= -180.0) d += 360.0;
    return d;
}

ErrorReport compute_metrics(const CMatrix& estimates, const CMatrix& truth, const std::vector<std::string>& area_map) {
    require_shape(estimates.rows() == truth.rows() && estimates.cols() == truth.cols(),
                  "estimates and truth must have the same shape");
    require_shape(static_cast<Eigen::Index>(area_map.size()) == truth.cols(), "area map needs one label per bus");

    struct Acc {
        long n = 0;
        double rel_sum = 0.0, rel_max = 0.0, ang_sum = 0.0, ang_max = 0.0;
        double e_sum = 0.0, e_sq = 0.0, a_sum = 0.0, a_sq = 0.0;
    };
    std::map<std::string, Acc> acc;
    for (Eigen::Index b = 0; b < truth.cols(); ++b) {
        auto& a = acc[area_map[static_cast<size_t>(b)]];
        for (Eigen::Index t = 0; t < truth.rows(); ++t) {
            const double mag = std::abs(truth(t, b));
            const double err = std::abs(estimates(t, b)) - mag;
            const double rel = 100.0 * std::abs(err) / mag;
            const double ang = wrapped_angle_deg(estimates(t, b), truth(t, b));
            ++a.n;
            a.rel_sum += rel;
            a.rel_max = std::max(a.rel_max, rel);
            a.ang_sum += std::abs(ang);
            a.ang_max = std::max(a.ang_max, std::abs(ang));
            a.e_sum += err;
            a.e_sq += err * err;
            a.a_sum += ang;
            a.a_sq += ang * ang;
        }
    }
    auto sd = [](double sum, double sq, long n) {
        if (n < 2) return 0.0;
        const double mean = sum / static_cast<double>(n);
        return std::sqrt(std::max(0.0, (sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1)));
    };
    ErrorReport out;
    for (const auto& [label, a] : acc) {
        if (a.n == 0) continue;
        const auto n = static_cast<double>(a.n);
        out.areas.push_back({label, a.rel_sum / n, a.rel_max, a.ang_sum / n, a.ang_max, sd(a.e_sum, a.e_sq, a.n),
                             sd(a.a_sum, a.a_sq, a.n), a.n});
    }
    return out;
}

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::ackf_single: return "ackf-single";
        case EstimatorKind::ackf_multilayer: return "ackf-multilayer";
        case EstimatorKind::wls: return "wls";
    }
    return "unknown";
}

EstimatorKind parse_estimator(const std::string& name) {
    if (name == "ackf-single") return EstimatorKind::ackf_single;
    if (name == "ackf-multilayer") return EstimatorKind::ackf_multilayer;
    if (name == "wls") return EstimatorKind::wls;
    throw ArgumentError("unknown estimator '" + name + "'");
}

EstimationResult run_estimator(EstimatorKind kind, const BenchmarkInputs& in) {
    if (!in.network) throw ArgumentError("benchmark inputs need a network");
    switch (kind) {
        case EstimatorKind::ackf_single:
            return run_single_layer(*in.network, in.plan, in.history, in.meters, in.steps, in.config);
        case EstimatorKind::ackf_multilayer:
            if (!in.partition) throw ArgumentError("the multi-layer estimator needs a partition");
            return run_multilayer(*in.network, *in.partition, in.plan, in.history, in.meters, in.steps, in.config);
        case EstimatorKind::wls:
            return run_wls(*in.network, in.plan, in.history, in.meters, in.steps, in.config);
    }
    throw ArgumentError("unknown estimator");
}

BenchmarkReport run_benchmark(const BenchmarkInputs& inputs, const std::vector<EstimatorKind>& estimators,
                              int repetitions) {
    if (repetitions < 1) throw ArgumentError("repetitions must be at least 1");
    BenchmarkReport report;
    report.repetitions = repetitions;
    for (auto kind : estimators) {
        BenchmarkEntry entry;
        entry.kind = kind;
        try {
            std::optional<EstimationResult> last;
            std::vector<double> offline;
            for (int r = 0; r < repetitions; ++r) {
                last = run_estimator(kind, inputs);
                entry.wall_times.push_back(last->diagnostics.realtime_seconds);
                offline.push_back(last->diagnostics.offline_seconds);
            }
            auto median = [](std::vector<double> v) {
                std::sort(v.begin(), v.end());
                const auto n = v.size();
                return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
            };
            ErrorReport er = compute_metrics(last->voltages, inputs.truth_voltages.topRows(inputs.steps),
                                             inputs.network->bus_areas());
            er.estimator = to_string(kind);
            er.wall_time_s = median(entry.wall_times);
            er.offline_time_s = median(offline);
            entry.report = er;
            entry.diagnostics = last->diagnostics;
        } catch (const std::exception& e) {
            entry.error = e.what();
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace dse
