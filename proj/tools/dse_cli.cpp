#include <algorithm>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "dse/io.hpp"

namespace fs = std::filesystem;
using namespace dse;
using io::json;

namespace {

int exit_code(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::usage: return 2;
        case ErrorCategory::data: return 3;
        case ErrorCategory::numerical: return 4;
    }
    return 1;
}

const char* category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::usage: return "usage error";
        case ErrorCategory::data: return "data error";
        case ErrorCategory::numerical: return "numerical error";
    }
    return "error";
}

struct EstimatorFlags {
    std::string config_file;
    double k = 5.0;
    std::string scaling = "complex";
    bool no_bad_data = false;
    bool no_pseudo_update = false;
    bool serial = false;
    long steps = 0;

    void attach(CLI::App* app) {
        app->add_option("--estimator-config", config_file, "JSON file with estimator options")->check(CLI::ExistingFile);
        app->add_option("--k", k, "bad-data threshold in innovation SDs");
        app->add_option("--scaling", scaling, "scaling-factor mode")->check(CLI::IsMember({"complex", "magnitude"}));
        app->add_flag("--no-bad-data", no_bad_data, "disable innovation-band bad-data detection");
        app->add_flag("--no-pseudo-update", no_pseudo_update, "keep raw pseudo data");
        app->add_flag("--serial", serial, "run the serial reference kernels");
        app->add_option("--steps", steps, "limit the number of steps (0: all)");
    }

    EstimatorConfig resolve(const CLI::App* app) const {
        EstimatorConfig c;
        if (!config_file.empty()) {
            const json doc = io::read_json(config_file);
            c.bad_data_k = doc.value("bad_data_k", c.bad_data_k);
            c.detect_bad_data = doc.value("detect_bad_data", c.detect_bad_data);
            c.update_pseudo = doc.value("update_pseudo", c.update_pseudo);
            c.bad_data_inflation = doc.value("bad_data_inflation", c.bad_data_inflation);
            c.band_window = doc.value("band_window", c.band_window);
            c.band_warmup = doc.value("band_warmup", c.band_warmup);
            if (doc.value("scaling_mode", std::string("complex")) == "magnitude") c.scaling_mode = ScalingMode::magnitude;
            if (doc.value("covariance_form", std::string("subtractive")) == "joseph")
                c.filter.covariance_form = CovarianceForm::joseph;
        }
        if (app->count("--k")) c.bad_data_k = k;
        if (app->count("--scaling")) c.scaling_mode = scaling == "magnitude" ? ScalingMode::magnitude : ScalingMode::complex;
        if (no_bad_data) c.detect_bad_data = false;
        if (no_pseudo_update) c.update_pseudo = false;
        if (serial) c.execution = Execution::serial;
        if (!(c.bad_data_k > 0.0)) throw ArgumentError("--k must be positive");
        return c;
    }
};

json describe(const EstimatorConfig& c) {
    return {{"bad_data_k", c.bad_data_k},
            {"detect_bad_data", c.detect_bad_data},
            {"update_pseudo", c.update_pseudo},
            {"bad_data_inflation", c.bad_data_inflation},
            {"band_window", c.band_window},
            {"band_warmup", c.band_warmup},
            {"scaling_mode", c.scaling_mode == ScalingMode::magnitude ? "magnitude" : "complex"},
            {"covariance_form", c.filter.covariance_form == CovarianceForm::joseph ? "joseph" : "subtractive"}};
}

/// Bundle with optional per-file overrides.
struct Inputs {
    std::string bundle;
    std::string network;
    std::string partition;
    std::string plan;

    void attach(CLI::App* app) {
        app->add_option("--bundle", bundle, "scenario bundle directory")->required()->check(CLI::ExistingDirectory);
        app->add_option("--network", network, "network JSON overriding the bundle's")->check(CLI::ExistingFile);
        app->add_option("--partition", partition, "partition JSON overriding the bundle's")->check(CLI::ExistingFile);
        app->add_option("--plan", plan, "metering plan JSON overriding the bundle's")->check(CLI::ExistingFile);
    }

    io::Bundle load() const {
        auto b = io::read_bundle(bundle);
        if (!network.empty()) b.network = io::network_from_json(io::read_json(network));
        if (!partition.empty()) b.partition = io::partition_from_json(io::read_json(partition));
        if (!plan.empty()) b.plan = io::plan_from_json(io::read_json(plan));
        if (!network.empty() || !plan.empty()) b.meters = io::meters_from_table(
            io::read_table(fs::path(bundle) / "meters.csv"), b.network, b.plan, b.pseudo);
        return b;
    }
};

Eigen::Index resolve_steps(long requested, const io::Bundle& b) {
    const Eigen::Index available = std::min(b.pseudo.rows(), b.meters.steps());
    if (requested < 0) throw ArgumentError("--steps must be non-negative");
    if (requested == 0) return available;
    if (requested > available) throw ArgumentError("--steps exceeds the bundle length");
    return requested;
}

BenchmarkInputs benchmark_inputs(const io::Bundle& b, const Partition* partition, const EstimatorConfig& config,
                                 Eigen::Index steps) {
    return {&b.network, partition, b.plan, b.pseudo_history(), b.meters, b.truth_voltages, steps, config};
}

void print_table(const BenchmarkReport& report) {
    std::printf("%-16s %-8s %10s %10s %10s %10s %12s %10s\n", "estimator", "area", "AMVE%", "MMVE%", "AAVE deg",
                "MAVE deg", "SD pu", "time s");
    for (const auto& e : report.entries) {
        if (!e.report) {
            std::printf("%-16s failed: %s\n", to_string(e.kind).c_str(), e.error.c_str());
            continue;
        }
        for (const auto& a : e.report->areas)
            std::printf("%-16s %-8s %10.4f %10.4f %10.4f %10.4f %12.3e %10.3f\n", to_string(e.kind).c_str(),
                        a.area.c_str(), a.amve_pct, a.mmve_pct, a.aave_deg, a.mave_deg, a.sd_pu, e.report->wall_time_s);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distribution state estimation with augmented complex Kalman filtering"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic scenario bundle");
    std::string gen_out, gen_config, topology = "six-bus";
    ScenarioConfig flags;
    gen->add_option("--out", gen_out, "bundle directory")->required();
    gen->add_option("--config", gen_config, "scenario JSON")->check(CLI::ExistingFile);
    gen->add_option("--topology", topology, "feeder shape")->check(CLI::IsMember({"six-bus", "large-feeder"}));
    gen->add_option("--seed", flags.seed);
    gen->add_option("--areas", flags.areas);
    gen->add_option("--customers", flags.customers_per_area, "customers per area");
    gen->add_option("--T", flags.steps, "samples (1-minute cadence)");
    gen->add_option("--increment-sd", flags.increment_sd);
    gen->add_option("--pv-penetration", flags.pv_penetration);
    gen->add_option("--day-correlation", flags.day_correlation);
    gen->add_option("--meter-sd", flags.meter_sd);
    gen->add_option("--pseudo-sd", flags.pseudo_sd);
    gen->add_option("--customer-scale", flags.customer_scale);

    // estimate
    auto* est = app.add_subcommand("estimate", "write per-step state estimates");
    Inputs est_in;
    EstimatorFlags est_flags;
    std::string est_name = "ackf-single", est_out;
    est_in.attach(est);
    est_flags.attach(est);
    est->add_option("--estimator", est_name)->check(CLI::IsMember({"ackf-single", "ackf-multilayer", "wls"}));
    est->add_option("--out", est_out, "estimates CSV")->required();

    // compare
    auto* cmp = app.add_subcommand("compare", "error reports for estimate files against the bundle truth");
    Inputs cmp_in;
    std::vector<std::string> cmp_files;
    std::string cmp_out;
    cmp_in.attach(cmp);
    cmp->add_option("--estimates", cmp_files, "estimate CSVs")->required()->check(CLI::ExistingFile);
    cmp->add_option("--out", cmp_out, "report JSON")->required();

    // bench
    auto* bench = app.add_subcommand("bench", "run estimators on identical inputs and report errors and timing");
    Inputs bench_in;
    EstimatorFlags bench_flags;
    std::vector<std::string> bench_names;
    int repetitions = 3;
    std::string bench_out;
    bench_in.attach(bench);
    bench_flags.attach(bench);
    bench->add_option("--estimator", bench_names)->check(CLI::IsMember({"ackf-single", "ackf-multilayer", "wls"}));
    bench->add_option("--repetitions", repetitions)->check(CLI::PositiveNumber);
    bench->add_option("--out", bench_out, "report JSON")->required();

    // export
    auto* exp = app.add_subcommand("export", "convert reports or estimates to long-format CSV");
    std::string exp_report, exp_estimates, exp_bundle, exp_out;
    exp->add_option("--report", exp_report, "compare or bench report JSON")->check(CLI::ExistingFile);
    exp->add_option("--estimates", exp_estimates, "estimates CSV")->check(CLI::ExistingFile);
    exp->add_option("--bundle", exp_bundle, "bundle with the truth for --estimates")->check(CLI::ExistingDirectory);
    exp->add_option("--out", exp_out, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            ScenarioConfig config;
            if (!gen_config.empty()) config = io::scenario_from_json(io::read_json(gen_config));
            if (gen->count("--seed")) config.seed = flags.seed;
            if (gen->count("--areas")) config.areas = flags.areas;
            if (gen->count("--customers")) config.customers_per_area = flags.customers_per_area;
            if (gen->count("--T")) config.steps = flags.steps;
            if (gen->count("--increment-sd")) config.increment_sd = flags.increment_sd;
            if (gen->count("--pv-penetration")) config.pv_penetration = flags.pv_penetration;
            if (gen->count("--day-correlation")) config.day_correlation = flags.day_correlation;
            if (gen->count("--meter-sd")) config.meter_sd = flags.meter_sd;
            if (gen->count("--pseudo-sd")) config.pseudo_sd = flags.pseudo_sd;
            if (gen->count("--customer-scale")) config.customer_scale = flags.customer_scale;
            const Scenario s = topology == "six-bus" ? six_bus_scenario(config) : large_feeder_scenario(config);
            io::write_bundle(gen_out, s, generate_scenario_data(s));
            std::printf("wrote %s: %ld buses, %ld steps, %zu subareas\n", gen_out.c_str(),
                        static_cast<long>(s.network.size()), static_cast<long>(config.steps), s.partition.size());
        } else if (*est) {
            const auto b = est_in.load();
            const auto config = est_flags.resolve(est);
            const auto steps = resolve_steps(est_flags.steps, b);
            const auto kind = parse_estimator(est_name);
            std::optional<Partition> partition;
            if (kind == EstimatorKind::ackf_multilayer) partition.emplace(b.network, b.partition);
            const auto result = run_estimator(kind, benchmark_inputs(b, partition ? &*partition : nullptr, config, steps));
            json resolved{{"estimator", est_name}, {"estimator_config", describe(config)}, {"scenario", io::to_json(b.config)},
                          {"steps", steps}};
            const std::vector<int> buses(b.network.bus_ids().begin(), b.network.bus_ids().end());
            auto table = io::series_to_table(result.voltages, buses, 'V', b.network.base(), resolved);
            auto inj = io::series_to_table(result.injections, buses, 'I', b.network.base(), resolved);
            table.records.insert(table.records.end(), inj.records.begin(), inj.records.end());
            io::write_table(est_out, table);
            const auto& d = result.diagnostics;
            io::write_json(est_out + ".timing.json", {{"offline_seconds", d.offline_seconds},
                                                      {"realtime_seconds", d.realtime_seconds},
                                                      {"bad_data_events", d.bad_data.size()},
                                                      {"regularized_updates", d.regularized_updates}});
            std::printf("wrote %s: %ld steps x %ld buses\n", est_out.c_str(), static_cast<long>(steps),
                        static_cast<long>(b.network.size()));
        } else if (*cmp) {
            const auto b = cmp_in.load();
            const std::vector<int> buses(b.network.bus_ids().begin(), b.network.bus_ids().end());
            json reports = json::array();
            for (const auto& file : cmp_files) {
                const auto table = io::read_table(file);
                const CMatrix v = io::table_to_series(table, buses, 'V', b.network.base());
                if (v.rows() > b.truth_voltages.rows()) throw DataError(file + " is longer than the bundle truth");
                auto report = compute_metrics(v, b.truth_voltages.topRows(v.rows()), b.network.bus_areas());
                report.estimator = table.config.value("estimator", file);
                reports.push_back(io::to_json(report));
            }
            io::write_json(cmp_out, {{"format_version", io::kFormatVersion}, {"reports", reports}});
            std::printf("wrote %s: %zu reports\n", cmp_out.c_str(), cmp_files.size());
        } else if (*bench) {
            const auto b = bench_in.load();
            const auto config = bench_flags.resolve(bench);
            const auto steps = resolve_steps(bench_flags.steps, b);
            if (bench_names.empty()) bench_names = {"ackf-single", "ackf-multilayer", "wls"};
            std::vector<EstimatorKind> kinds;
            for (const auto& n : bench_names) kinds.push_back(parse_estimator(n));
            std::optional<Partition> partition;
            if (std::find(kinds.begin(), kinds.end(), EstimatorKind::ackf_multilayer) != kinds.end())
                partition.emplace(b.network, b.partition);
            const auto report = run_benchmark(benchmark_inputs(b, partition ? &*partition : nullptr, config, steps), kinds, repetitions);
            json doc = io::to_json(report);
            doc["config"] = {{"estimator_config", describe(config)}, {"scenario", io::to_json(b.config)}, {"steps", steps}};
            io::write_json(bench_out, doc);
            print_table(report);
        } else if (*exp) {
            std::ofstream out(exp_out);
            if (!out) throw DataError("cannot write " + exp_out);
            if (!exp_report.empty()) {
                const json doc = io::read_json(exp_report);
                out << "estimator,area,metric,value\n";
                auto emit = [&](const json& r) {
                    for (const auto& a : r.at("areas"))
                        for (const char* key : {"amve_pct", "mmve_pct", "aave_deg", "mave_deg", "sd_pu", "sd_deg"})
                            out << r.at("estimator").get<std::string>() << ',' << a.at("area").get<std::string>() << ','
                                << key << ',' << a.at(key).dump() << '\n';
                };
                if (doc.contains("reports")) {
                    for (const auto& r : doc["reports"]) emit(r);
                } else if (doc.contains("entries")) {
                    for (const auto& e : doc["entries"])
                        if (e.contains("report")) emit(e["report"]);
                } else {
                    throw DataError(exp_report + " is neither a compare nor a bench report");
                }
            } else if (!exp_estimates.empty()) {
                if (exp_bundle.empty()) throw ArgumentError("--estimates needs --bundle for the truth");
                const auto b = io::read_bundle(exp_bundle);
                const std::vector<int> buses(b.network.bus_ids().begin(), b.network.bus_ids().end());
                const CMatrix v = io::table_to_series(io::read_table(exp_estimates), buses, 'V', b.network.base());
                if (v.rows() > b.truth_voltages.rows()) throw DataError("estimates are longer than the bundle truth");
                out << "step,bus,area,magnitude_error_pct,angle_error_deg\n";
                for (Eigen::Index t = 0; t < v.rows(); ++t)
                    for (Eigen::Index k = 0; k < v.cols(); ++k) {
                        const Complex truth = b.truth_voltages(t, k);
                        char line[160];
                        std::snprintf(line, sizeof line, "%ld,%d,%s,%.10g,%.10g\n", static_cast<long>(t),
                                      buses[static_cast<size_t>(k)], b.network.bus_areas()[static_cast<size_t>(k)].c_str(),
                                      100.0 * (std::abs(v(t, k)) - std::abs(truth)) / std::abs(truth),
                                      wrapped_angle_deg(v(t, k), truth));
                        out << line;
                    }
            } else {
                throw ArgumentError("export needs --report or --estimates");
            }
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "%s: %s\n", category_name(e.category()), e.what());
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 4;
    }
    return 0;
}
