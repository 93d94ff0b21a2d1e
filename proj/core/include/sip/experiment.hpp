#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sip/dataset.hpp"
#include "sip/exact_gp.hpp"
#include "sip/metrics.hpp"
#include "sip/objective.hpp"

namespace sip {

// Full multi-instance protocol: instance i uses seed base_seed + i, draws
// fresh train/test splits, fits the exact GP baseline and the implicit
// model, and scores both on the raw scale.
struct ExperimentConfig {
    std::string dataset = "bimodal";  // or "heteroscedastic"
    std::size_t n_instances = 20;
    std::uint64_t base_seed = 1000;
    std::size_t n_points = 1000;  // per split
    std::size_t crps_draws = 1000;
    SipConfig sip;
    GpFitOptions gp;
    std::string out_dir = "out";
    std::size_t jobs = 1;

    void validate() const;  // throws ConfigError
};

struct InstanceOutcome {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricsRecord gp_record;
    MetricsRecord sip_record;
};

// Runs one instance end to end; instance 0 additionally writes the figure
// CSVs (raw-scale train data, prior draws, predictive draws, GP band) and
// the training trace into cfg.out_dir.
InstanceOutcome run_instance(const ExperimentConfig& cfg, std::size_t index);

// Seam for tests; run_experiment treats a thrown exception as that
// instance failing.
using InstanceRunner =
    std::function<InstanceOutcome(const ExperimentConfig&, std::size_t)>;

struct Aggregate {
    double mean = 0.0;
    double std_error = 0.0;  // sample sd / sqrt(n); 0 when n == 1
    std::size_t n = 0;
};

// method -> metric ("rmse"/"nll"/"crps") -> cell.
using AggregateTable = std::map<std::string, std::map<std::string, Aggregate>>;

AggregateTable aggregate_records(const std::vector<MetricsRecord>& records);

struct ExperimentReport {
    std::vector<InstanceOutcome> instances;  // index order, failures included
    std::vector<MetricsRecord> records;      // successful instances only
    AggregateTable aggregate;
    std::string table_text;
};

// Runs all instances (cfg.jobs threads), aggregates in index order, and
// writes metrics_instances.csv, metrics_aggregate.csv, report.json and
// table.txt into cfg.out_dir. Failed instances are dropped from the
// aggregate when under 20% of the total; at or above that the whole run
// throws NumericalError.
ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                const InstanceRunner& runner = nullptr);

// Renders the aligned table and writes the three report files; returns the
// table text. Failures (may be empty) land in report.json. A method with
// no records drops its column and adds a warning line.
std::string emit_report(const std::vector<MetricsRecord>& records,
                        const std::string& out_dir,
                        const std::vector<InstanceOutcome>& failures = {},
                        std::vector<std::string>* warnings = nullptr);

// Reads back the records array of an emit_report JSON file.
std::vector<MetricsRecord> parse_report_json(const std::string& path);

// Table-band checks behind `--check`; empty result means all bands hold.
std::vector<std::string> acceptance_failures(const AggregateTable& agg,
                                             const std::string& dataset);

}  // namespace sip
