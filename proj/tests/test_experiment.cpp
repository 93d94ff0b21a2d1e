#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sip/errors.hpp"
#include "sip/experiment.hpp"

using namespace sip;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Deterministic fake instance: scores derived from the index, failing for
// indices listed in `fail`.
InstanceRunner fake_runner(std::vector<std::size_t> fail) {
    return [fail](const ExperimentConfig& cfg, std::size_t i) {
        for (std::size_t f : fail) {
            if (i == f) throw NumericalError("synthetic failure");
        }
        InstanceOutcome out;
        out.index = i;
        out.seed = cfg.base_seed + i;
        out.ok = true;
        const double base = static_cast<double>(i);
        out.gp_record = {cfg.dataset, out.seed, "exact_gp",
                         5.0 + 0.01 * base, 3.0 + 0.01 * base, 3.2};
        out.sip_record = {cfg.dataset, out.seed, "sip",
                          5.0 + 0.01 * base, 2.1 - 0.01 * base, 3.0};
        return out;
    };
}

ExperimentConfig small_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.n_instances = 10;
    cfg.base_seed = 100;
    cfg.out_dir = out_dir;
    return cfg;
}

}  // namespace

TEST_CASE("aggregation: mean, standard error, singleton collapse") {
    std::vector<MetricsRecord> recs;
    recs.push_back({"bimodal", 1, "exact_gp", 1.0, 10.0, 0.5});
    recs.push_back({"bimodal", 2, "exact_gp", 3.0, 12.0, 0.7});
    recs.push_back({"bimodal", 1, "sip", 2.0, 8.0, 0.4});
    AggregateTable agg = aggregate_records(recs);
    CHECK(agg.at("exact_gp").at("rmse").mean == 2.0);
    // sample sd sqrt(2) over sqrt(2) draws
    CHECK(agg.at("exact_gp").at("rmse").std_error == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(agg.at("exact_gp").at("nll").n == 2);
    CHECK(agg.at("sip").at("crps").std_error == 0.0);
    CHECK(agg.at("sip").at("crps").n == 1);
}

TEST_CASE("full run drops isolated failures and reports the rest") {
    const std::string dir = "/tmp/sip_test_exp_a";
    fs::remove_all(dir);
    ExperimentConfig cfg = small_config(dir);
    ExperimentReport rep = run_experiment(cfg, fake_runner({3}));
    CHECK(rep.instances.size() == 10);
    CHECK_FALSE(rep.instances[3].ok);
    CHECK(rep.instances[3].error == "synthetic failure");
    CHECK(rep.records.size() == 18);  // 9 surviving instances, two methods
    CHECK(rep.aggregate.at("sip").at("nll").n == 9);

    CHECK(fs::exists(dir + "/metrics_instances.csv"));
    CHECK(fs::exists(dir + "/metrics_aggregate.csv"));
    CHECK(fs::exists(dir + "/table.txt"));
    CHECK(fs::exists(dir + "/report.json"));
    const std::string table = slurp(dir + "/table.txt");
    CHECK(table == rep.table_text);
    CHECK(table.find("dataset: bimodal") != std::string::npos);
    CHECK(table.find("exact_gp") != std::string::npos);
    CHECK(table.find("RMSE") != std::string::npos);
    CHECK(table.find("±") != std::string::npos);
    const std::string js = slurp(dir + "/report.json");
    CHECK(js.find("synthetic failure") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("a twenty percent failure rate aborts the run") {
    const std::string dir = "/tmp/sip_test_exp_b";
    fs::remove_all(dir);
    ExperimentConfig cfg = small_config(dir);
    CHECK_THROWS_AS(run_experiment(cfg, fake_runner({2, 7})), NumericalError);
    fs::remove_all(dir);
}

TEST_CASE("reruns are byte identical") {
    const std::string d1 = "/tmp/sip_test_exp_c1";
    const std::string d2 = "/tmp/sip_test_exp_c2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    ExperimentConfig cfg = small_config(d1);
    cfg.jobs = 2;  // threaded scheduling must not affect any output byte
    ExperimentReport r1 = run_experiment(cfg, fake_runner({}));
    cfg.out_dir = d2;
    ExperimentReport r2 = run_experiment(cfg, fake_runner({}));
    CHECK(r1.table_text == r2.table_text);
    for (const char* f :
         {"metrics_instances.csv", "metrics_aggregate.csv", "table.txt", "report.json"}) {
        CHECK(slurp(d1 + "/" + f) == slurp(d2 + "/" + f));
    }
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("json report round trips") {
    const std::string dir = "/tmp/sip_test_exp_d";
    fs::remove_all(dir);
    std::vector<MetricsRecord> recs;
    recs.push_back({"heteroscedastic", 42, "exact_gp", 1.3333333333333333, 1.75, 0.81});
    recs.push_back({"heteroscedastic", 42, "sip", 1.3, 1.45, 0.77});
    std::vector<std::string> warnings;
    emit_report(recs, dir, {}, &warnings);
    CHECK(warnings.empty());
    std::vector<MetricsRecord> back = parse_report_json(dir + "/report.json");
    REQUIRE(back.size() == 2);
    CHECK(back[0].dataset == "heteroscedastic");
    CHECK(back[0].seed == 42);
    CHECK(back[0].method == "exact_gp");
    CHECK(back[0].rmse == recs[0].rmse);
    CHECK(back[1].crps == recs[1].crps);
    CHECK_THROWS_AS(parse_report_json(dir + "/table.txt"), ConfigError);
    CHECK_THROWS_AS(parse_report_json(dir + "/nope.json"), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("missing method drops its column with a warning") {
    const std::string dir = "/tmp/sip_test_exp_e";
    fs::remove_all(dir);
    std::vector<MetricsRecord> recs;
    recs.push_back({"bimodal", 7, "sip", 5.0, 2.1, 3.0});
    std::vector<std::string> warnings;
    const std::string table = emit_report(recs, dir, {}, &warnings);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("exact_gp") != std::string::npos);
    CHECK(table.find("exact_gp") == std::string::npos);
    CHECK_THROWS_AS(emit_report({}, dir), ContractError);
    fs::remove_all(dir);
}

TEST_CASE("single-instance cells render a zero standard error") {
    const std::string dir = "/tmp/sip_test_exp_f";
    fs::remove_all(dir);
    std::vector<MetricsRecord> recs;
    recs.push_back({"bimodal", 7, "exact_gp", 5.0, 3.1, 3.2});
    recs.push_back({"bimodal", 7, "sip", 5.0, 2.1, 3.0});
    const std::string table = emit_report(recs, dir, {});
    CHECK(table.find("± 0.000") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("config validation") {
    ExperimentConfig cfg;
    cfg.dataset = "spiral";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ExperimentConfig{};
    cfg.n_instances = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ExperimentConfig{};
    cfg.jobs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ExperimentConfig{};
    cfg.out_dir = "";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ExperimentConfig{};
    cfg.sip.alpha = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ExperimentConfig{};
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("band checks pass on nominal values and flag violations") {
    std::vector<MetricsRecord> good;
    good.push_back({"bimodal", 1, "exact_gp", 5.0, 3.05, 3.2});
    good.push_back({"bimodal", 1, "sip", 5.02, 2.1, 3.0});
    CHECK(acceptance_failures(aggregate_records(good), "bimodal").empty());

    std::vector<MetricsRecord> het;
    het.push_back({"heteroscedastic", 1, "exact_gp", 1.35, 1.7, 0.8});
    het.push_back({"heteroscedastic", 1, "sip", 1.33, 1.45, 0.7});
    CHECK(acceptance_failures(aggregate_records(het), "heteroscedastic").empty());

    std::vector<MetricsRecord> bad = good;
    bad[1].nll = 2.7;  // sip band is [1.8, 2.5] and the gap needs 0.5
    auto fails = acceptance_failures(aggregate_records(bad), "bimodal");
    CHECK(fails.size() == 2);
    bad = good;
    bad[0].rmse = 5.5;
    fails = acceptance_failures(aggregate_records(bad), "bimodal");
    REQUIRE(fails.size() == 2);  // band and cross-method gap
    CHECK(fails[0].find("exact_gp rmse") != std::string::npos);

    AggregateTable empty;
    CHECK_FALSE(acceptance_failures(empty, "bimodal").empty());
    CHECK_THROWS_AS(acceptance_failures(aggregate_records(good), "spiral"), ConfigError);
}
