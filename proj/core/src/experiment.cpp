#include "sip/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "sip/csv.hpp"
#include "sip/errors.hpp"
#include "sip/gp_bridge.hpp"
#include "sip/rff_prior.hpp"
#include "sip/rng.hpp"

namespace sip {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMetricKeys[3] = {"rmse", "nll", "crps"};
constexpr const char* kMetricLabels[3] = {"RMSE", "NLL", "CRPS"};

Tensor linspace_column(double lo, double hi, std::size_t n) {
    Tensor t = Tensor::zeros({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return t;
}

std::string join_path(const std::string& dir, const std::string& file) {
    return (fs::path(dir) / file).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw ConfigError("cannot create output directory '" + dir +
                          "': " + ec.message());
    }
}

double metric_value(const MetricsRecord& r, const char* key) {
    if (std::string(key) == "rmse") return r.rmse;
    if (std::string(key) == "nll") return r.nll;
    return r.crps;
}

// Pad on the left to `width` display columns, counting UTF-8 code points
// rather than bytes (the cells contain a multibyte plus-minus sign).
std::string pad_left(const std::string& s, std::size_t width) {
    std::size_t chars = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++chars;
    }
    if (chars >= width) return s;
    return std::string(width - chars, ' ') + s;
}

std::string format_cell(const Aggregate& a) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f ± %.3f", a.mean, a.std_error);
    return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (dataset != "bimodal" && dataset != "heteroscedastic") {
        throw ConfigError("experiment: unknown dataset '" + dataset + "'");
    }
    if (n_instances < 1) throw ConfigError("experiment: n_instances must be >= 1");
    if (n_points < 2) throw ConfigError("experiment: n_points must be >= 2");
    if (crps_draws < 2) throw ConfigError("experiment: crps_draws must be >= 2");
    if (jobs < 1) throw ConfigError("experiment: jobs must be >= 1");
    if (out_dir.empty()) throw ConfigError("experiment: out_dir must be set");
    validate_config(sip);
}

InstanceOutcome run_instance(const ExperimentConfig& cfg, std::size_t index) {
    InstanceOutcome out;
    out.index = index;
    out.seed = cfg.base_seed + index;

    Rng data_rng(out.seed);
    Dataset raw = cfg.dataset == "bimodal"
                      ? generate_bimodal(data_rng, cfg.n_points)
                      : generate_heteroscedastic(data_rng, cfg.n_points);
    raw.seed = out.seed;
    if (index == 0) {
        ensure_dir(cfg.out_dir);
        export_csv(raw, join_path(cfg.out_dir, "fig_data.csv"));
    }

    Dataset ds = standardize(raw);
    const double ym = ds.stats.y_mean;
    const double ys = ds.stats.y_std;
    const double xm = ds.stats.x_mean;
    const double xs = ds.stats.x_std;

    Rng gp_rng = Rng(out.seed).stream(streams::kGpFit);
    GpModel gp = fit_gp(ds.x_train, ds.y_train, cfg.gp, gp_rng);
    auto [gp_mean_s, gp_var_s] = posterior_predict(gp, ds.x_test);
    const std::size_t nt = raw.y_test.numel();
    Tensor gp_mean = Tensor::zeros({nt});
    Tensor gp_var = Tensor::zeros({nt});
    Tensor gp_std = Tensor::zeros({nt});
    for (std::size_t i = 0; i < nt; ++i) {
        gp_mean[i] = gp_mean_s[i] * ys + ym;
        gp_var[i] = gp_var_s[i] * ys * ys;
        gp_std[i] = std::sqrt(gp_var[i]);
    }
    out.gp_record = {cfg.dataset,
                     out.seed,
                     "exact_gp",
                     rmse(gp_mean, raw.y_test),
                     nll_gaussian(gp_mean, gp_var, raw.y_test),
                     crps_gaussian(gp_mean, gp_std, raw.y_test)};

    SipConfig scfg = cfg.sip;
    scfg.seed = out.seed;
    TrainTrace trace;
    SipModel model = train_sip(ds, scfg, &trace);

    Rng pred_rng = Rng(out.seed).stream(streams::kPredict);
    PredictiveMixture mix = model.predict_at(ds.x_test, pred_rng);
    PredictiveMixture mix_raw = destandardize_mixture(mix, ym, ys);
    Tensor sip_mean = mixture_mean(mix_raw);
    Rng metric_rng = Rng(out.seed).stream(streams::kMetricDraws);
    Tensor draws = sample_mixture(mix_raw, metric_rng, cfg.crps_draws);
    out.sip_record = {cfg.dataset,
                      out.seed,
                      "sip",
                      rmse(sip_mean, raw.y_test),
                      nll_mixture(mix_raw, raw.y_test),
                      crps_samples(draws, raw.y_test)};

    if (index == 0) {
        export_trace_csv(trace, join_path(cfg.out_dir, "trace_instance0.csv"));

        const std::size_t g = 201;
        Tensor grid_raw = linspace_column(-4.0, 4.0, g);
        Tensor grid_std = Tensor::zeros({g, 1});
        for (std::size_t i = 0; i < g; ++i) grid_std[i] = (grid_raw[i] - xm) / xs;

        Rng fig_rng = Rng(out.seed).stream(streams::kFigures);
        Tensor f = sample_functions(model.prior, model.params, fig_rng, grid_std, 20);
        std::vector<std::vector<std::string>> prior_rows;
        prior_rows.reserve(f.numel());
        for (std::size_t s = 0; s < f.rows(); ++s) {
            for (std::size_t i = 0; i < g; ++i) {
                prior_rows.push_back({std::to_string(s), format_sig17(grid_raw[i]),
                                      format_sig17(f.at(s, i) * ys + ym)});
            }
        }
        write_csv(join_path(cfg.out_dir, "fig_prior_samples.csv"),
                  {"sample_id", "x", "f"}, prior_rows);

        PredictiveMixture fig_mix = model.predict_at(grid_std, fig_rng);
        PredictiveMixture fig_mix_raw = destandardize_mixture(fig_mix, ym, ys);
        dump_predictive_samples(fig_mix_raw, grid_raw, fig_rng, 100,
                                join_path(cfg.out_dir, "fig_sip_samples.csv"));

        auto [fm, fv] = posterior_predict(gp, grid_std);
        std::vector<std::vector<std::string>> gp_rows;
        gp_rows.reserve(g);
        for (std::size_t i = 0; i < g; ++i) {
            gp_rows.push_back({format_sig17(grid_raw[i]),
                               format_sig17(fm[i] * ys + ym),
                               format_sig17(std::sqrt(fv[i]) * ys)});
        }
        write_csv(join_path(cfg.out_dir, "fig_gp_predictive.csv"),
                  {"x", "mean", "std"}, gp_rows);
    }

    out.ok = true;
    return out;
}

AggregateTable aggregate_records(const std::vector<MetricsRecord>& records) {
    std::map<std::string, std::map<std::string, std::vector<double>>> vals;
    for (const auto& r : records) {
        auto& per_metric = vals[r.method];
        for (const char* key : kMetricKeys) {
            per_metric[key].push_back(metric_value(r, key));
        }
    }
    AggregateTable out;
    for (const auto& [method, per_metric] : vals) {
        for (const auto& [metric, v] : per_metric) {
            Aggregate cell;
            cell.n = v.size();
            double s = 0.0;
            for (double x : v) s += x;
            cell.mean = s / static_cast<double>(v.size());
            if (v.size() >= 2) {
                double ss = 0.0;
                for (double x : v) {
                    const double d = x - cell.mean;
                    ss += d * d;
                }
                const double var = ss / static_cast<double>(v.size() - 1);
                cell.std_error = std::sqrt(var / static_cast<double>(v.size()));
            }
            out[method][metric] = cell;
        }
    }
    return out;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                const InstanceRunner& runner) {
    cfg.validate();
    ensure_dir(cfg.out_dir);
    const InstanceRunner& run =
        runner ? runner : InstanceRunner(static_cast<InstanceOutcome (*)(
                              const ExperimentConfig&, std::size_t)>(run_instance));

    std::vector<InstanceOutcome> outcomes(cfg.n_instances);
    auto work = [&](std::size_t i) {
        try {
            outcomes[i] = run(cfg, i);
        } catch (const std::exception& e) {
            InstanceOutcome f;
            f.index = i;
            f.seed = cfg.base_seed + i;
            f.ok = false;
            f.error = e.what();
            outcomes[i] = f;
        }
    };

    if (cfg.jobs <= 1) {
        for (std::size_t i = 0; i < cfg.n_instances; ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        const std::size_t n_threads = std::min(cfg.jobs, cfg.n_instances);
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < cfg.n_instances;
                     i = next.fetch_add(1)) {
                    work(i);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    std::size_t failures = 0;
    for (const auto& o : outcomes) {
        if (!o.ok) ++failures;
    }
    if (failures > 0 && failures * 5 >= cfg.n_instances) {
        std::string msg = "experiment: " + std::to_string(failures) + " of " +
                          std::to_string(cfg.n_instances) +
                          " instances failed (20% threshold reached):";
        for (const auto& o : outcomes) {
            if (!o.ok) {
                msg += "\n  instance " + std::to_string(o.index) + " (seed " +
                       std::to_string(o.seed) + "): " + o.error;
            }
        }
        throw NumericalError(msg);
    }

    ExperimentReport rep;
    rep.instances = outcomes;
    std::vector<InstanceOutcome> failed;
    for (const auto& o : outcomes) {
        if (o.ok) {
            rep.records.push_back(o.gp_record);
            rep.records.push_back(o.sip_record);
        } else {
            failed.push_back(o);
        }
    }
    rep.aggregate = aggregate_records(rep.records);
    rep.table_text = emit_report(rep.records, cfg.out_dir, failed);
    return rep;
}

std::string emit_report(const std::vector<MetricsRecord>& records,
                        const std::string& out_dir,
                        const std::vector<InstanceOutcome>& failures,
                        std::vector<std::string>* warnings) {
    if (records.empty()) throw ContractError("emit_report: no records");
    ensure_dir(out_dir);
    std::vector<std::string> notes;

    std::vector<std::vector<std::string>> inst_rows;
    inst_rows.reserve(records.size());
    for (const auto& r : records) {
        inst_rows.push_back({r.dataset, std::to_string(r.seed), r.method,
                             format_sig17(r.rmse), format_sig17(r.nll),
                             format_sig17(r.crps)});
    }
    write_csv(join_path(out_dir, "metrics_instances.csv"),
              {"dataset", "seed", "method", "rmse", "nll", "crps"}, inst_rows);

    std::vector<std::string> dataset_order;
    std::map<std::string, std::vector<MetricsRecord>> by_dataset;
    for (const auto& r : records) {
        if (!by_dataset.count(r.dataset)) dataset_order.push_back(r.dataset);
        by_dataset[r.dataset].push_back(r);
    }

    std::vector<std::vector<std::string>> agg_rows;
    std::ostringstream tbl;
    json j_aggregate = json::object();
    bool first_block = true;
    for (const auto& ds : dataset_order) {
        AggregateTable agg = aggregate_records(by_dataset[ds]);

        std::vector<std::string> methods;
        for (const char* preferred : {"exact_gp", "sip"}) {
            if (agg.count(preferred)) {
                methods.push_back(preferred);
            } else {
                notes.push_back("dataset '" + ds + "': no records for method '" +
                                preferred + "'; column omitted");
            }
        }
        for (const auto& [method, cells] : agg) {
            if (std::find(methods.begin(), methods.end(), method) == methods.end()) {
                methods.push_back(method);
            }
        }

        for (const auto& method : methods) {
            for (std::size_t k = 0; k < 3; ++k) {
                const Aggregate& a = agg.at(method).at(kMetricKeys[k]);
                agg_rows.push_back({ds, method, kMetricKeys[k],
                                    format_sig17(a.mean), format_sig17(a.std_error),
                                    std::to_string(a.n)});
                j_aggregate[ds][method][kMetricKeys[k]] = {
                    {"mean", a.mean}, {"std_error", a.std_error}, {"n", a.n}};
            }
        }

        if (!first_block) tbl << "\n";
        first_block = false;
        tbl << "dataset: " << ds << "\n";
        tbl << pad_left("", 6);
        for (const auto& method : methods) tbl << pad_left(method, 18);
        tbl << "\n";
        for (std::size_t k = 0; k < 3; ++k) {
            std::string line = kMetricLabels[k];
            line += std::string(6 - line.size(), ' ');
            tbl << line;
            for (const auto& method : methods) {
                tbl << pad_left(format_cell(agg.at(method).at(kMetricKeys[k])), 18);
            }
            tbl << "\n";
        }
    }
    write_csv(join_path(out_dir, "metrics_aggregate.csv"),
              {"dataset", "method", "metric", "mean", "std_error", "n"}, agg_rows);

    const std::string table_text = tbl.str();
    {
        std::ofstream f(join_path(out_dir, "table.txt"), std::ios::binary);
        if (!f) throw ConfigError("cannot write table.txt in '" + out_dir + "'");
        f << table_text;
    }

    json j;
    j["records"] = json::array();
    for (const auto& r : records) {
        j["records"].push_back({{"dataset", r.dataset},
                                {"seed", r.seed},
                                {"method", r.method},
                                {"rmse", r.rmse},
                                {"nll", r.nll},
                                {"crps", r.crps}});
    }
    j["aggregate"] = j_aggregate;
    j["failures"] = json::array();
    for (const auto& f : failures) {
        j["failures"].push_back(
            {{"index", f.index}, {"seed", f.seed}, {"error", f.error}});
    }
    j["warnings"] = notes;
    {
        std::ofstream f(join_path(out_dir, "report.json"), std::ios::binary);
        if (!f) throw ConfigError("cannot write report.json in '" + out_dir + "'");
        f << j.dump(2) << "\n";
    }

    if (warnings) *warnings = notes;
    return table_text;
}

std::vector<MetricsRecord> parse_report_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open report '" + path + "'");
    json j;
    try {
        in >> j;
        std::vector<MetricsRecord> out;
        for (const auto& r : j.at("records")) {
            MetricsRecord rec;
            rec.dataset = r.at("dataset").get<std::string>();
            rec.seed = r.at("seed").get<std::uint64_t>();
            rec.method = r.at("method").get<std::string>();
            rec.rmse = r.at("rmse").get<double>();
            rec.nll = r.at("nll").get<double>();
            rec.crps = r.at("crps").get<double>();
            out.push_back(std::move(rec));
        }
        return out;
    } catch (const json::exception& e) {
        throw ConfigError("malformed report '" + path + "': " + e.what());
    }
}

std::vector<std::string> acceptance_failures(const AggregateTable& agg,
                                             const std::string& dataset) {
    std::vector<std::string> fails;
    auto mean_of = [&](const char* method, const char* metric, double* v) {
        auto mi = agg.find(method);
        if (mi == agg.end() || !mi->second.count(metric)) {
            fails.push_back(std::string("missing aggregate for ") + method + "." +
                            metric);
            return false;
        }
        *v = mi->second.at(metric).mean;
        return true;
    };
    double gp_rmse = 0, gp_nll = 0, gp_crps = 0;
    double sip_rmse = 0, sip_nll = 0, sip_crps = 0;
    bool have = true;
    have &= mean_of("exact_gp", "rmse", &gp_rmse);
    have &= mean_of("exact_gp", "nll", &gp_nll);
    have &= mean_of("exact_gp", "crps", &gp_crps);
    have &= mean_of("sip", "rmse", &sip_rmse);
    have &= mean_of("sip", "nll", &sip_nll);
    have &= mean_of("sip", "crps", &sip_crps);
    if (!have) return fails;

    char buf[160];
    auto band = [&](const char* label, double v, double lo, double hi) {
        if (!(v >= lo && v <= hi)) {
            std::snprintf(buf, sizeof(buf), "%s mean %.4f outside [%.2f, %.2f]",
                          label, v, lo, hi);
            fails.push_back(buf);
        }
    };
    if (dataset == "bimodal") {
        band("exact_gp nll", gp_nll, 2.8, 3.3);
        band("sip nll", sip_nll, 1.8, 2.5);
        if (!(gp_nll - sip_nll >= 0.5)) {
            std::snprintf(buf, sizeof(buf),
                          "nll improvement %.4f below required 0.5",
                          gp_nll - sip_nll);
            fails.push_back(buf);
        }
        band("exact_gp rmse", gp_rmse, 4.8, 5.2);
        band("sip rmse", sip_rmse, 4.8, 5.2);
        if (!(std::abs(gp_rmse - sip_rmse) <= 0.05)) {
            std::snprintf(buf, sizeof(buf), "rmse difference %.4f exceeds 0.05",
                          std::abs(gp_rmse - sip_rmse));
            fails.push_back(buf);
        }
        if (!(sip_crps < gp_crps)) {
            std::snprintf(buf, sizeof(buf), "sip crps %.4f not below gp crps %.4f",
                          sip_crps, gp_crps);
            fails.push_back(buf);
        }
    } else if (dataset == "heteroscedastic") {
        band("exact_gp nll", gp_nll, 1.6, 1.85);
        band("sip nll", sip_nll, 1.3, 1.6);
        if (!(gp_nll - sip_nll >= 0.15)) {
            std::snprintf(buf, sizeof(buf),
                          "nll improvement %.4f below required 0.15",
                          gp_nll - sip_nll);
            fails.push_back(buf);
        }
        band("exact_gp rmse", gp_rmse, 1.25, 1.45);
        band("sip rmse", sip_rmse, 1.25, 1.45);
        if (!(sip_crps < gp_crps)) {
            std::snprintf(buf, sizeof(buf), "sip crps %.4f not below gp crps %.4f",
                          sip_crps, gp_crps);
            fails.push_back(buf);
        }
    } else {
        throw ConfigError("acceptance bands unknown for dataset '" + dataset + "'");
    }
    return fails;
}

}  // namespace sip
