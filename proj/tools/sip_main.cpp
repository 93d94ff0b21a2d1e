// Experiment runner CLI. Subcommands cover the full multi-instance
// protocol (run), the two single-model paths (fit-gp, train-sip),
// re-aggregation of saved records (metrics), and figure-data dumps
// (dump-figures). Exit codes: 0 ok, 2 bad config, 3 numerical failure,
// 4 table bands violated under --check.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "sip/csv.hpp"
#include "sip/dataset.hpp"
#include "sip/errors.hpp"
#include "sip/exact_gp.hpp"
#include "sip/experiment.hpp"
#include "sip/gp_bridge.hpp"
#include "sip/metrics.hpp"
#include "sip/objective.hpp"
#include "sip/rng.hpp"

namespace {

using nlohmann::json;

std::size_t as_count(const json& v, const std::string& key) {
    if (!v.is_number() || v.get<double>() < 0.0 ||
        v.get<double>() != std::floor(v.get<double>())) {
        throw sip::ConfigError("config key '" + key +
                               "' needs a nonnegative integer, got " + v.dump());
    }
    return static_cast<std::size_t>(v.get<double>());
}

double as_real(const json& v, const std::string& key) {
    if (!v.is_number()) {
        throw sip::ConfigError("config key '" + key + "' needs a number, got " +
                               v.dump());
    }
    return v.get<double>();
}

std::string as_text(const json& v, const std::string& key) {
    if (!v.is_string()) {
        throw sip::ConfigError("config key '" + key + "' needs a string, got " +
                               v.dump());
    }
    return v.get<std::string>();
}

// Dotted-key setters over the experiment config; both the JSON file and
// --set overrides funnel through here so unknown keys fail loudly.
std::map<std::string, std::function<void(sip::ExperimentConfig&, const json&)>>
config_setters() {
    using C = sip::ExperimentConfig;
    std::map<std::string, std::function<void(C&, const json&)>> m;
    m["dataset"] = [](C& c, const json& v) { c.dataset = as_text(v, "dataset"); };
    m["n_instances"] = [](C& c, const json& v) {
        c.n_instances = as_count(v, "n_instances");
    };
    m["base_seed"] = [](C& c, const json& v) {
        c.base_seed = static_cast<std::uint64_t>(as_count(v, "base_seed"));
    };
    m["n_points"] = [](C& c, const json& v) { c.n_points = as_count(v, "n_points"); };
    m["crps_draws"] = [](C& c, const json& v) {
        c.crps_draws = as_count(v, "crps_draws");
    };
    m["out_dir"] = [](C& c, const json& v) { c.out_dir = as_text(v, "out_dir"); };
    m["jobs"] = [](C& c, const json& v) { c.jobs = as_count(v, "jobs"); };

    m["sip.alpha"] = [](C& c, const json& v) { c.sip.alpha = as_real(v, "sip.alpha"); };
    m["sip.s_posterior"] = [](C& c, const json& v) {
        c.sip.s_posterior = as_count(v, "sip.s_posterior");
    };
    m["sip.s_prior_moments"] = [](C& c, const json& v) {
        c.sip.s_prior_moments = as_count(v, "sip.s_prior_moments");
    };
    m["sip.epochs"] = [](C& c, const json& v) {
        c.sip.epochs = as_count(v, "sip.epochs");
    };
    m["sip.batch_size"] = [](C& c, const json& v) {
        c.sip.batch_size = as_count(v, "sip.batch_size");
    };
    m["sip.lr"] = [](C& c, const json& v) { c.sip.lr = as_real(v, "sip.lr"); };
    m["sip.disc_lr"] = [](C& c, const json& v) {
        c.sip.disc_lr = as_real(v, "sip.disc_lr");
    };
    m["sip.seed"] = [](C& c, const json& v) {
        c.sip.seed = static_cast<std::uint64_t>(as_count(v, "sip.seed"));
    };
    m["sip.m_inducing"] = [](C& c, const json& v) {
        c.sip.m_inducing = as_count(v, "sip.m_inducing");
    };
    m["sip.d_features"] = [](C& c, const json& v) {
        c.sip.d_features = as_count(v, "sip.d_features");
    };
    m["sip.leaky_slope"] = [](C& c, const json& v) {
        c.sip.leaky_slope = as_real(v, "sip.leaky_slope");
    };
    m["sip.init_noise_var"] = [](C& c, const json& v) {
        c.sip.init_noise_var = as_real(v, "sip.init_noise_var");
    };
    m["sip.s_predict"] = [](C& c, const json& v) {
        c.sip.s_predict = as_count(v, "sip.s_predict");
    };

    m["gp.restarts"] = [](C& c, const json& v) {
        c.gp.restarts = as_count(v, "gp.restarts");
    };
    m["gp.steps"] = [](C& c, const json& v) { c.gp.steps = as_count(v, "gp.steps"); };
    m["gp.lr"] = [](C& c, const json& v) { c.gp.lr = as_real(v, "gp.lr"); };
    m["gp.noise_floor"] = [](C& c, const json& v) {
        c.gp.noise_floor = as_real(v, "gp.noise_floor");
    };
    m["gp.init_lo"] = [](C& c, const json& v) {
        c.gp.init_lo = as_real(v, "gp.init_lo");
    };
    m["gp.init_hi"] = [](C& c, const json& v) {
        c.gp.init_hi = as_real(v, "gp.init_hi");
    };
    return m;
}

void apply_key(sip::ExperimentConfig& cfg, const std::string& key, const json& v) {
    static const auto setters = config_setters();
    auto it = setters.find(key);
    if (it == setters.end()) {
        throw sip::ConfigError("unknown config key '" + key + "'");
    }
    it->second(cfg, v);
}

void load_config_file(sip::ExperimentConfig& cfg, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw sip::ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw sip::ConfigError("malformed config '" + path + "': " + e.what());
    }
    if (!j.is_object()) {
        throw sip::ConfigError("config '" + path + "' must be a JSON object");
    }
    for (const auto& [key, val] : j.items()) {
        if (val.is_object()) {
            for (const auto& [sub, subval] : val.items()) {
                apply_key(cfg, key + "." + sub, subval);
            }
        } else {
            apply_key(cfg, key, val);
        }
    }
}

void apply_overrides(sip::ExperimentConfig& cfg,
                     const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw sip::ConfigError("--set expects key=value, got '" + kv + "'");
        }
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        json v = json::parse(raw, nullptr, false);
        if (v.is_discarded()) v = json(raw);  // bare words are strings
        apply_key(cfg, key, v);
    }
}

sip::Dataset make_raw_dataset(const sip::ExperimentConfig& cfg,
                              std::uint64_t seed) {
    sip::Rng rng(seed);
    sip::Dataset ds = cfg.dataset == "bimodal"
                          ? sip::generate_bimodal(rng, cfg.n_points)
                          : sip::generate_heteroscedastic(rng, cfg.n_points);
    ds.seed = seed;
    return ds;
}

void print_record(const sip::MetricsRecord& r) {
    std::printf("%s seed=%llu rmse=%.4f nll=%.4f crps=%.4f\n", r.method.c_str(),
                static_cast<unsigned long long>(r.seed), r.rmse, r.nll, r.crps);
}

int cmd_run(const sip::ExperimentConfig& cfg, bool check) {
    sip::ExperimentReport rep = sip::run_experiment(cfg);
    std::cout << rep.table_text;
    for (const auto& o : rep.instances) {
        if (!o.ok) {
            std::cerr << "warning: instance " << o.index << " (seed " << o.seed
                      << ") failed and was excluded: " << o.error << "\n";
        }
    }
    if (check) {
        const auto fails = sip::acceptance_failures(rep.aggregate, cfg.dataset);
        if (!fails.empty()) {
            for (const auto& f : fails) std::cerr << "check failed: " << f << "\n";
            return 4;
        }
        std::cout << "all table bands hold\n";
    }
    return 0;
}

int cmd_fit_gp(const sip::ExperimentConfig& cfg) {
    sip::Dataset raw = make_raw_dataset(cfg, cfg.base_seed);
    sip::Dataset ds = sip::standardize(raw);
    sip::Rng gp_rng = sip::Rng(cfg.base_seed).stream(sip::streams::kGpFit);
    sip::GpModel gp = sip::fit_gp(ds.x_train, ds.y_train, cfg.gp, gp_rng);

    const double ym = ds.stats.y_mean, ys = ds.stats.y_std;
    auto [mean_s, var_s] = sip::posterior_predict(gp, ds.x_test);
    const std::size_t n = raw.y_test.numel();
    sip::Tensor mean = sip::Tensor::zeros({n});
    sip::Tensor var = sip::Tensor::zeros({n});
    sip::Tensor sd = sip::Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
        mean[i] = mean_s[i] * ys + ym;
        var[i] = var_s[i] * ys * ys;
        sd[i] = std::sqrt(var[i]);
    }
    std::printf("lengthscale=%.6f signal_var=%.6f noise_var=%.6f (standardized)\n",
                gp.lengthscale(), gp.signal_var(), gp.noise_var());
    sip::MetricsRecord rec{cfg.dataset,
                           cfg.base_seed,
                           "exact_gp",
                           sip::rmse(mean, raw.y_test),
                           sip::nll_gaussian(mean, var, raw.y_test),
                           sip::crps_gaussian(mean, sd, raw.y_test)};
    print_record(rec);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string path =
        (std::filesystem::path(cfg.out_dir) / "fig_gp_predictive.csv").string();
    const std::size_t g = 201;
    std::vector<std::vector<std::string>> rows;
    rows.reserve(g);
    for (std::size_t i = 0; i < g; ++i) {
        const double x = -4.0 + 8.0 * static_cast<double>(i) / static_cast<double>(g - 1);
        sip::Tensor xq = sip::Tensor::zeros({1, 1});
        xq[0] = (x - ds.stats.x_mean) / ds.stats.x_std;
        auto [mq, vq] = sip::posterior_predict(gp, xq);
        rows.push_back({sip::format_sig17(x), sip::format_sig17(mq[0] * ys + ym),
                        sip::format_sig17(std::sqrt(vq[0]) * ys)});
    }
    sip::write_csv(path, {"x", "mean", "std"}, rows);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_train_sip(const sip::ExperimentConfig& cfg) {
    sip::Dataset raw = make_raw_dataset(cfg, cfg.base_seed);
    sip::Dataset ds = sip::standardize(raw);
    sip::SipConfig scfg = cfg.sip;
    scfg.seed = cfg.base_seed;
    sip::TrainTrace trace;
    sip::SipModel model = sip::train_sip(ds, scfg, &trace);

    const double ym = ds.stats.y_mean, ys = ds.stats.y_std;
    sip::Rng pred_rng = sip::Rng(cfg.base_seed).stream(sip::streams::kPredict);
    sip::PredictiveMixture mix = model.predict_at(ds.x_test, pred_rng);
    sip::PredictiveMixture mix_raw = sip::destandardize_mixture(mix, ym, ys);
    sip::Rng metric_rng = sip::Rng(cfg.base_seed).stream(sip::streams::kMetricDraws);
    sip::Tensor draws = sip::sample_mixture(mix_raw, metric_rng, cfg.crps_draws);
    sip::MetricsRecord rec{cfg.dataset,
                           cfg.base_seed,
                           "sip",
                           sip::rmse(sip::mixture_mean(mix_raw), raw.y_test),
                           sip::nll_mixture(mix_raw, raw.y_test),
                           sip::crps_samples(draws, raw.y_test)};
    std::printf("trained %zu epochs, noise_var=%.6f (standardized)\n",
                cfg.sip.epochs, model.noise_var());
    std::printf("prior: lengthscale=%.4f amplitude=%.4f (standardized)\n",
                std::exp(model.params.value(model.prior.log_lengthscale_name).item()),
                std::exp(model.params.value(model.prior.log_amplitude_name).item()));
    print_record(rec);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string path =
        (std::filesystem::path(cfg.out_dir) / "trace.csv").string();
    sip::export_trace_csv(trace, path);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_metrics(const sip::ExperimentConfig& cfg, const std::string& report_path) {
    const std::vector<sip::MetricsRecord> records =
        sip::parse_report_json(report_path);
    std::vector<std::string> warnings;
    const std::string table = sip::emit_report(records, cfg.out_dir, {}, &warnings);
    std::cout << table;
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    return 0;
}

int cmd_dump_figures(const sip::ExperimentConfig& cfg) {
    sip::InstanceOutcome out = sip::run_instance(cfg, 0);
    print_record(out.gp_record);
    print_record(out.sip_record);
    std::cout << "figure data written to " << cfg.out_dir << "\n";
    return 0;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"sparse implicit process regression experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    std::size_t jobs = 0;
    bool check = false;
    std::string report_path;

    auto add_common = [&](CLI::App* sc) {
        sc->add_option("--config", config_path, "JSON config file");
        sc->add_option("--set", sets, "override a config key, key=value");
        sc->add_option("--out", out_dir, "output directory");
        sc->add_option("--jobs", jobs, "parallel instances");
    };

    CLI::App* sc_run = app.add_subcommand("run", "full multi-instance experiment");
    add_common(sc_run);
    sc_run->add_flag("--check", check, "verify aggregate table bands, exit 4 on miss");
    CLI::App* sc_gp = app.add_subcommand("fit-gp", "exact GP baseline on one instance");
    add_common(sc_gp);
    CLI::App* sc_sip = app.add_subcommand("train-sip", "implicit model on one instance");
    add_common(sc_sip);
    CLI::App* sc_metrics =
        app.add_subcommand("metrics", "re-aggregate a saved report.json");
    add_common(sc_metrics);
    sc_metrics->add_option("--report", report_path, "report.json path")->required();
    CLI::App* sc_figs =
        app.add_subcommand("dump-figures", "write figure CSVs for instance 0");
    add_common(sc_figs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    sip::ExperimentConfig cfg;
    if (!config_path.empty()) load_config_file(cfg, config_path);
    apply_overrides(cfg, sets);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (jobs > 0) cfg.jobs = jobs;

    if (sc_run->parsed()) return cmd_run(cfg, check);
    if (sc_gp->parsed()) return cmd_fit_gp(cfg);
    if (sc_sip->parsed()) return cmd_train_sip(cfg);
    if (sc_metrics->parsed()) return cmd_metrics(cfg, report_path);
    return cmd_dump_figures(cfg);
}

}  // namespace

int main(int argc, char** argv) {
    // Threaded BLAS backends can reorder reductions run to run; pin them
    // to one thread so equal configs give byte-identical outputs.
    setenv("OPENBLAS_NUM_THREADS", "1", 0);
    setenv("OMP_NUM_THREADS", "1", 0);
    try {
        return run_cli(argc, argv);
    } catch (const sip::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sip::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
