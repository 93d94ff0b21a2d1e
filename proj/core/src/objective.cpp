#include "sip/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "sip/csv.hpp"
#include "sip/errors.hpp"

namespace sip {

void validate_config(const SipConfig& cfg) {
    if (!(cfg.alpha > 0.0) || cfg.alpha > 1.0) {
        throw ConfigError("sip config: alpha must be in (0, 1], got " +
                          std::to_string(cfg.alpha));
    }
    if (cfg.s_posterior < 1 || cfg.s_prior_moments < 2 || cfg.batch_size < 1 ||
        cfg.m_inducing < 2 || cfg.d_features < 1 || cfg.s_predict < 1) {
        throw ConfigError("sip config: counts must be positive");
    }
    if (!(cfg.init_noise_var > 0.0)) {
        throw ConfigError("sip config: init_noise_var must be positive");
    }
}

void export_trace_csv(const TrainTrace& trace, const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(trace.rows.size());
    for (const auto& r : trace.rows) {
        rows.push_back({std::to_string(r.epoch), format_sig17(r.data_term),
                        format_sig17(r.kl_qp), format_sig17(r.kl_pq),
                        format_sig17(r.disc_loss), format_sig17(r.noise_var)});
    }
    write_csv(path, {"epoch", "data_term", "kl_qp", "kl_pq", "disc_loss", "noise_var"},
              rows);
}

double SipModel::noise_var() const {
    return std::exp(params.value(noise_name).item());
}

PredictiveMixture SipModel::predict_at(const Tensor& x_star, Rng& rng) const {
    // predict() builds a throwaway graph over the store; parameters are
    // not mutated, so the const_cast is confined here.
    ParamStore& ps = const_cast<ParamStore&>(params);
    return predict(prior, posterior, inducing, ps, x_star, cfg.s_predict,
                   cfg.s_prior_moments, noise_var(), rng);
}

double alpha_energy_term(const Tensor& f_samples, const Tensor& y_batch,
                         double noise_var, double alpha, std::size_t n_total) {
    if (f_samples.rank() != 2 || y_batch.rank() != 1 ||
        f_samples.cols() != y_batch.numel()) {
        throw ShapeError("alpha_energy_term: shapes " + f_samples.shape_str() +
                         " vs " + y_batch.shape_str());
    }
    if (!(alpha > 0.0) || alpha > 1.0) {
        throw ContractError("alpha_energy_term: alpha must be in (0, 1]");
    }
    const std::size_t s = f_samples.rows();
    const std::size_t b = f_samples.cols();
    const double log2pi = std::log(2.0 * std::numbers::pi);
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double max_v = -std::numeric_limits<double>::infinity();
        std::vector<double> scaled(s);
        for (std::size_t k = 0; k < s; ++k) {
            const double diff = y_batch[i] - f_samples.at(k, i);
            const double ll =
                -0.5 * (log2pi + std::log(noise_var)) - 0.5 * diff * diff / noise_var;
            scaled[k] = alpha * ll;
            max_v = std::max(max_v, scaled[k]);
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < s; ++k) sum += std::exp(scaled[k] - max_v);
        const double lse = max_v + std::log(sum);
        total += (lse - std::log(static_cast<double>(s))) / alpha;
    }
    return total * static_cast<double>(n_total) / static_cast<double>(b);
}

NodeId alpha_energy_node(Graph& g, NodeId mean_node, NodeId var_node,
                         NodeId noise_node, const Tensor& y_batch, double alpha,
                         std::size_t n_total) {
    const Tensor& means = g.value(mean_node);
    if (means.rank() != 2 || means.cols() != y_batch.numel()) {
        throw ShapeError("alpha_energy: mean shape " + means.shape_str() +
                         " vs batch " + y_batch.shape_str());
    }
    const double s = static_cast<double>(means.rows());
    const double b = static_cast<double>(means.cols());
    const double log2pi = std::log(2.0 * std::numbers::pi);

    // Per-point effective variance: conditional variance plus noise.
    NodeId v = g.add(var_node, noise_node);  // [B]
    NodeId log_v = g.log(v);
    NodeId inv_v = g.exp(g.scalar_scale(log_v, -1.0));

    Tensor neg_y = y_batch;
    for (std::size_t i = 0; i < neg_y.numel(); ++i) neg_y[i] = -neg_y[i];
    NodeId diff = g.broadcast_add_row(mean_node, g.constant(std::move(neg_y)));
    NodeId quad = g.scalar_scale(g.mul(g.square(diff), inv_v), -0.5);  // [S, B]
    NodeId row_part = g.shift(g.scalar_scale(log_v, -0.5), -0.5 * log2pi);  // [B]
    NodeId ll = g.broadcast_add_row(quad, row_part);  // [S, B]

    NodeId lse = g.logsumexp(g.scalar_scale(ll, alpha), 0);  // [B]
    NodeId centered = g.shift(lse, -std::log(s));
    NodeId summed = g.sum(g.scalar_scale(centered, 1.0 / alpha));
    return g.scalar_scale(summed, static_cast<double>(n_total) / b);
}

SipModel train_sip(const Dataset& ds, const SipConfig& cfg, TrainTrace* trace) {
    validate_config(cfg);
    if (!ds.standardized) {
        throw ContractError("train_sip: dataset must be standardized");
    }
    const std::size_t n = ds.x_train.rows();
    if (cfg.m_inducing > n) {
        throw ContractError("train_sip: m_inducing exceeds training size");
    }

    Rng base(cfg.seed);
    SipModel model;
    model.cfg = cfg;
    model.prior =
        make_rff_prior(model.params, base.stream(streams::kPriorInit), cfg.d_features);
    model.posterior = make_implicit_posterior(
        model.params, base.stream(streams::kPosteriorInit), {1, 50, 50, 1},
        cfg.leaky_slope);
    model.inducing = init_inducing(model.params, ds, cfg.m_inducing,
                                   base.stream(streams::kInducingInit));
    model.disc = make_discriminator(model.params, base.stream(streams::kDiscInit),
                                    cfg.m_inducing, 100, cfg.leaky_slope);
    model.params.create(model.noise_name, Tensor::scalar(std::log(cfg.init_noise_var)),
                        "lik");

    Rng rng_prior = base.stream(streams::kPriorDraws);
    Rng rng_post = base.stream(streams::kPosteriorDraws);
    Rng rng_batch = base.stream(streams::kBatchShuffle);

    const AdamConfig gen_cfg{cfg.lr, 0.9, 0.999, 1e-8};
    const std::set<std::string> gen_groups{"phi", "theta", "lik"};

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> perm = rng_batch.permutation(n);
        TraceRow row;
        row.epoch = epoch;
        std::size_t n_batches = 0;

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, n);
            const std::size_t bsz = stop - start;
            Tensor x_batch({bsz, 1});
            Tensor y_batch({bsz});
            for (std::size_t i = 0; i < bsz; ++i) {
                x_batch[i] = ds.x_train[perm[start + i]];
                y_batch[i] = ds.y_train[perm[start + i]];
            }

            // Discriminator step on detached samples.
            const Tensor& x_bar_val = model.params.value(model.inducing.x_bar_name);
            Tensor u_q_det = sample_u(model.posterior, model.params, x_bar_val,
                                      rng_post, cfg.s_posterior);
            Tensor u_p_det = sample_functions(model.prior, model.params, rng_prior,
                                              x_bar_val, cfg.s_posterior);
            row.disc_loss += discriminator_step(model.disc, model.params, u_q_det,
                                                u_p_det, cfg.disc_lr);

            // Generator step.
            Graph g(&model.params);
            NodeId x_bar = g.param(model.inducing.x_bar_name);
            NodeId u_q = sample_u_node(model.posterior, g, x_bar, rng_post,
                                       cfg.s_posterior);
            NodeId x_all = g.concat({x_bar, g.constant(x_batch)}, 0);
            NodeId f_prior =
                sample_functions_node(model.prior, g, x_all, rng_prior,
                                      cfg.s_prior_moments);
            auto [pm, pc] = empirical_moments_node(g, f_prior);
            ConditionalGaussian cond =
                gp_conditional_node(g, pm, pc, u_q, cfg.m_inducing);
            NodeId noise = g.exp(g.param(model.noise_name));
            NodeId data = alpha_energy_node(g, cond.mean, cond.var, noise, y_batch,
                                            cfg.alpha, n);
            NodeId u_p = sample_functions_node(model.prior, g, x_bar, rng_prior,
                                               cfg.s_posterior);
            auto [kl_qp, kl_pq] = kl_estimate_nodes(model.disc, g, u_q, u_p);
            NodeId penalty = g.scalar_scale(g.add(kl_qp, kl_pq), 0.5);
            NodeId loss = g.scalar_scale(g.sub(data, penalty), -1.0);

            const double loss_val = g.value(loss).item();
            if (!std::isfinite(loss_val) || std::fabs(loss_val) > 1e8) {
                // Rows recorded so far stay in *trace for the caller.
                throw NumericalError(
                    "train_sip: divergence at epoch " + std::to_string(epoch) +
                    " (loss " + std::to_string(loss_val) + ", noise_var " +
                    std::to_string(std::exp(
                        model.params.value(model.noise_name).item())) +
                    ")");
            }

            g.backward(loss, gen_groups);
            model.params.adam_update_group("phi", gen_cfg);
            model.params.adam_update_group("theta", gen_cfg);
            model.params.adam_update_group("lik", gen_cfg);
            clamp_log_stds(model.posterior, model.params);

            row.data_term += g.value(data).item();
            row.kl_qp += g.value(kl_qp).item();
            row.kl_pq += g.value(kl_pq).item();
            ++n_batches;
        }

        if (trace != nullptr) {
            const double nb = static_cast<double>(std::max<std::size_t>(n_batches, 1));
            row.data_term /= nb;
            row.kl_qp /= nb;
            row.kl_pq /= nb;
            row.disc_loss /= nb;
            row.noise_var = std::exp(model.params.value(model.noise_name).item());
            trace->rows.push_back(row);
        }
    }
    return model;
}

}  // namespace sip
