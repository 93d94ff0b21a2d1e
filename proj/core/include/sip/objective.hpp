#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sip/dataset.hpp"
#include "sip/discriminator.hpp"
#include "sip/gp_bridge.hpp"
#include "sip/implicit_posterior.hpp"
#include "sip/rff_prior.hpp"

namespace sip {

struct SipConfig {
    double alpha = 1.0;  // in (0, 1]
    std::size_t s_posterior = 20;
    std::size_t s_prior_moments = 200;
    std::size_t epochs = 2000;
    std::size_t batch_size = 100;
    double lr = 1e-3;
    double disc_lr = 1e-3;
    std::uint64_t seed = 0;
    std::size_t m_inducing = 50;
    std::size_t d_features = 500;
    double leaky_slope = 0.2;
    double init_noise_var = 0.1;  // likelihood noise, trained in log space
    std::size_t s_predict = 100;  // mixture components at prediction time
};

void validate_config(const SipConfig& cfg);  // throws ConfigError

struct TraceRow {
    std::size_t epoch = 0;
    double data_term = 0.0;
    double kl_qp = 0.0;
    double kl_pq = 0.0;
    double disc_loss = 0.0;
    double noise_var = 0.0;
};

struct TrainTrace {
    std::vector<TraceRow> rows;
};

void export_trace_csv(const TrainTrace& trace, const std::string& path);

// Everything a trained run needs for prediction.
struct SipModel {
    ParamStore params;
    RffPrior prior;
    ImplicitPosterior posterior;
    InducingSet inducing;
    Discriminator disc;
    SipConfig cfg;
    std::string noise_name = "lik.log_noise_var";

    double noise_var() const;
    // Predictive mixture at x_star (standardized coordinates), using
    // cfg.s_predict components and cfg.s_prior_moments moment draws.
    PredictiveMixture predict_at(const Tensor& x_star, Rng& rng) const;
};

// Per-point averaged-likelihood data term
//   (1/alpha) * [logsumexp_s(alpha * log N(y_i; f_si, var)) - log S],
// summed over the batch and rescaled by n_total / B. The spread of the
// samples makes this interpolate between a Bayes-averaged likelihood
// (alpha -> 0) and the predictive-likelihood regime (alpha = 1).
//
// Tensor form: f_samples [S, B] are sample function values scored with a
// shared noise variance.
double alpha_energy_term(const Tensor& f_samples, const Tensor& y_batch,
                         double noise_var, double alpha, std::size_t n_total);

// Graph form used in training: mean_node [S, B] conditional means,
// var_node [B] conditional variances folded into the Gaussian likelihood
// together with the (trainable, scalar node) observation noise.
NodeId alpha_energy_node(Graph& g, NodeId mean_node, NodeId var_node,
                         NodeId noise_node, const Tensor& y_batch, double alpha,
                         std::size_t n_total);

// Alternates one discriminator Adam step with one generator Adam step on
//   loss = -(data term - 0.5 * (kl_qp + kl_pq))
// over shuffled minibatches for cfg.epochs. Deterministic given cfg.seed.
// ds must be standardized. Throws NumericalError on divergence (non-finite
// or absurdly large loss), carrying the trace so far.
SipModel train_sip(const Dataset& ds, const SipConfig& cfg,
                   TrainTrace* trace = nullptr);

}  // namespace sip
