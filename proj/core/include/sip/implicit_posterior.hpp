#pragma once

#include <string>
#include <vector>

#include "sip/dataset.hpp"
#include "sip/graph.hpp"
#include "sip/param_store.hpp"
#include "sip/rng.hpp"

namespace sip {

// Trainable inducing locations x_bar [M, 1], stored under group "phi".
struct InducingSet {
    std::size_t m = 50;
    std::string x_bar_name = "inducing.x_bar";
};

// Implicit posterior over inducing-point function values: a Gaussian
// weight-space BNN (widths 1-50-50-1, leaky-ReLU hidden layers) whose
// weights are drawn via w = mu + sigma * eps per sample and evaluated at
// every inducing location. Non-Gaussian over u through the nonlinearity.
// Parameters (group "phi"): per layer, weight/bias means and log-stds.
// Log-stds are clamped into [-10, 3] by projection after each update.
struct ImplicitPosterior {
    std::vector<std::size_t> widths{1, 50, 50, 1};
    double leaky_slope = 0.2;
    std::vector<std::string> w_mu, w_logs, b_mu, b_logs;  // per layer
};

inline constexpr double kLogStdMin = -10.0;
inline constexpr double kLogStdMax = 3.0;

// Means use fan-in scaling (std 1/sqrt(fan_in)); log-stds start at -5 so
// the sampler begins near-deterministic.
ImplicitPosterior make_implicit_posterior(ParamStore& ps, Rng rng,
                                          std::vector<std::size_t> widths,
                                          double leaky_slope);

// x_bar initialized to a uniformly random subset of m training inputs.
InducingSet init_inducing(ParamStore& ps, const Dataset& ds, std::size_t m, Rng rng);

// S weight draws evaluated at the locations of node x_bar ([M,1]);
// returns node [S, M], differentiable w.r.t. mu, log-std and x_bar by
// reparameterization.
NodeId sample_u_node(const ImplicitPosterior& post, Graph& g, NodeId x_bar,
                     Rng& rng, std::size_t s);

// Plain-tensor variant (used for detached discriminator batches).
Tensor sample_u(const ImplicitPosterior& post, const ParamStore& ps,
                const Tensor& x_bar, Rng& rng, std::size_t s);

// Clamp all log-std entries into [kLogStdMin, kLogStdMax].
void clamp_log_stds(const ImplicitPosterior& post, ParamStore& ps);

}  // namespace sip
