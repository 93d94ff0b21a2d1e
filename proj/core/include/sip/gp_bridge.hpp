#pragma once

#include <string>

#include "sip/graph.hpp"
#include "sip/implicit_posterior.hpp"
#include "sip/rff_prior.hpp"
#include "sip/rng.hpp"

namespace sip {

// Gaussian conditional from inducing values to target inputs, built from
// empirical prior moments. mean is [S, N*] (one row per posterior
// sample), var is [N*] (diagonal only; negatives clamped at 0).
struct ConditionalGaussian {
    NodeId mean = -1;
    NodeId var = -1;
    double jitter_used = 0.0;
};

// prior_mean [M+N*], prior_cov [M+N*, M+N*], u_samples [S, M]; the
// leading M rows/columns correspond to the inducing locations. Solves go
// through a Cholesky of the inducing block; when the bare factorization
// fails, diagonal jitter 1e-6*(trace/M) is added and escalated tenfold up
// to three times before a conditioning error is raised.
ConditionalGaussian gp_conditional_node(Graph& g, NodeId prior_mean,
                                        NodeId prior_cov, NodeId u_samples,
                                        std::size_t m);

// Mixture of S Gaussians with uniform weights: one component per
// posterior u sample. component_vars exclude observation noise; scoring
// and sampling add noise_var per component.
struct PredictiveMixture {
    Tensor component_means;  // [S, N*]
    Tensor component_vars;   // [S, N*]
    double noise_var = 0.0;
};

// Predictive distribution at x_star [N*,1]: draws s_prior fresh prior
// functions over [x_bar; x_star] for the moments and s posterior u
// samples for the components.
PredictiveMixture predict(const RffPrior& prior, const ImplicitPosterior& post,
                          const InducingSet& ind, ParamStore& ps,
                          const Tensor& x_star, std::size_t s,
                          std::size_t s_prior, double noise_var, Rng& rng);

// Mixture mean per target point (uniform weights).
Tensor mixture_mean(const PredictiveMixture& mix);

// Ancestral sampling: pick a component uniformly per draw, then add
// Gaussian noise; returns [draws, N*].
Tensor sample_mixture(const PredictiveMixture& mix, Rng& rng, std::size_t draws);

// Map a mixture built in standardized coordinates back to the raw scale.
PredictiveMixture destandardize_mixture(const PredictiveMixture& mix,
                                        double y_mean, double y_std);

// CSV with columns x, sample_id, f.
void dump_predictive_samples(const PredictiveMixture& mix, const Tensor& x_grid,
                             Rng& rng, std::size_t n_samples,
                             const std::string& path);

}  // namespace sip
