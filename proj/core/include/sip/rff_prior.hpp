#pragma once

#include <string>
#include <utility>

#include "sip/graph.hpp"
#include "sip/param_store.hpp"
#include "sip/rng.hpp"
#include "sip/tensor.hpp"

namespace sip {

// GP prior realized as a wide one-layer random-feature network:
// f(x) = amplitude * sqrt(2/D) * sum_d w_d cos(x / lengthscale * omega_d + b_d)
// with w ~ N(0, I) redrawn per sample. Frequencies omega ~ N(0,1) and
// phases b ~ U[0, 2pi) are frozen at construction; only the log
// length-scale and log amplitude train (group "theta", both start at
// log 1 = 0). In expectation the sample covariance equals the RBF kernel
// amplitude^2 exp(-(x-x')^2 / (2 lengthscale^2)).
struct RffPrior {
    Tensor omega;  // [1, D], frozen
    Tensor b;      // [D], frozen
    std::size_t d = 500;
    std::string log_lengthscale_name = "prior.log_lengthscale";
    std::string log_amplitude_name = "prior.log_amplitude";
};

RffPrior make_rff_prior(ParamStore& ps, Rng rng, std::size_t d);

// S function draws at the inputs of node x ([N,1]); returns node [S, N].
// Differentiable w.r.t. the two hyperparameters and x.
NodeId sample_functions_node(const RffPrior& prior, Graph& g, NodeId x, Rng& rng,
                             std::size_t s);

// Plain-tensor variant for evaluation and figure dumps.
Tensor sample_functions(const RffPrior& prior, const ParamStore& ps, Rng& rng,
                        const Tensor& x, std::size_t s);

// Column means and unbiased sample covariance of samples [S, N].
std::pair<NodeId, NodeId> empirical_moments_node(Graph& g, NodeId samples);
std::pair<Tensor, Tensor> empirical_moments(const Tensor& samples);

// CSV with columns sample_id, x, f for n_samples draws on the given grid.
void dump_prior_samples(const RffPrior& prior, const ParamStore& ps, Rng& rng,
                        const Tensor& x_grid, std::size_t n_samples,
                        const std::string& path);

}  // namespace sip
