#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "sip/rng.hpp"
#include "sip/tensor.hpp"

namespace sip {

// Exact GP regression with an RBF + white kernel,
//   k(x, x') = signal_var * exp(-(x - x')^2 / (2 lengthscale^2)) + noise_var * 1[x = x'],
// zero prior mean (data are standardized first). Hyperparameters train in
// log space by Adam on the log marginal likelihood.
struct GpModel {
    double log_lengthscale = 0.0;
    double log_signal_var = 0.0;
    double log_noise_var = 0.0;
    bool fitted = false;
    // Cache from fit: training inputs, alpha = K^{-1} y, and K^{-1}.
    Tensor x_train;  // [N, 1]
    Tensor alpha;    // [N]
    Tensor kinv;     // [N, N]

    double lengthscale() const;
    double signal_var() const;
    double noise_var() const;
};

// -1/2 y^T K^{-1} y - 1/2 log|K| - (N/2) log 2pi with K = K_rbf + noise I,
// via Cholesky with escalating-jitter fallback.
double log_marginal_likelihood(const GpModel& m, const Tensor& x, const Tensor& y);

// Same value plus the gradient w.r.t. (log_lengthscale, log_signal_var,
// log_noise_var).
std::pair<double, std::array<double, 3>> log_marginal_likelihood_grad(
    const GpModel& m, const Tensor& x, const Tensor& y);

struct GpFitOptions {
    std::size_t restarts = 3;
    std::size_t steps = 2000;
    double lr = 1e-2;
    double noise_floor = 1e-6;
    // Random log-space initialization range per hyperparameter.
    double init_lo = -2.0;
    double init_hi = 1.0;
};

// Adam ascent on the marginal likelihood from `restarts` random
// initializations; keeps the best. per_step_lml (if given) receives the
// best restart's lml trajectory.
GpModel fit_gp(const Tensor& x, const Tensor& y, const GpFitOptions& opt, Rng& rng,
               std::vector<double>* per_step_lml = nullptr);

// Predictive mean and variance over y (noise variance included).
std::pair<Tensor, Tensor> posterior_predict(const GpModel& m, const Tensor& x_star);

// CSV with columns x, mean, std.
void dump_gp_predictive(const GpModel& m, const Tensor& x_star,
                        const std::string& path);

}  // namespace sip
