#pragma once

#include <cstdint>
#include <string>

#include "sip/gp_bridge.hpp"
#include "sip/tensor.hpp"

namespace sip {

// One table cell group: all three scores for one method on one instance,
// computed on the original data scale.
struct MetricsRecord {
    std::string dataset;
    std::uint64_t seed = 0;
    std::string method;  // "exact_gp" or "sip"
    double rmse = 0.0;
    double nll = 0.0;
    double crps = 0.0;
};

double rmse(const Tensor& pred_mean, const Tensor& y);

// Mean of -log N(y_i; mean_i, var_i).
double nll_gaussian(const Tensor& mean, const Tensor& var, const Tensor& y);

// Mean over points of -[logsumexp_s log N(y_i; m_si, v_si + noise) - log S].
double nll_mixture(const PredictiveMixture& mix, const Tensor& y);

// Closed form sigma * [z(2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)], averaged.
double crps_gaussian(const Tensor& mean, const Tensor& stddev, const Tensor& y);

// Empirical CRPS from predictive draws [K, N*]:
//   (1/K) sum_k |f_k - y| - (1/(2K^2)) sum_kj |f_k - f_j|
// per point, averaged over points. The pairwise term uses the sorted
// rearrangement, so the cost is O(K log K) per point.
double crps_samples(const Tensor& fsamples, const Tensor& y);

}  // namespace sip
