#include "sip/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "sip/errors.hpp"

namespace sip {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_same_length(const Tensor& a, const Tensor& b, const char* who) {
    if (a.numel() != b.numel()) {
        throw ShapeError(std::string(who) + ": length mismatch, " + a.shape_str() +
                         " vs " + b.shape_str());
    }
}

double norm_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

double rmse(const Tensor& pred_mean, const Tensor& y) {
    check_same_length(pred_mean, y, "rmse");
    if (y.numel() == 0) throw ContractError("rmse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double d = pred_mean[i] - y[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(y.numel()));
}

double nll_gaussian(const Tensor& mean, const Tensor& var, const Tensor& y) {
    check_same_length(mean, y, "nll_gaussian");
    check_same_length(var, y, "nll_gaussian");
    if (y.numel() == 0) throw ContractError("nll_gaussian: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double v = var[i];
        if (!(v > 0.0)) {
            throw DomainError("nll_gaussian: nonpositive variance " +
                              std::to_string(v) + " at index " + std::to_string(i));
        }
        const double d = y[i] - mean[i];
        acc += 0.5 * (kLog2Pi + std::log(v) + d * d / v);
    }
    return acc / static_cast<double>(y.numel());
}

double nll_mixture(const PredictiveMixture& mix, const Tensor& y) {
    const std::size_t s = mix.component_means.rows();
    const std::size_t n = mix.component_means.cols();
    if (s < 1) throw ContractError("nll_mixture: no components");
    check_same_length(mix.component_means, mix.component_vars, "nll_mixture");
    if (n != y.numel()) {
        throw ShapeError("nll_mixture: " + std::to_string(n) + " points vs " +
                         std::to_string(y.numel()) + " targets");
    }
    const double log_s = std::log(static_cast<double>(s));
    std::vector<double> comp(s);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < s; ++k) {
            const double v = mix.component_vars.at(k, i) + mix.noise_var;
            if (!(v > 0.0)) {
                throw DomainError("nll_mixture: nonpositive total variance " +
                                  std::to_string(v));
            }
            const double d = y[i] - mix.component_means.at(k, i);
            comp[k] = -0.5 * (kLog2Pi + std::log(v) + d * d / v);
        }
        const double hi = *std::max_element(comp.begin(), comp.end());
        double se = 0.0;
        for (std::size_t k = 0; k < s; ++k) se += std::exp(comp[k] - hi);
        acc += -(hi + std::log(se) - log_s);
    }
    return acc / static_cast<double>(n);
}

double crps_gaussian(const Tensor& mean, const Tensor& stddev, const Tensor& y) {
    check_same_length(mean, y, "crps_gaussian");
    check_same_length(stddev, y, "crps_gaussian");
    if (y.numel() == 0) throw ContractError("crps_gaussian: empty input");
    const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double sd = stddev[i];
        if (!(sd > 0.0)) {
            throw DomainError("crps_gaussian: nonpositive std " +
                              std::to_string(sd) + " at index " + std::to_string(i));
        }
        const double z = (y[i] - mean[i]) / sd;
        acc += sd * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - inv_sqrt_pi);
    }
    return acc / static_cast<double>(y.numel());
}

double crps_samples(const Tensor& fsamples, const Tensor& y) {
    if (fsamples.rank() != 2) {
        throw ShapeError("crps_samples: draws must be [K,N], got " +
                         fsamples.shape_str());
    }
    const std::size_t k = fsamples.rows();
    const std::size_t n = fsamples.cols();
    if (k < 2) throw ContractError("crps_samples: need at least 2 draws");
    if (n != y.numel()) {
        throw ShapeError("crps_samples: " + std::to_string(n) + " points vs " +
                         std::to_string(y.numel()) + " targets");
    }
    const double kd = static_cast<double>(k);
    std::vector<double> col(k);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double abs_term = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            col[j] = fsamples.at(j, i);
            abs_term += std::abs(col[j] - y[i]);
        }
        std::sort(col.begin(), col.end());
        // sum_{j,l} |f_j - f_l| = 2 * sum_j (2j - K + 1) f_(j), ascending order
        double pair_term = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            pair_term += (2.0 * static_cast<double>(j) - kd + 1.0) * col[j];
        }
        acc += abs_term / kd - pair_term / (kd * kd);
    }
    return acc / static_cast<double>(n);
}

}  // namespace sip
