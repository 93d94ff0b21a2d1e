#include "sip/rff_prior.hpp"

#include <cmath>
#include <numbers>

#include "sip/csv.hpp"
#include "sip/errors.hpp"
#include "sip/linalg.hpp"

namespace sip {

RffPrior make_rff_prior(ParamStore& ps, Rng rng, std::size_t d) {
    if (d < 1) throw ContractError("make_rff_prior: need d >= 1");
    RffPrior prior;
    prior.d = d;
    prior.omega = rng.normal(0.0, 1.0, {1, d});
    prior.b = rng.uniform(0.0, 2.0 * std::numbers::pi, {d});
    ps.create(prior.log_lengthscale_name, Tensor::scalar(0.0), "theta");
    ps.create(prior.log_amplitude_name, Tensor::scalar(0.0), "theta");
    return prior;
}

NodeId sample_functions_node(const RffPrior& prior, Graph& g, NodeId x, Rng& rng,
                             std::size_t s) {
    if (s < 1) throw ContractError("sample_functions: need s >= 1");
    const std::size_t n = g.value(x).rows();
    if (g.value(x).rank() != 2 || g.value(x).cols() != 1 || n < 1) {
        throw ShapeError("sample_functions: x must be [N,1], got " +
                         g.value(x).shape_str());
    }
    NodeId w = g.constant(rng.normal(0.0, 1.0, {prior.d, s}));
    NodeId proj = g.matmul(x, g.constant(prior.omega));  // [N, D]
    NodeId inv_l = g.exp(g.scalar_scale(g.param(prior.log_lengthscale_name), -1.0));
    NodeId phase = g.broadcast_add_row(g.mul(proj, inv_l), g.constant(prior.b));
    NodeId feats = g.cos(phase);          // [N, D]
    NodeId f = g.matmul(feats, w);        // [N, S]
    NodeId amp = g.exp(g.param(prior.log_amplitude_name));
    NodeId scaled = g.scalar_scale(g.mul(f, amp),
                                   std::sqrt(2.0 / static_cast<double>(prior.d)));
    return g.transpose(scaled);  // [S, N]
}

Tensor sample_functions(const RffPrior& prior, const ParamStore& ps, Rng& rng,
                        const Tensor& x, std::size_t s) {
    if (s < 1) throw ContractError("sample_functions: need s >= 1");
    if (x.rank() != 2 || x.cols() != 1 || x.rows() < 1) {
        throw ShapeError("sample_functions: x must be [N,1], got " + x.shape_str());
    }
    const std::size_t n = x.rows();
    const double lengthscale = std::exp(ps.value(prior.log_lengthscale_name).item());
    const double amplitude = std::exp(ps.value(prior.log_amplitude_name).item());
    const double scale = amplitude * std::sqrt(2.0 / static_cast<double>(prior.d));
    Tensor w = rng.normal(0.0, 1.0, {prior.d, s});
    Tensor feats({n, prior.d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < prior.d; ++j) {
            feats.at(i, j) =
                std::cos(x[i] / lengthscale * prior.omega[j] + prior.b[j]);
        }
    }
    Tensor f = linalg::matmul(feats, w);  // [N, S]
    Tensor out({s, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < s; ++j) out.at(j, i) = scale * f.at(i, j);
    return out;
}

std::pair<NodeId, NodeId> empirical_moments_node(Graph& g, NodeId samples) {
    const Tensor& v = g.value(samples);
    if (v.rank() != 2 || v.rows() < 2) {
        throw ContractError("empirical_moments: need at least 2 samples, got " +
                            v.shape_str());
    }
    const double s = static_cast<double>(v.rows());
    NodeId mean = g.mean_axis(samples, 0);  // [N]
    NodeId centered = g.broadcast_add_row(samples, g.scalar_scale(mean, -1.0));
    NodeId cov = g.scalar_scale(g.matmul(g.transpose(centered), centered),
                                1.0 / (s - 1.0));
    return {mean, cov};
}

std::pair<Tensor, Tensor> empirical_moments(const Tensor& samples) {
    if (samples.rank() != 2 || samples.rows() < 2) {
        throw ContractError("empirical_moments: need at least 2 samples, got " +
                            samples.shape_str());
    }
    const std::size_t s = samples.rows();
    const std::size_t n = samples.cols();
    Tensor mean = Tensor::zeros({n});
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < n; ++j) mean[j] += samples.at(i, j);
    for (std::size_t j = 0; j < n; ++j) mean[j] /= static_cast<double>(s);
    Tensor centered({s, n});
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < n; ++j)
            centered.at(i, j) = samples.at(i, j) - mean[j];
    Tensor cov = linalg::matmul(linalg::transpose(centered), centered);
    const double denom = static_cast<double>(s - 1);
    for (std::size_t i = 0; i < cov.numel(); ++i) cov[i] /= denom;
    return {std::move(mean), std::move(cov)};
}

void dump_prior_samples(const RffPrior& prior, const ParamStore& ps, Rng& rng,
                        const Tensor& x_grid, std::size_t n_samples,
                        const std::string& path) {
    Tensor f = sample_functions(prior, ps, rng, x_grid, n_samples);
    std::vector<std::vector<std::string>> rows;
    rows.reserve(f.numel());
    for (std::size_t s = 0; s < f.rows(); ++s) {
        for (std::size_t i = 0; i < f.cols(); ++i) {
            rows.push_back({std::to_string(s), format_sig17(x_grid[i]),
                            format_sig17(f.at(s, i))});
        }
    }
    write_csv(path, {"sample_id", "x", "f"}, rows);
}

}  // namespace sip
