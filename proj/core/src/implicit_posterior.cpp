#include "sip/implicit_posterior.hpp"

#include <cmath>

#include "sip/errors.hpp"
#include "sip/linalg.hpp"

namespace sip {

ImplicitPosterior make_implicit_posterior(ParamStore& ps, Rng rng,
                                          std::vector<std::size_t> widths,
                                          double leaky_slope) {
    if (widths.size() < 2) {
        throw ContractError("make_implicit_posterior: need at least one layer");
    }
    ImplicitPosterior post;
    post.widths = std::move(widths);
    post.leaky_slope = leaky_slope;
    for (std::size_t l = 0; l + 1 < post.widths.size(); ++l) {
        const std::size_t fan_in = post.widths[l];
        const std::size_t fan_out = post.widths[l + 1];
        const double mu_std = 1.0 / std::sqrt(static_cast<double>(fan_in));
        const std::string tag = "q.l" + std::to_string(l);
        post.w_mu.push_back(tag + ".w_mu");
        post.w_logs.push_back(tag + ".w_logs");
        post.b_mu.push_back(tag + ".b_mu");
        post.b_logs.push_back(tag + ".b_logs");
        ps.create(post.w_mu.back(), rng.normal(0.0, mu_std, {fan_in, fan_out}), "phi");
        ps.create(post.w_logs.back(), Tensor::full({fan_in, fan_out}, -5.0), "phi");
        ps.create(post.b_mu.back(), Tensor::zeros({fan_out}), "phi");
        ps.create(post.b_logs.back(), Tensor::full({fan_out}, -5.0), "phi");
    }
    return post;
}

InducingSet init_inducing(ParamStore& ps, const Dataset& ds, std::size_t m, Rng rng) {
    const std::size_t n = ds.x_train.rows();
    if (m > n) {
        throw ContractError("init_inducing: m=" + std::to_string(m) + " exceeds N=" +
                            std::to_string(n));
    }
    if (m < 2) throw ContractError("init_inducing: need m >= 2");
    InducingSet ind;
    ind.m = m;
    std::vector<std::size_t> idx = rng.sample_without_replacement(n, m);
    Tensor x_bar({m, 1});
    for (std::size_t i = 0; i < m; ++i) x_bar[i] = ds.x_train[idx[i]];
    ps.create(ind.x_bar_name, std::move(x_bar), "phi");
    return ind;
}

NodeId sample_u_node(const ImplicitPosterior& post, Graph& g, NodeId x_bar,
                     Rng& rng, std::size_t s) {
    if (s < 1) throw ContractError("sample_u: need s >= 1");
    const std::size_t layers = post.w_mu.size();
    // One sigma node per layer, shared by all draws.
    std::vector<NodeId> w_sigma(layers), b_sigma(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        w_sigma[l] = g.exp(g.param(post.w_logs[l]));
        b_sigma[l] = g.exp(g.param(post.b_logs[l]));
    }
    std::vector<NodeId> rows;
    rows.reserve(s);
    for (std::size_t k = 0; k < s; ++k) {
        NodeId h = x_bar;  // [M, 1]
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t fan_in = post.widths[l];
            const std::size_t fan_out = post.widths[l + 1];
            NodeId eps_w = g.constant(rng.normal(0.0, 1.0, {fan_in, fan_out}));
            NodeId eps_b = g.constant(rng.normal(0.0, 1.0, {fan_out}));
            NodeId w = g.add(g.param(post.w_mu[l]), g.mul(w_sigma[l], eps_w));
            NodeId b = g.add(g.param(post.b_mu[l]), g.mul(b_sigma[l], eps_b));
            h = g.broadcast_add_row(g.matmul(h, w), b);
            if (l + 1 < layers) h = g.leaky_relu(h, post.leaky_slope);
        }
        rows.push_back(g.transpose(h));  // [1, M]
    }
    return s == 1 ? rows[0] : g.concat(rows, 0);  // [S, M]
}

Tensor sample_u(const ImplicitPosterior& post, const ParamStore& ps,
                const Tensor& x_bar, Rng& rng, std::size_t s) {
    if (s < 1) throw ContractError("sample_u: need s >= 1");
    const std::size_t m = x_bar.rows();
    const std::size_t layers = post.w_mu.size();
    Tensor out({s, m});
    for (std::size_t k = 0; k < s; ++k) {
        Tensor h = x_bar;  // [M, fan]
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t fan_in = post.widths[l];
            const std::size_t fan_out = post.widths[l + 1];
            const Tensor& wmu = ps.value(post.w_mu[l]);
            const Tensor& wls = ps.value(post.w_logs[l]);
            const Tensor& bmu = ps.value(post.b_mu[l]);
            const Tensor& bls = ps.value(post.b_logs[l]);
            Tensor w({fan_in, fan_out});
            for (std::size_t i = 0; i < w.numel(); ++i) {
                w[i] = wmu[i] + std::exp(wls[i]) * rng.normal();
            }
            Tensor b({fan_out});
            for (std::size_t i = 0; i < b.numel(); ++i) {
                b[i] = bmu[i] + std::exp(bls[i]) * rng.normal();
            }
            Tensor next = linalg::matmul(h, w);
            for (std::size_t i = 0; i < next.rows(); ++i)
                for (std::size_t j = 0; j < next.cols(); ++j) next.at(i, j) += b[j];
            if (l + 1 < layers) {
                for (std::size_t i = 0; i < next.numel(); ++i) {
                    if (next[i] < 0.0) next[i] *= post.leaky_slope;
                }
            }
            h = std::move(next);
        }
        for (std::size_t i = 0; i < m; ++i) out.at(k, i) = h[i];
    }
    return out;
}

void clamp_log_stds(const ImplicitPosterior& post, ParamStore& ps) {
    for (const auto& name : post.w_logs) ps.clamp_value(name, kLogStdMin, kLogStdMax);
    for (const auto& name : post.b_logs) ps.clamp_value(name, kLogStdMin, kLogStdMax);
}

}  // namespace sip
