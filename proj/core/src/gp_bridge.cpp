#include "sip/gp_bridge.hpp"

#include <cmath>

#include "sip/csv.hpp"
#include "sip/errors.hpp"
#include "sip/linalg.hpp"

namespace sip {

namespace {

// Pick the smallest jitter in the escalation schedule that makes the
// inducing block factorizable. Done eagerly on values so the graph gets
// exactly one cholesky node.
double preflight_jitter(const Tensor& cov, std::size_t m) {
    Tensor kuu({m, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) kuu.at(i, j) = cov.at(i, j);
    double tr = 0.0;
    for (std::size_t i = 0; i < m; ++i) tr += kuu.at(i, i);
    const double base = 1e-6 * (tr / static_cast<double>(m));
    double jitter = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
        Tensor work = kuu;
        for (std::size_t i = 0; i < m; ++i) work.at(i, i) += jitter;
        try {
            (void)linalg::cholesky(work);
            return jitter;
        } catch (const NotPositiveDefiniteError&) {
            jitter = (jitter == 0.0) ? base : jitter * 10.0;
            if (jitter <= 0.0) jitter = 1e-12;
        }
    }
    throw ConditioningError(
        "gp_conditional: inducing block not factorizable at jitter " +
            std::to_string(jitter / 10.0),
        jitter / 10.0);
}

}  // namespace

ConditionalGaussian gp_conditional_node(Graph& g, NodeId prior_mean,
                                        NodeId prior_cov, NodeId u_samples,
                                        std::size_t m) {
    const Tensor& cov = g.value(prior_cov);
    const Tensor& mean = g.value(prior_mean);
    const Tensor& u = g.value(u_samples);
    if (cov.rank() != 2 || cov.rows() != cov.cols() || cov.rows() < m) {
        throw ShapeError("gp_conditional: bad covariance shape " + cov.shape_str());
    }
    if (mean.rank() != 1 || mean.numel() != cov.rows()) {
        throw ShapeError("gp_conditional: mean shape " + mean.shape_str() +
                         " does not match covariance " + cov.shape_str());
    }
    if (u.rank() != 2 || u.cols() != m) {
        throw ShapeError("gp_conditional: u_samples shape " + u.shape_str() +
                         " does not match m=" + std::to_string(m));
    }
    const std::size_t total = cov.rows();
    const std::size_t ns = total - m;
    if (ns == 0) {
        throw ContractError("gp_conditional: no target inputs beyond the inducing block");
    }

    const double jitter = preflight_jitter(cov, m);
    Tensor eye = Tensor::zeros({m, m});
    for (std::size_t i = 0; i < m; ++i) eye.at(i, i) = jitter;

    NodeId kuu = g.add(g.slice(prior_cov, 0, m, 0, m), g.constant(std::move(eye)));
    NodeId l = g.cholesky(kuu);
    NodeId ksu = g.slice(prior_cov, m, total, 0, m);  // [Ns, M]
    NodeId kus = g.transpose(ksu);                    // [M, Ns]
    NodeId z = g.triangular_solve(l, kus, false);
    NodeId w = g.triangular_solve(l, z, true);        // K_uu^{-1} K_us  [M, Ns]

    NodeId m_u = g.slice(prior_mean, 0, m, 0, 1);       // [M]
    NodeId m_star = g.slice(prior_mean, m, total, 0, 1);  // [Ns]
    NodeId u_c = g.broadcast_add_row(u_samples, g.scalar_scale(m_u, -1.0));
    NodeId cond_mean = g.broadcast_add_row(g.matmul(u_c, w), m_star);  // [S, Ns]

    NodeId ktt_diag = g.diag_part(g.slice(prior_cov, m, total, m, total));
    NodeId quad = g.sum_axis(g.mul(ksu, g.transpose(w)), 1);  // [Ns]
    NodeId var = g.leaky_relu(g.sub(ktt_diag, quad), 0.0);

    ConditionalGaussian out;
    out.mean = cond_mean;
    out.var = var;
    out.jitter_used = jitter;
    return out;
}

PredictiveMixture predict(const RffPrior& prior, const ImplicitPosterior& post,
                          const InducingSet& ind, ParamStore& ps,
                          const Tensor& x_star, std::size_t s,
                          std::size_t s_prior, double noise_var, Rng& rng) {
    if (s < 1) throw ContractError("predict: need s >= 1");
    if (x_star.rank() != 2 || x_star.cols() != 1 || x_star.rows() < 1) {
        throw ShapeError("predict: x_star must be [N*,1], got " + x_star.shape_str());
    }
    const std::size_t m = ind.m;
    const std::size_t ns = x_star.rows();

    Graph g(&ps);
    NodeId x_bar = g.param(ind.x_bar_name);
    NodeId u_q = sample_u_node(post, g, x_bar, rng, s);
    NodeId x_all = g.concat({x_bar, g.constant(x_star)}, 0);
    NodeId f_prior = sample_functions_node(prior, g, x_all, rng, s_prior);
    auto [mean, cov] = empirical_moments_node(g, f_prior);
    ConditionalGaussian cond = gp_conditional_node(g, mean, cov, u_q, m);

    PredictiveMixture mix;
    mix.component_means = g.value(cond.mean);  // [S, Ns]
    const Tensor& var = g.value(cond.var);     // [Ns]
    mix.component_vars = Tensor({s, ns});
    for (std::size_t k = 0; k < s; ++k)
        for (std::size_t i = 0; i < ns; ++i) mix.component_vars.at(k, i) = var[i];
    mix.noise_var = noise_var;
    return mix;
}

Tensor mixture_mean(const PredictiveMixture& mix) {
    const std::size_t s = mix.component_means.rows();
    const std::size_t n = mix.component_means.cols();
    Tensor out = Tensor::zeros({n});
    for (std::size_t k = 0; k < s; ++k)
        for (std::size_t i = 0; i < n; ++i) out[i] += mix.component_means.at(k, i);
    for (std::size_t i = 0; i < n; ++i) out[i] /= static_cast<double>(s);
    return out;
}

Tensor sample_mixture(const PredictiveMixture& mix, Rng& rng, std::size_t draws) {
    if (draws < 1) throw ContractError("sample_mixture: need draws >= 1");
    const std::size_t s = mix.component_means.rows();
    const std::size_t n = mix.component_means.cols();
    Tensor out({draws, n});
    for (std::size_t d = 0; d < draws; ++d) {
        std::size_t k = static_cast<std::size_t>(rng.next_double() * static_cast<double>(s));
        if (k >= s) k = s - 1;
        for (std::size_t i = 0; i < n; ++i) {
            const double sd = std::sqrt(mix.component_vars.at(k, i) + mix.noise_var);
            out.at(d, i) = rng.normal(mix.component_means.at(k, i), sd);
        }
    }
    return out;
}

PredictiveMixture destandardize_mixture(const PredictiveMixture& mix,
                                        double y_mean, double y_std) {
    PredictiveMixture out = mix;
    const double v = y_std * y_std;
    for (std::size_t i = 0; i < out.component_means.numel(); ++i) {
        out.component_means[i] = out.component_means[i] * y_std + y_mean;
    }
    for (std::size_t i = 0; i < out.component_vars.numel(); ++i) {
        out.component_vars[i] *= v;
    }
    out.noise_var *= v;
    return out;
}

void dump_predictive_samples(const PredictiveMixture& mix, const Tensor& x_grid,
                             Rng& rng, std::size_t n_samples,
                             const std::string& path) {
    Tensor draws = sample_mixture(mix, rng, n_samples);
    std::vector<std::vector<std::string>> rows;
    rows.reserve(draws.numel());
    for (std::size_t d = 0; d < draws.rows(); ++d) {
        for (std::size_t i = 0; i < draws.cols(); ++i) {
            rows.push_back({format_sig17(x_grid[i]), std::to_string(d),
                            format_sig17(draws.at(d, i))});
        }
    }
    write_csv(path, {"x", "sample_id", "f"}, rows);
}

}  // namespace sip
