#include "sip/discriminator.hpp"

#include <cmath>

#include "sip/errors.hpp"

namespace sip {

namespace {

// Column mean and 1/std of the p batch, with a small floor on std.
std::pair<Tensor, Tensor> p_batch_stats(const Tensor& u_p) {
    const std::size_t s = u_p.rows();
    const std::size_t m = u_p.cols();
    Tensor mean = Tensor::zeros({m});
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < m; ++j) mean[j] += u_p.at(i, j);
    for (std::size_t j = 0; j < m; ++j) mean[j] /= static_cast<double>(s);
    Tensor inv_std = Tensor::zeros({m});
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double d = u_p.at(i, j) - mean[j];
            inv_std[j] += d * d;
        }
    for (std::size_t j = 0; j < m; ++j) {
        const double sd = std::sqrt(inv_std[j] / static_cast<double>(s));
        inv_std[j] = 1.0 / std::max(sd, 1e-8);
    }
    return {std::move(mean), std::move(inv_std)};
}

NodeId standardize_node(Graph& g, NodeId u, const Tensor& mean,
                        const Tensor& inv_std) {
    Tensor neg_mean = mean;
    for (std::size_t i = 0; i < neg_mean.numel(); ++i) neg_mean[i] = -neg_mean[i];
    NodeId centered = g.broadcast_add_row(u, g.constant(std::move(neg_mean)));
    return g.mul(centered, g.constant(inv_std));
}

}  // namespace

Discriminator make_discriminator(ParamStore& ps, Rng rng, std::size_t m,
                                 std::size_t hidden, double leaky_slope) {
    if (m < 1 || hidden < 1) throw ContractError("make_discriminator: bad widths");
    Discriminator d;
    d.widths = {m, hidden, hidden, 1};
    d.leaky_slope = leaky_slope;
    for (std::size_t l = 0; l + 1 < d.widths.size(); ++l) {
        const std::size_t fan_in = d.widths[l];
        const std::size_t fan_out = d.widths[l + 1];
        const std::string tag = "disc.l" + std::to_string(l);
        d.w_names.push_back(tag + ".w");
        d.b_names.push_back(tag + ".b");
        ps.create(d.w_names.back(),
                  rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)),
                             {fan_in, fan_out}),
                  "omega");
        ps.create(d.b_names.back(), Tensor::zeros({fan_out}), "omega");
    }
    return d;
}

NodeId discriminator_logits(const Discriminator& d, Graph& g, NodeId z) {
    NodeId h = z;
    const std::size_t layers = d.w_names.size();
    for (std::size_t l = 0; l < layers; ++l) {
        h = g.broadcast_add_row(g.matmul(h, g.param(d.w_names[l])),
                                g.param(d.b_names[l]));
        if (l + 1 < layers) h = g.leaky_relu(h, d.leaky_slope);
    }
    return h;  // [S, 1]
}

double discriminator_step(const Discriminator& d, ParamStore& ps,
                          const Tensor& u_q, const Tensor& u_p, double lr) {
    if (!u_q.same_shape(u_p) || u_q.rank() != 2) {
        throw ShapeError("discriminator_step: batches must be equal-shaped [S,M], got " +
                         u_q.shape_str() + " and " + u_p.shape_str());
    }
    auto [mean, inv_std] = p_batch_stats(u_p);
    Graph g(&ps);
    NodeId z_q = standardize_node(g, g.constant(u_q), mean, inv_std);
    NodeId z_p = standardize_node(g, g.constant(u_p), mean, inv_std);
    NodeId t_q = discriminator_logits(d, g, z_q);
    NodeId t_p = discriminator_logits(d, g, z_p);
    // -E[log sig(T_q)] - E[log(1 - sig(T_p))], in softplus form.
    NodeId loss = g.add(g.mean(g.softplus(g.scalar_scale(t_q, -1.0))),
                        g.mean(g.softplus(t_p)));
    const double loss_value = g.value(loss).item();
    g.backward(loss, {"omega"});
    AdamConfig cfg;
    cfg.lr = lr;
    ps.adam_update_group("omega", cfg);
    return loss_value;
}

std::pair<NodeId, NodeId> kl_estimate_nodes(const Discriminator& d, Graph& g,
                                            NodeId u_q, NodeId u_p) {
    auto [mean, inv_std] = p_batch_stats(g.value(u_p));
    return kl_estimate_nodes(d, g, u_q, u_p, mean, inv_std);
}

std::pair<NodeId, NodeId> kl_estimate_nodes(const Discriminator& d, Graph& g,
                                            NodeId u_q, NodeId u_p,
                                            const Tensor& mean,
                                            const Tensor& inv_std) {
    const Tensor& vq = g.value(u_q);
    const Tensor& vp = g.value(u_p);
    if (vq.rank() != 2 || vp.rank() != 2 || vq.cols() != vp.cols()) {
        throw ShapeError("kl_estimates: batches must be [S,M] with matching M, got " +
                         vq.shape_str() + " and " + vp.shape_str());
    }
    NodeId z_q = standardize_node(g, u_q, mean, inv_std);
    NodeId z_p = standardize_node(g, u_p, mean, inv_std);
    NodeId kl_qp = g.mean(discriminator_logits(d, g, z_q));
    NodeId kl_pq = g.scalar_scale(g.mean(discriminator_logits(d, g, z_p)), -1.0);
    return {kl_qp, kl_pq};
}

}  // namespace sip
