#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sip/graph.hpp"
#include "sip/param_store.hpp"
#include "sip/rng.hpp"

namespace sip {

// Binary classifier T over inducing-value vectors u [M]: widths
// [M, 100, 100, 1], leaky-ReLU hidden layers, linear scalar logit.
// Trained so that at the optimum T(u) = log q(u) - log p(u); the KL
// estimates are Monte Carlo means of T under q and of -T under p.
// Parameters live in group "omega", disjoint from everything else.
// Inputs are standardized per batch by the p-batch's column mean/std
// (detached) to keep logits in range early in training.
struct Discriminator {
    std::vector<std::size_t> widths;  // {M, 100, 100, 1}
    double leaky_slope = 0.2;
    std::vector<std::string> w_names, b_names;
};

Discriminator make_discriminator(ParamStore& ps, Rng rng, std::size_t m,
                                 std::size_t hidden = 100,
                                 double leaky_slope = 0.2);

// Logit node [S, 1] for an already-standardized input node [S, M].
NodeId discriminator_logits(const Discriminator& d, Graph& g, NodeId z);

// One Adam step on binary cross-entropy with logits (q labeled 1, p
// labeled 0); u_q and u_p are detached sample batches of equal size.
// Returns the loss value (sum of the two mean BCE halves, so the optimum
// at q = p is 2 log 2).
double discriminator_step(const Discriminator& d, ParamStore& ps,
                          const Tensor& u_q, const Tensor& u_p, double lr);

// (kl_qp, kl_pq) nodes: mean T over q samples, mean -T over p samples.
// Differentiable through u_q and u_p; the discriminator weights receive
// no gradient from these when backward() is restricted away from "omega".
// The first form derives standardization stats from the p batch; the
// second takes them explicitly (same affine map for both batches, which
// leaves the log-ratio unchanged).
std::pair<NodeId, NodeId> kl_estimate_nodes(const Discriminator& d, Graph& g,
                                            NodeId u_q, NodeId u_p);
std::pair<NodeId, NodeId> kl_estimate_nodes(const Discriminator& d, Graph& g,
                                            NodeId u_q, NodeId u_p,
                                            const Tensor& mean,
                                            const Tensor& inv_std);

}  // namespace sip
