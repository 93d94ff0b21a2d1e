#include <cmath>
#include <cstddef>
#include <utility>

#include "doctest.h"
#include "sip/discriminator.hpp"
#include "sip/errors.hpp"
#include "sip/graph.hpp"
#include "sip/param_store.hpp"
#include "sip/rng.hpp"

using namespace sip;

TEST_CASE("indistinguishable batches drive the loss to 2 log 2") {
    ParamStore ps;
    Discriminator d = make_discriminator(ps, Rng(11), 2, 16, 0.2);
    Rng rng(12);
    for (int step = 0; step < 300; ++step) {
        Tensor q = rng.normal(0.0, 1.0, {256, 2});
        Tensor p = rng.normal(0.0, 1.0, {256, 2});
        discriminator_step(d, ps, q, p, 1e-3);
    }
    // lr 0 leaves the weights untouched, so this is a pure evaluation
    Tensor q = rng.normal(0.0, 1.0, {4096, 2});
    Tensor p = rng.normal(0.0, 1.0, {4096, 2});
    const double loss = discriminator_step(d, ps, q, p, 0.0);
    CHECK(loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(0.05));
}

TEST_CASE("trained logit tracks the analytic Gaussian log-ratio") {
    // q = N(1,1), p = N(0,1): log q(x) - log p(x) = x - 1/2 and both
    // directed divergences equal 1/2.
    ParamStore ps;
    Discriminator d = make_discriminator(ps, Rng(13), 1, 32, 0.2);
    Rng rng(14);
    for (int step = 0; step < 1200; ++step) {
        Tensor q = rng.normal(1.0, 1.0, {400, 1});
        Tensor p = rng.normal(0.0, 1.0, {400, 1});
        discriminator_step(d, ps, q, p, 2e-3);
    }

    Graph g(&ps);
    Tensor grid({9, 1});
    for (std::size_t i = 0; i < 9; ++i) grid[i] = -1.5 + 0.5 * static_cast<double>(i);
    // evaluate against the exact p moments, matching the batch convention
    Tensor logits = g.value(discriminator_logits(d, g, g.constant(grid)));
    double mae = 0.0;
    for (std::size_t i = 0; i < 9; ++i) mae += std::fabs(logits[i] - (grid[i] - 0.5));
    mae /= 9.0;
    CHECK(mae <= 0.15);

    Tensor q_big = rng.normal(1.0, 1.0, {20000, 1});
    Tensor p_big = rng.normal(0.0, 1.0, {20000, 1});
    Graph g2(&ps);
    Tensor mean = Tensor::zeros({1});
    Tensor inv_std = Tensor::full({1}, 1.0);
    auto [kl_qp, kl_pq] = kl_estimate_nodes(d, g2, g2.constant(q_big),
                                            g2.constant(p_big), mean, inv_std);
    CHECK(g2.value(kl_qp).item() == doctest::Approx(0.5).epsilon(0.3));
    CHECK(g2.value(kl_pq).item() == doctest::Approx(0.5).epsilon(0.3));
}

TEST_CASE("swapping the batches negates the paired estimates") {
    ParamStore ps;
    Discriminator d = make_discriminator(ps, Rng(15), 3, 8, 0.2);
    Rng rng(16);
    Tensor a = rng.normal(0.5, 1.2, {40, 3});
    Tensor b = rng.normal(-0.2, 0.8, {40, 3});
    Tensor mean = Tensor::zeros({3});
    Tensor inv_std = Tensor::full({3}, 1.0);

    Graph g(&ps);
    auto [qp, pq] = kl_estimate_nodes(d, g, g.constant(a), g.constant(b), mean, inv_std);
    Graph g2(&ps);
    auto [qp_s, pq_s] =
        kl_estimate_nodes(d, g2, g2.constant(b), g2.constant(a), mean, inv_std);
    CHECK(g2.value(qp_s).item() == doctest::Approx(-g.value(pq).item()).epsilon(1e-12));
    CHECK(g2.value(pq_s).item() == doctest::Approx(-g.value(qp).item()).epsilon(1e-12));
}

TEST_CASE("derived batch stats match the explicit overload") {
    ParamStore ps;
    Discriminator d = make_discriminator(ps, Rng(17), 2, 8, 0.2);
    Rng rng(18);
    Tensor q = rng.normal(1.0, 2.0, {30, 2});
    Tensor p = rng.normal(-1.0, 0.5, {30, 2});

    // recompute the p-batch column stats by hand (population std, floored)
    Tensor mean = Tensor::zeros({2});
    for (std::size_t i = 0; i < 30; ++i)
        for (std::size_t j = 0; j < 2; ++j) mean[j] += p.at(i, j);
    for (std::size_t j = 0; j < 2; ++j) mean[j] /= 30.0;
    Tensor inv_std = Tensor::zeros({2});
    for (std::size_t i = 0; i < 30; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            const double dd = p.at(i, j) - mean[j];
            inv_std[j] += dd * dd;
        }
    for (std::size_t j = 0; j < 2; ++j) {
        inv_std[j] = 1.0 / std::max(std::sqrt(inv_std[j] / 30.0), 1e-8);
    }

    Graph g(&ps);
    auto [qp_a, pq_a] = kl_estimate_nodes(d, g, g.constant(q), g.constant(p));
    Graph g2(&ps);
    auto [qp_b, pq_b] =
        kl_estimate_nodes(d, g2, g2.constant(q), g2.constant(p), mean, inv_std);
    CHECK(g.value(qp_a).item() == g2.value(qp_b).item());
    CHECK(g.value(pq_a).item() == g2.value(pq_b).item());
}

TEST_CASE("kl nodes backpropagate into the batches but not the weights") {
    ParamStore ps;
    Discriminator d = make_discriminator(ps, Rng(19), 2, 8, 0.2);
    ps.create("uq", Rng(20).normal(0.0, 1.0, {5, 2}), "phi");
    ps.create("up", Rng(21).normal(0.0, 1.0, {5, 2}), "phi");
    Tensor mean = Tensor::zeros({2});
    Tensor inv_std = Tensor::full({2}, 1.0);

    auto eval = [&](Graph& g) {
        auto [qp, pq] = kl_estimate_nodes(d, g, g.param("uq"), g.param("up"),
                                          mean, inv_std);
        return g.add(qp, g.scalar_scale(pq, 2.0));
    };

    Graph g(&ps);
    ps.zero_all_grads();
    g.backward(eval(g), {"phi"});
    for (const auto& name : d.w_names) {
        const Tensor& wg = ps.grad(name);
        for (std::size_t i = 0; i < wg.numel(); ++i) CHECK(wg[i] == 0.0);
    }

    for (const char* name : {"uq", "up"}) {
        const Tensor grad = ps.grad(name);
        Tensor& v = ps.value(name);
        double gnorm = 0.0;
        for (std::size_t i = 0; i < grad.numel(); ++i) gnorm += std::fabs(grad[i]);
        CHECK(gnorm > 0.0);
        for (std::size_t i = 0; i < v.numel(); ++i) {
            const double h = 1e-6;
            const double orig = v[i];
            v[i] = orig + h;
            Graph gp(&ps);
            const double fp = gp.value(eval(gp)).item();
            v[i] = orig - h;
            Graph gm(&ps);
            const double fm = gm.value(eval(gm)).item();
            v[i] = orig;
            const double fd = (fp - fm) / (2 * h);
            const double rel = std::fabs(fd - grad[i]) /
                               std::max({1.0, std::fabs(fd), std::fabs(grad[i])});
            CHECK(rel <= 1e-5);
        }
    }
}

TEST_CASE("batch contracts") {
    ParamStore ps;
    Discriminator d = make_discriminator(ps, Rng(22), 2, 8, 0.2);
    Rng rng(23);
    Tensor q = rng.normal(0.0, 1.0, {10, 2});
    Tensor p3 = rng.normal(0.0, 1.0, {10, 3});
    CHECK_THROWS_AS(discriminator_step(d, ps, q, p3, 1e-3), ShapeError);
    Graph g(&ps);
    CHECK_THROWS_AS(kl_estimate_nodes(d, g, g.constant(q), g.constant(p3)), ShapeError);
    CHECK_THROWS_AS(make_discriminator(ps, Rng(1), 0, 8, 0.2), ContractError);
}
