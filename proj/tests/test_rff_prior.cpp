#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "sip/errors.hpp"
#include "sip/graph.hpp"
#include "sip/rff_prior.hpp"
#include "sip/rng.hpp"

using namespace sip;

TEST_CASE("construction freezes frequencies and registers hyperparameters") {
    ParamStore ps;
    RffPrior prior = make_rff_prior(ps, Rng(5), 64);
    CHECK(prior.d == 64);
    REQUIRE(prior.omega.shape() == std::vector<std::size_t>{1, 64});
    REQUIRE(prior.b.shape() == std::vector<std::size_t>{64});
    for (std::size_t i = 0; i < 64; ++i) {
        CHECK(prior.b[i] >= 0.0);
        CHECK(prior.b[i] < 2.0 * 3.14159265358979324);
    }
    CHECK(ps.value(prior.log_lengthscale_name).item() == 0.0);
    CHECK(ps.value(prior.log_amplitude_name).item() == 0.0);
    CHECK(ps.group_of(prior.log_lengthscale_name) == "theta");
    CHECK(ps.group_of(prior.log_amplitude_name) == "theta");

    ParamStore ps2;
    RffPrior again = make_rff_prior(ps2, Rng(5), 64);
    for (std::size_t i = 0; i < 64; ++i) CHECK(again.omega[i] == prior.omega[i]);
}

TEST_CASE("empirical covariance of draws approximates the RBF kernel") {
    // Frozen oracle: with D=500 features and 10^4 draws the empirical
    // covariance of prior functions must track amp^2 exp(-(x-x')^2 / 2 l^2)
    // within 0.15 in max-abs.
    ParamStore ps;
    RffPrior prior = make_rff_prior(ps, Rng(8), 500);
    Rng draws = Rng(8).stream(streams::kPriorDraws);
    const std::size_t n = 9;
    Tensor x({n, 1});
    for (std::size_t i = 0; i < n; ++i) x[i] = -2.0 + 0.5 * static_cast<double>(i);
    Tensor f = sample_functions(prior, ps, draws, x, 10000);
    REQUIRE(f.shape() == std::vector<std::size_t>{10000, n});
    auto [mu, cov] = empirical_moments(f);
    double max_abs_mean = 0.0, max_abs_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        max_abs_mean = std::max(max_abs_mean, std::fabs(mu[i]));
        for (std::size_t j = 0; j < n; ++j) {
            const double d = x[i] - x[j];
            const double k = std::exp(-0.5 * d * d);
            max_abs_err = std::max(max_abs_err, std::fabs(cov.at(i, j) - k));
        }
    }
    CHECK(max_abs_mean < 0.05);
    CHECK(max_abs_err <= 0.15);
}

TEST_CASE("hyperparameters rescale the draws") {
    ParamStore ps;
    RffPrior prior = make_rff_prior(ps, Rng(9), 300);
    Tensor x({2, 1});
    x[0] = 0.0;
    x[1] = 0.3;
    Rng d1 = Rng(17).stream(1);
    Tensor f1 = sample_functions(prior, ps, d1, x, 4000);
    ps.value(prior.log_amplitude_name) = Tensor::scalar(std::log(3.0));
    Rng d2 = Rng(17).stream(1);
    Tensor f2 = sample_functions(prior, ps, d2, x, 4000);
    // same noise stream, tripled amplitude: exact pointwise scaling
    for (std::size_t i = 0; i < 40; ++i)
        CHECK(f2[i] == doctest::Approx(3.0 * f1[i]).epsilon(1e-12));

    // longer lengthscale raises correlation between nearby outputs
    ps.value(prior.log_amplitude_name) = Tensor::scalar(0.0);
    ps.value(prior.log_lengthscale_name) = Tensor::scalar(std::log(0.1));
    Rng d3 = Rng(17).stream(1);
    auto [m3, c3] = empirical_moments(sample_functions(prior, ps, d3, x, 4000));
    ps.value(prior.log_lengthscale_name) = Tensor::scalar(std::log(10.0));
    Rng d4 = Rng(17).stream(1);
    auto [m4, c4] = empirical_moments(sample_functions(prior, ps, d4, x, 4000));
    const double r3 = c3.at(0, 1) / std::sqrt(c3.at(0, 0) * c3.at(1, 1));
    const double r4 = c4.at(0, 1) / std::sqrt(c4.at(0, 0) * c4.at(1, 1));
    CHECK(r4 > 0.95);
    CHECK(r3 < r4);
}

TEST_CASE("empirical moments match hand-computed values") {
    Tensor s = Tensor::matrix({{1, 2}, {3, 4}, {5, 9}});
    auto [mu, cov] = empirical_moments(s);
    CHECK(mu[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(mu[1] == doctest::Approx(5.0).epsilon(1e-15));
    // unbiased: divide by S-1 = 2
    CHECK(cov.at(0, 0) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(cov.at(1, 1) == doctest::Approx(13.0).epsilon(1e-15));
    CHECK(cov.at(0, 1) == doctest::Approx(7.0).epsilon(1e-15));
    CHECK(cov.at(0, 1) == cov.at(1, 0));
    CHECK_THROWS_AS(empirical_moments(Tensor::matrix({{1, 2}})), sip::ContractError);
}

TEST_CASE("moment gradients against finite differences") {
    ParamStore ps;
    RffPrior prior = make_rff_prior(ps, Rng(12), 40);
    Tensor x({3, 1});
    x[0] = -1.0;
    x[1] = 0.2;
    x[2] = 1.4;

    // Scalar functional of the empirical moments; frozen noise stream so
    // only the hyperparameters vary.
    auto eval = [&](Graph& g) {
        Rng frozen(555);
        NodeId xs = g.constant(x);
        NodeId f = sample_functions_node(prior, g, xs, frozen, 30);
        auto [mu, cov] = empirical_moments_node(g, f);
        return g.add(g.sum(g.square(mu)), g.sum(cov));
    };

    Graph g(&ps);
    NodeId root = eval(g);
    ps.zero_all_grads();
    g.backward(root);

    for (const char* name : {"prior.log_lengthscale", "prior.log_amplitude"}) {
        const double analytic = ps.grad(name).item();
        const double h = 1e-5;
        Tensor& v = ps.value(name);
        const double orig = v.item();
        v = Tensor::scalar(orig + h);
        Graph gp(&ps);
        const double fp = gp.value(eval(gp)).item();
        v = Tensor::scalar(orig - h);
        Graph gm(&ps);
        const double fm = gm.value(eval(gm)).item();
        v = Tensor::scalar(orig);
        const double fd = (fp - fm) / (2 * h);
        const double rel =
            std::fabs(fd - analytic) / std::max({1.0, std::fabs(fd), std::fabs(analytic)});
        INFO(name, " fd=", fd, " analytic=", analytic);
        CHECK(rel <= 1e-4);
    }
}

TEST_CASE("prior sample dump has the documented layout") {
    ParamStore ps;
    RffPrior prior = make_rff_prior(ps, Rng(3), 50);
    Tensor grid({4, 1});
    for (std::size_t i = 0; i < 4; ++i) grid[i] = static_cast<double>(i);
    Rng rng(3);
    const std::string path = "test_prior_dump.csv";
    dump_prior_samples(prior, ps, rng, grid, 2, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "sample_id,x,f");
    std::size_t lines = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 8);
    in.close();
    std::remove(path.c_str());
}
