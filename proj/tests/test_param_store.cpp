#include <cmath>

#include "doctest.h"
#include "sip/errors.hpp"
#include "sip/param_store.hpp"

using sip::AdamConfig;
using sip::ParamStore;
using sip::Tensor;

TEST_CASE("create, lookup and groups") {
    ParamStore ps;
    ps.create("w", Tensor::vector({1.0, 2.0}), "phi");
    ps.create("log_l", Tensor::scalar(0.5), "theta");
    CHECK(ps.has("w"));
    CHECK(!ps.has("nope"));
    CHECK(ps.group_of("w") == "phi");
    CHECK(ps.group_of("log_l") == "theta");
    CHECK(ps.value("w")[1] == 2.0);
    CHECK(ps.step_count("w") == 0);

    auto all = ps.names();
    REQUIRE(all.size() == 2);
    CHECK(all[0] == "log_l");  // alphabetical
    CHECK(all[1] == "w");
    auto phi = ps.names_in_group("phi");
    REQUIRE(phi.size() == 1);
    CHECK(phi[0] == "w");

    CHECK_THROWS_AS(ps.create("w", Tensor::scalar(0.0), "phi"), sip::ContractError);
    CHECK_THROWS_AS(ps.value("missing"), sip::ContractError);
}

TEST_CASE("gradients accumulate and clear") {
    ParamStore ps;
    ps.create("w", Tensor::vector({0.0, 0.0, 0.0}), "phi");
    ps.accumulate_grad("w", Tensor::vector({1.0, 2.0, 3.0}));
    ps.accumulate_grad("w", Tensor::vector({0.5, 0.5, 0.5}));
    CHECK(ps.grad("w")[0] == 1.5);
    CHECK(ps.grad("w")[2] == 3.5);
    CHECK_THROWS_AS(ps.accumulate_grad("w", Tensor::vector({1.0})), sip::ShapeError);
    ps.zero_grad("w");
    CHECK(ps.grad("w")[1] == 0.0);

    ps.create("b", Tensor::scalar(1.0), "phi");
    ps.accumulate_grad("w", Tensor::vector({1.0, 1.0, 1.0}));
    ps.accumulate_grad("b", Tensor::scalar(2.0));
    ps.zero_all_grads();
    CHECK(ps.grad("w")[0] == 0.0);
    CHECK(ps.grad("b").item() == 0.0);
}

TEST_CASE("first Adam step moves by about lr against the gradient") {
    // With bias correction the very first update is lr * g / (|g| + eps').
    ParamStore ps;
    ps.create("w", Tensor::vector({1.0, 1.0}), "phi");
    ps.accumulate_grad("w", Tensor::vector({0.3, -4.0}));
    AdamConfig cfg;
    cfg.lr = 0.1;
    ps.adam_update("w", cfg);
    CHECK(ps.value("w")[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
    CHECK(ps.value("w")[1] == doctest::Approx(1.0 + 0.1).epsilon(1e-6));
    CHECK(ps.step_count("w") == 1);
    CHECK(ps.grad("w")[0] == 0.0);  // cleared by the step
}

TEST_CASE("Adam matches a scalar reference implementation") {
    ParamStore ps;
    ps.create("x", Tensor::scalar(2.0), "phi");
    AdamConfig cfg;
    cfg.lr = 0.05;

    double x = 2.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 50; ++t) {
        const double g = 2.0 * x;  // d/dx x^2
        ps.accumulate_grad("x", Tensor::scalar(2.0 * ps.value("x").item()));
        ps.adam_update("x", cfg);

        m = cfg.beta1 * m + (1 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
        const double mh = m / (1 - std::pow(cfg.beta1, t));
        const double vh = v / (1 - std::pow(cfg.beta2, t));
        x -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
        CHECK(ps.value("x").item() == doctest::Approx(x).epsilon(1e-12));
    }
    CHECK(std::abs(ps.value("x").item()) < 2.0);  // descending on x^2
}

TEST_CASE("group update touches only its members") {
    ParamStore ps;
    ps.create("a", Tensor::scalar(1.0), "phi");
    ps.create("b", Tensor::scalar(1.0), "theta");
    ps.accumulate_grad("a", Tensor::scalar(1.0));
    ps.accumulate_grad("b", Tensor::scalar(1.0));
    AdamConfig cfg;
    ps.adam_update_group("theta", cfg);
    CHECK(ps.value("a").item() == 1.0);
    CHECK(ps.value("b").item() < 1.0);
    CHECK(ps.step_count("a") == 0);
    CHECK(ps.step_count("b") == 1);
    // "a" still holds its accumulated gradient
    CHECK(ps.grad("a").item() == 1.0);
    CHECK(ps.grad("b").item() == 0.0);
}

TEST_CASE("clamp projects values into the interval") {
    ParamStore ps;
    ps.create("s", Tensor::vector({-20.0, 0.5, 9.0}), "phi");
    ps.clamp_value("s", -10.0, 3.0);
    CHECK(ps.value("s")[0] == -10.0);
    CHECK(ps.value("s")[1] == 0.5);
    CHECK(ps.value("s")[2] == 3.0);
}
