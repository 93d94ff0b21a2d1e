#include <cmath>

#include "doctest.h"
#include "sip/errors.hpp"
#include "sip/linalg.hpp"
#include "sip/rng.hpp"
#include "sip/tensor.hpp"

using sip::Tensor;
namespace la = sip::linalg;

TEST_CASE("matmul against hand-computed product") {
    Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    Tensor b = Tensor::matrix({{7, 8}, {9, 10}, {11, 12}});
    Tensor c = la::matmul(a, b);
    REQUIRE(c.rows() == 2);
    REQUIRE(c.cols() == 2);
    CHECK(c.at(0, 0) == doctest::Approx(58).epsilon(1e-14));
    CHECK(c.at(0, 1) == doctest::Approx(64).epsilon(1e-14));
    CHECK(c.at(1, 0) == doctest::Approx(139).epsilon(1e-14));
    CHECK(c.at(1, 1) == doctest::Approx(154).epsilon(1e-14));
    CHECK_THROWS_AS(la::matmul(a, Tensor::matrix({{1, 2}, {3, 4}})), sip::ShapeError);
}

TEST_CASE("transpose swaps entries") {
    Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    Tensor t = la::transpose(a);
    REQUIRE(t.rows() == 3);
    REQUIRE(t.cols() == 2);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(t.at(j, i) == a.at(i, j));
}

TEST_CASE("cholesky of a hand-factored matrix") {
    // l = [[2,0,0],[6,1,0],[-8,5,3]] gives a = l l^T below.
    Tensor a = Tensor::matrix({{4, 12, -16}, {12, 37, -43}, {-16, -43, 98}});
    Tensor l = la::cholesky(a);
    CHECK(l.at(0, 0) == doctest::Approx(2).epsilon(1e-12));
    CHECK(l.at(1, 0) == doctest::Approx(6).epsilon(1e-12));
    CHECK(l.at(1, 1) == doctest::Approx(1).epsilon(1e-12));
    CHECK(l.at(2, 0) == doctest::Approx(-8).epsilon(1e-12));
    CHECK(l.at(2, 1) == doctest::Approx(5).epsilon(1e-12));
    CHECK(l.at(2, 2) == doctest::Approx(3).epsilon(1e-12));
    CHECK(l.at(0, 1) == 0.0);
    CHECK(l.at(0, 2) == 0.0);
    CHECK(l.at(1, 2) == 0.0);
}

TEST_CASE("cholesky round trip on a random SPD matrix") {
    sip::Rng rng(101);
    const std::size_t n = 12;
    Tensor b = rng.normal(0.0, 1.0, {n, n});
    Tensor a = la::matmul(b, la::transpose(b));
    for (std::size_t i = 0; i < n; ++i) a.at(i, i) += static_cast<double>(n);
    Tensor l = la::cholesky(a);
    Tensor r = la::matmul(l, la::transpose(l));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            CHECK(r.at(i, j) == doctest::Approx(a.at(i, j)).epsilon(1e-9));
}

TEST_CASE("cholesky rejects non positive definite input") {
    Tensor a = Tensor::matrix({{1, 2}, {2, 1}});
    CHECK_THROWS_AS(la::cholesky(a), sip::NotPositiveDefiniteError);
    try {
        la::cholesky(a);
        CHECK(false);
    } catch (const sip::NotPositiveDefiniteError& e) {
        CHECK(e.pivot_index == 1);
    }
    CHECK_THROWS_AS(la::cholesky(Tensor::matrix({{1, 2, 3}, {4, 5, 6}})), sip::ShapeError);
}

TEST_CASE("triangular solves invert the factor") {
    Tensor a = Tensor::matrix({{4, 12, -16}, {12, 37, -43}, {-16, -43, 98}});
    Tensor l = la::cholesky(a);
    Tensor b = Tensor::vector({1.0, -2.0, 0.5});
    Tensor y = la::solve_triangular(l, b, false);
    Tensor x = la::solve_triangular(l, y, true);
    // check a x = b
    Tensor ax = la::matmul(a, Tensor({3, 1}, {x[0], x[1], x[2]}));
    CHECK(ax[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(ax[1] == doctest::Approx(-2.0).epsilon(1e-10));
    CHECK(ax[2] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("triangular solve handles matrix right-hand sides") {
    Tensor l = Tensor::matrix({{2, 0}, {1, 3}});
    Tensor b = Tensor::matrix({{2, 4}, {7, 10}});
    Tensor x = la::solve_triangular(l, b, false);
    // forward substitution by hand: row0 = b0/2, row1 = (b1 - 1*x0)/3
    CHECK(x.at(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(x.at(0, 1) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(x.at(1, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(x.at(1, 1) == doctest::Approx(8.0 / 3.0).epsilon(1e-14));
    CHECK_THROWS_AS(la::solve_triangular(l, Tensor::vector({1, 2, 3}), false), sip::ShapeError);
}

TEST_CASE("jittered factorization escalates until the matrix factors") {
    Tensor spd = Tensor::matrix({{4, 12, -16}, {12, 37, -43}, {-16, -43, 98}});
    auto ok = la::cholesky_with_jitter(spd);
    CHECK(ok.jitter == 0.0);
    CHECK(ok.attempts == 1);

    // Semi-definite: rank-1, needs at least one jittered retry.
    Tensor sing = Tensor::matrix({{1, 1}, {1, 1}});
    auto fixed = la::cholesky_with_jitter(sing);
    CHECK(fixed.jitter > 0.0);
    CHECK(fixed.attempts > 1);
    Tensor r = la::matmul(fixed.l, la::transpose(fixed.l));
    CHECK(r.at(0, 0) == doctest::Approx(1.0 + fixed.jitter).epsilon(1e-9));

    // Strongly indefinite: the tiny trace-scaled jitter cannot save it.
    Tensor indef = Tensor::matrix({{1, 2}, {2, 1}});
    CHECK_THROWS_AS(la::cholesky_with_jitter(indef), sip::ConditioningError);
}
