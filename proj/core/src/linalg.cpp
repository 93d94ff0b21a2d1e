#include "sip/linalg.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "sip/errors.hpp"

namespace sip::linalg {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<EMat>;
using MapConst = Eigen::Map<const EMat>;

void require_square(const Tensor& a, const char* who) {
    if (a.rank() != 2 || a.rows() != a.cols()) {
        throw ShapeError(std::string(who) + ": expected a square matrix, got " +
                         a.shape_str());
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul: expected rank-2 operands, got " + a.shape_str() +
                         " and " + b.shape_str());
    }
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner extents differ, " + a.shape_str() + " x " +
                         b.shape_str());
    }
    Tensor out({a.rows(), b.cols()});
    MapConst ma(a.data(), static_cast<Eigen::Index>(a.rows()),
                static_cast<Eigen::Index>(a.cols()));
    MapConst mb(b.data(), static_cast<Eigen::Index>(b.rows()),
                static_cast<Eigen::Index>(b.cols()));
    MapMat mo(out.data(), static_cast<Eigen::Index>(out.rows()),
              static_cast<Eigen::Index>(out.cols()));
    mo.noalias() = ma * mb;
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() == 1) {
        Tensor out({1, a.numel()});
        for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i];
        return out;
    }
    if (a.rank() != 2) {
        throw ShapeError("transpose: expected rank-1 or rank-2, got " + a.shape_str());
    }
    Tensor out({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor cholesky(const Tensor& a) {
    require_square(a, "cholesky");
    const std::size_t n = a.rows();
    Tensor l = Tensor::zeros({n, n});
    for (std::size_t j = 0; j < n; ++j) {
        double d = a.at(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l.at(j, k) * l.at(j, k);
        if (!(d > 0.0)) {
            throw NotPositiveDefiniteError(
                "cholesky: pivot " + std::to_string(j) + " is " + std::to_string(d),
                j);
        }
        const double ljj = std::sqrt(d);
        l.at(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = 0.5 * (a.at(i, j) + a.at(j, i));
            for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
            l.at(i, j) = s / ljj;
        }
    }
    return l;
}

Tensor solve_triangular(const Tensor& l, const Tensor& b, bool transposed) {
    require_square(l, "solve_triangular");
    const std::size_t n = l.rows();
    for (std::size_t i = 0; i < n; ++i) {
        if (l.at(i, i) == 0.0) {
            throw SingularMatrixError("solve_triangular: zero diagonal at index " +
                                      std::to_string(i));
        }
    }
    const bool vector_rhs = (b.rank() == 1);
    if ((vector_rhs ? b.numel() : b.rows()) != n) {
        throw ShapeError("solve_triangular: size mismatch, l " + l.shape_str() +
                         " vs b " + b.shape_str());
    }
    const std::size_t k = vector_rhs ? 1 : b.cols();
    Tensor x = b;
    double* xd = x.data();
    const auto idx = [k](std::size_t i, std::size_t c) { return i * k + c; };
    if (!transposed) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < k; ++c) {
                double s = xd[idx(i, c)];
                for (std::size_t j = 0; j < i; ++j) s -= l.at(i, j) * xd[idx(j, c)];
                xd[idx(i, c)] = s / l.at(i, i);
            }
        }
    } else {
        for (std::size_t ii = n; ii > 0; --ii) {
            const std::size_t i = ii - 1;
            for (std::size_t c = 0; c < k; ++c) {
                double s = xd[idx(i, c)];
                for (std::size_t j = i + 1; j < n; ++j) s -= l.at(j, i) * xd[idx(j, c)];
                xd[idx(i, c)] = s / l.at(i, i);
            }
        }
    }
    return x;
}

JitteredFactor cholesky_with_jitter(const Tensor& a) {
    require_square(a, "cholesky_with_jitter");
    const std::size_t n = a.rows();
    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) tr += a.at(i, i);
    const double base = 1e-6 * (tr / static_cast<double>(n));
    double jitter = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
        Tensor work = a;
        if (jitter > 0.0) {
            for (std::size_t i = 0; i < n; ++i) work.at(i, i) += jitter;
        }
        try {
            JitteredFactor out{cholesky(work), jitter, attempt + 1};
            return out;
        } catch (const NotPositiveDefiniteError&) {
            jitter = (jitter == 0.0) ? base : jitter * 10.0;
            if (jitter <= 0.0) jitter = 1e-12;
        }
    }
    throw ConditioningError("cholesky_with_jitter: factorization failed at jitter " +
                                std::to_string(jitter / 10.0),
                            jitter / 10.0);
}

}  // namespace sip::linalg
