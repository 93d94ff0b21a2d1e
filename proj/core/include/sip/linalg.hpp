#pragma once

#include "sip/tensor.hpp"

namespace sip::linalg {

// Dense kernels on plain tensors. The autodiff layer wraps these; they are
// also usable directly where no gradient is needed.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Lower-triangular factor L with L L^T = a. The input is read symmetrically
// (both triangles averaged). Throws NotPositiveDefiniteError carrying the
// failing pivot index.
Tensor cholesky(const Tensor& a);

// Solve l x = b for lower-triangular l, or l^T x = b when transposed.
// b may be a vector [n] or a matrix [n, k].
Tensor solve_triangular(const Tensor& l, const Tensor& b, bool transposed);

struct JitteredFactor {
    Tensor l;
    double jitter = 0.0;
    int attempts = 1;
};

// Factor a, retrying with escalating diagonal jitter when the bare attempt
// fails: base 1e-6 * (trace / n), then x10, up to three jittered retries.
// Throws ConditioningError naming the final jitter if all attempts fail.
JitteredFactor cholesky_with_jitter(const Tensor& a);

}  // namespace sip::linalg
