#pragma once

#include "nfp/rng.hpp"
#include "nfp/tensor.hpp"

namespace nfp {

// Forward kernels. All of them are pure, run sequentially with a fixed
// summation order, and throw instead of letting NaN/Inf escape.

// [m x k] times [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Row-wise exp-normalize with max subtraction.
Tensor softmax_rows(const Tensor& x);

// Per-row standardization followed by the gamma/beta affine map.
// gamma and beta are rank-1 of length x.cols().
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// tanh-approximation GELU, elementwise.
Tensor gelu(const Tensor& x);
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

// Inverted dropout: in training mode each entry is zeroed with probability p
// and survivors are scaled by 1/(1-p); in inference mode this is the
// identity. mask_out (if given) receives the 0/1 keep mask so the backward
// pass can replay the exact same drop pattern.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training,
               Tensor* mask_out = nullptr);

// Backward kernels (vector-Jacobian products).

// Given dC = dL/dC for C = A*B, accumulates nothing: returns dA and dB.
void matmul_grad(const Tensor& a, const Tensor& b, const Tensor& dc,
                 Tensor& da, Tensor& db);

// y = softmax_rows(x), dy upstream -> dx.
Tensor softmax_grad(const Tensor& y, const Tensor& dy);

// x is the layer_norm input; fills dx, dgamma, dbeta.
void layer_norm_grad(const Tensor& x, const Tensor& gamma, double eps,
                     const Tensor& dy, Tensor& dx, Tensor& dgamma,
                     Tensor& dbeta);

// x is the pre-activation input.
Tensor gelu_grad(const Tensor& x, const Tensor& dy);

// mask is the keep mask recorded by dropout() in training mode.
Tensor dropout_grad(const Tensor& dy, const Tensor& mask, double p);

}  // namespace nfp
