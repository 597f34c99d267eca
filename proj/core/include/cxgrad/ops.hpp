#pragma once

#include <vector>

#include "cxgrad/graph.hpp"
#include "cxgrad/tensor.hpp"

namespace cxgrad::ops {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);

// Scalar constants.
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

// Elementwise nonlinearities.
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);

// Shape manipulation.
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // 2-D
/// Broadcasts size-1 dims of x up to `shape` (same rank).
Tensor expand(const Tensor& x, Shape shape);
/// Sums over `axes`, keeping them as size-1 dims.
Tensor sum_axes(const Tensor& x, const std::vector<int>& axes);
Tensor sum_all(const Tensor& x);  // -> scalar (shape {1})

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k)x(k,n)

// Convolution, NCHW, 3x3 kernel, stride 1, padding 1.
Tensor conv2d(const Tensor& x, const Tensor& w);
/// Weight gradient of conv2d: correlates x (N,C,H,W) with gy (N,O,H,W) -> (O,C,3,3).
Tensor conv2d_dw(const Tensor& x, const Tensor& gy);
/// Swaps in/out channels and rotates kernels 180 degrees: (O,C,3,3) -> (C,O,3,3).
Tensor kernel_flip(const Tensor& w);

// 2x2 max pooling, stride 2; ties resolved to the first (row-major) element.
Tensor maxpool2d(const Tensor& x);

// Reductions and statistics (composites of the primitives above).
Tensor mean_axes(const Tensor& x, const std::vector<int>& axes);
Tensor mean_all(const Tensor& x);
Tensor variance_axes(const Tensor& x, const std::vector<int>& axes);  // population
Tensor variance_all(const Tensor& x);
Tensor l2_norm(const Tensor& x);  // -> scalar

/// Batch normalization with batch statistics. x is (N,F) with per-feature
/// stats over the batch, or (N,C,H,W) with per-channel stats over (N,H,W).
/// gamma/beta have length F (resp. C). Requires N >= 2.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// Row-wise softmax of (B,N) logits.
Tensor softmax(const Tensor& logits);
/// Mean cross-entropy of (B,N) logits against integer labels in [0,N).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Element i of a 1-D tensor, as a scalar tensor (differentiable).
Tensor slice_scalar(const Tensor& x, int i);

}  // namespace cxgrad::ops
