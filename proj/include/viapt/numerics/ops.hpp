#pragma once

#include <cstddef>
#include <vector>

#include "viapt/numerics/autodiff.hpp"

// Differentiable tensor operations recorded on a Tape. Matrix ops take
// rank-2 operands; "row" broadcasts apply a rank-1 vector to every row.
// All of them throw DimensionError on shape mismatch.

namespace viapt::ops {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);
template <typename T>
Var<T> add_scalar(const Var<T>& a, T value);
template <typename T>
Var<T> exp(const Var<T>& a);
template <typename T>
Var<T> log(const Var<T>& a);

template <typename T>
Var<T> add_row(const Var<T>& x, const Var<T>& row);
template <typename T>
Var<T> sub_row(const Var<T>& x, const Var<T>& row);
template <typename T>
Var<T> mul_row(const Var<T>& x, const Var<T>& row);

/// a[r x s] * b[s x t]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// a[r x s] * b[t x s]^T
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> transpose(const Var<T>& a);

/// x[n x in] * w[in x out] + b[out]. A rank-1 x is treated as a single row
/// and the result is rank-1.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

/// Max-subtracted softmax over the last axis (rank 1 or 2).
template <typename T>
Var<T> softmax(const Var<T>& x);
template <typename T>
Var<T> log_softmax(const Var<T>& x);

/// Per-row normalization with learnable scale/shift; eps sits inside the
/// square root so constant rows map to zero before the affine part.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

/// Exact (erf) GELU.
template <typename T>
Var<T> gelu(const Var<T>& x);

/// x[C x H x W], w[O x C x kh x kw], b[O] -> [O x H' x W'].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride,
              std::size_t padding);

template <typename T>
Var<T> sum(const Var<T>& x);
template <typename T>
Var<T> mean(const Var<T>& x);
/// Reduce a matrix over `axis` (0: down the rows, 1: across columns).
template <typename T>
Var<T> sum_axis(const Var<T>& x, std::size_t axis);
template <typename T>
Var<T> mean_axis(const Var<T>& x, std::size_t axis);

/// Concatenate matrices along axis 0 (rows) or 1 (columns). Empty blocks are
/// allowed as long as the other extent agrees.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Scalar element at flat index.
template <typename T>
Var<T> pick(const Var<T>& x, std::size_t index);

}  // namespace viapt::ops
