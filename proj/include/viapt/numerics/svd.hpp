#pragma once

#include <cstddef>

#include "viapt/numerics/rng.hpp"
#include "viapt/numerics/tensor.hpp"

namespace viapt {

/// Truncated SVD factors: M ~= U * diag(S) * V^T.
struct SvdResult {
  Tensor<double> U;  // p x m
  Tensor<double> S;  // m, non-negative, non-increasing
  Tensor<double> V;  // d x m, orthonormal columns
  std::size_t sweeps = 0;
};

/// Top-m singular triplets of a p x d matrix by one-sided (Hestenes) Jacobi,
/// run on whichever orientation has fewer columns. Singular values below
/// 1e-12 * S[0] are reported as exact zeros and their vectors are replaced by
/// a deterministic orthonormal completion. Each V column is signed so that
/// its largest-magnitude entry (first on ties) is positive.
///
/// Throws ConfigError unless m <= min(p, d), NumericError on non-finite input
/// or when 100 * min(p, d) sweeps do not converge.
SvdResult svd_topk(const Tensor<double>& M, std::size_t m);

/// Extend the first `valid` orthonormal columns of Q (n x k) to a full set of
/// k orthonormal columns using Gram-Schmidt against e_0, e_1, ...
void complete_orthonormal_columns(Tensor<double>& Q, std::size_t valid);

/// Orthonormalized Gaussian n x k basis (modified Gram-Schmidt QR).
Tensor<double> random_orthonormal(std::size_t n, std::size_t k, Rng& rng);

}  // namespace viapt
