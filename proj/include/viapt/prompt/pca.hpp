#pragma once

#include <cstddef>

#include "viapt/numerics/autodiff.hpp"

namespace viapt {

/// Everything that defines a projection of one prompt block. These are
/// constants for differentiation; a forward pass can record them and a later
/// pass can replay them so finite differences see the same surrogate.
template <typename T>
struct PcaStats {
  Tensor<T> mean;   // d
  Tensor<T> basis;  // d x m, orthonormal columns
  /// m entries, 1 for directions inside the numerical rank and 0 beyond it.
  /// Empty when every column is kept.
  Tensor<T> mask;
  std::size_t rank = 0;
  double retained_variance = 0;  // sum of top-m squared singular values / p
  double total_variance = 0;     // |Z - mean|_F^2 / p
};

template <typename T>
struct PcaProjection {
  PcaStats<T> stats;
  Var<T> coords;  // p x m = (Z - mean) * basis

  double retained_fraction() const {
    return stats.total_variance > 0 ? stats.retained_variance / stats.total_variance : 1.0;
  }
};

/// Centre the p rows of Z and take the top-m right singular vectors.
/// Directions past the numerical rank are completed to an orthonormal set
/// and their coordinates masked to exact zeros. Throws ConfigError if m > d.
template <typename T>
PcaStats<T> fit_pca(const Tensor<T>& Z, std::size_t m);

/// Centred mean with a caller-supplied basis (random projection ablation).
template <typename T>
PcaStats<T> fixed_basis_stats(const Tensor<T>& Z, const Tensor<T>& basis);

template <typename T>
PcaProjection<T> apply_projection(const Var<T>& Z, const PcaStats<T>& stats);

template <typename T>
PcaProjection<T> pca_project(const Var<T>& Z, std::size_t m);

/// [coords | p_new] along the feature axis; either side may be zero-width.
template <typename T>
Var<T> assemble_combined(const Var<T>& coords, const Var<T>& p_new);

}  // namespace viapt
