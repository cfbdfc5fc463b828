#include "viapt/prompt/pca.hpp"

#include <algorithm>

#include "viapt/numerics/ops.hpp"
#include "viapt/numerics/svd.hpp"

namespace viapt {
namespace {

Tensor<double> centered(const Tensor<double>& Z, Tensor<double>& mean) {
  const std::size_t p = Z.rows(), d = Z.cols();
  mean = Tensor<double>(Shape{d});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += Z(i, j);
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(p);
  Tensor<double> C({p, d});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < d; ++j) C(i, j) = Z(i, j) - mean[j];
  return C;
}

double frobenius2(const Tensor<double>& C) {
  double s = 0;
  for (double v : C.data()) s += v * v;
  return s;
}

}  // namespace

template <typename T>
PcaStats<T> fit_pca(const Tensor<T>& Z, std::size_t m) {
  const std::size_t p = Z.rows(), d = Z.cols();
  if (m > d) throw ConfigError("pca: m = " + std::to_string(m) + " exceeds d = " + std::to_string(d));
  if (p == 0) throw DimensionError("pca: empty prompt block");
  Tensor<double> mean;
  const Tensor<double> C = centered(Z.template cast<double>(), mean);

  const std::size_t r = std::min(m, std::min(p, d));
  const SvdResult svd = svd_topk(C, r);
  Tensor<double> basis({d, m});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < r; ++j) basis(i, j) = svd.V(i, j);
  if (m > r) complete_orthonormal_columns(basis, r);

  PcaStats<T> st;
  st.rank = 0;
  for (std::size_t j = 0; j < r; ++j) {
    if (svd.S[j] > 0.0) ++st.rank;
    st.retained_variance += svd.S[j] * svd.S[j];
  }
  st.retained_variance /= static_cast<double>(p);
  st.total_variance = frobenius2(C) / static_cast<double>(p);
  st.mean = mean.cast<T>();
  st.basis = basis.cast<T>();
  if (st.rank < m) {
    st.mask = Tensor<T>(Shape{m});
    for (std::size_t j = 0; j < st.rank; ++j) st.mask[j] = T(1);
  }
  return st;
}

template <typename T>
PcaStats<T> fixed_basis_stats(const Tensor<T>& Z, const Tensor<T>& basis) {
  if (basis.rank() != 2 || basis.rows() != Z.cols())
    throw DimensionError("projection basis rows must equal the token width");
  Tensor<double> mean;
  const Tensor<double> C = centered(Z.template cast<double>(), mean);
  PcaStats<T> st;
  st.mean = mean.cast<T>();
  st.basis = basis;
  st.rank = basis.cols();
  st.total_variance = frobenius2(C) / static_cast<double>(Z.rows());
  // Variance captured by the fixed directions.
  const Tensor<double> B = basis.template cast<double>();
  for (std::size_t j = 0; j < B.cols(); ++j)
    for (std::size_t i = 0; i < C.rows(); ++i) {
      double c = 0;
      for (std::size_t k = 0; k < C.cols(); ++k) c += C(i, k) * B(k, j);
      st.retained_variance += c * c;
    }
  st.retained_variance /= static_cast<double>(Z.rows());
  return st;
}

template <typename T>
PcaProjection<T> apply_projection(const Var<T>& Z, const PcaStats<T>& stats) {
  auto& tape = Z.tape();
  PcaProjection<T> out;
  out.stats = stats;
  auto c = ops::sub_row(Z, tape.constant(stats.mean));
  out.coords = ops::matmul(c, tape.constant(stats.basis));
  if (!stats.mask.empty()) out.coords = ops::mul_row(out.coords, tape.constant(stats.mask));
  return out;
}

template <typename T>
PcaProjection<T> pca_project(const Var<T>& Z, std::size_t m) {
  return apply_projection(Z, fit_pca(Z.value(), m));
}

template <typename T>
Var<T> assemble_combined(const Var<T>& coords, const Var<T>& p_new) {
  if (coords.value().rows() != p_new.value().rows()) {
    throw DimensionError("combined prompt: coordinate rows " + std::to_string(coords.value().rows()) +
                         " vs learnable rows " + std::to_string(p_new.value().rows()));
  }
  return ops::concat<T>({coords, p_new}, 1);
}

#define VIAPT_INSTANTIATE_PCA(T)                                                   \
  template struct PcaStats<T>;                                                     \
  template struct PcaProjection<T>;                                                \
  template PcaStats<T> fit_pca(const Tensor<T>&, std::size_t);                     \
  template PcaStats<T> fixed_basis_stats(const Tensor<T>&, const Tensor<T>&);      \
  template PcaProjection<T> apply_projection(const Var<T>&, const PcaStats<T>&);   \
  template PcaProjection<T> pca_project(const Var<T>&, std::size_t);               \
  template Var<T> assemble_combined(const Var<T>&, const Var<T>&);

VIAPT_INSTANTIATE_PCA(float)
VIAPT_INSTANTIATE_PCA(double)

}  // namespace viapt
