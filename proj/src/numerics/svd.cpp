#include "viapt/numerics/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace viapt {
namespace {

// Column-major scratch matrix.
struct Columns {
  std::size_t n = 0, k = 0;
  std::vector<double> a;
  double* col(std::size_t j) { return a.data() + j * n; }
  const double* col(std::size_t j) const { return a.data() + j * n; }
};

double dotn(const double* x, const double* y, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void rotate(double* x, double* y, std::size_t n, double c, double s) {
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i], yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

}  // namespace

void complete_orthonormal_columns(Tensor<double>& Q, std::size_t valid) {
  const std::size_t n = Q.rows(), k = Q.cols();
  std::size_t next_e = 0;
  std::vector<double> v(n);
  for (std::size_t j = valid; j < k; ++j) {
    for (;;) {
      if (next_e >= n) throw NumericError("cannot complete orthonormal basis: too many columns");
      std::fill(v.begin(), v.end(), 0.0);
      v[next_e++] = 1.0;
      // Two passes of modified Gram-Schmidt for stability.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t q = 0; q < j; ++q) {
          double proj = 0;
          for (std::size_t i = 0; i < n; ++i) proj += Q(i, q) * v[i];
          for (std::size_t i = 0; i < n; ++i) v[i] -= proj * Q(i, q);
        }
      }
      const double norm = std::sqrt(dotn(v.data(), v.data(), n));
      if (norm > 1e-6) {
        for (std::size_t i = 0; i < n; ++i) Q(i, j) = v[i] / norm;
        break;
      }
    }
  }
}

Tensor<double> random_orthonormal(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw ConfigError("random_orthonormal: more columns than rows");
  Tensor<double> Q = rng.sample_gaussian<double>({n, k});
  for (std::size_t j = 0; j < k; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t q = 0; q < j; ++q) {
        double proj = 0;
        for (std::size_t i = 0; i < n; ++i) proj += Q(i, q) * Q(i, j);
        for (std::size_t i = 0; i < n; ++i) Q(i, j) -= proj * Q(i, q);
      }
    }
    double norm = 0;
    for (std::size_t i = 0; i < n; ++i) norm += Q(i, j) * Q(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw NumericError("random_orthonormal: degenerate Gaussian draw");
    for (std::size_t i = 0; i < n; ++i) Q(i, j) /= norm;
  }
  return Q;
}

SvdResult svd_topk(const Tensor<double>& M, std::size_t m) {
  const std::size_t p = M.rows(), d = M.cols();
  if (m > std::min(p, d)) {
    throw ConfigError("svd_topk: m = " + std::to_string(m) + " exceeds min(p, d) = " +
                      std::to_string(std::min(p, d)));
  }
  if (!M.all_finite()) throw NumericError("svd_topk: non-finite input");

  // Work on B = M (p >= d) or B = M^T (p < d); B has n rows and k <= n columns.
  const bool transposed = p < d;
  Columns B;
  B.n = transposed ? d : p;
  B.k = transposed ? p : d;
  B.a.resize(B.n * B.k);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (transposed)
        B.a[i * B.n + j] = M(i, j);
      else
        B.a[j * B.n + i] = M(i, j);
    }
  Columns J;
  J.n = J.k = B.k;
  J.a.assign(B.k * B.k, 0.0);
  for (std::size_t j = 0; j < B.k; ++j) J.a[j * B.k + j] = 1.0;

  const std::size_t max_sweeps = 100 * std::max<std::size_t>(1, std::min(p, d));
  constexpr double tol = 1e-15;
  std::size_t sweep = 0;
  bool converged = B.k < 2;
  while (!converged) {
    if (sweep >= max_sweeps) {
      throw NumericError("svd_topk: one-sided Jacobi did not converge after " +
                         std::to_string(sweep) + " sweeps");
    }
    ++sweep;
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < B.k; ++i) {
      for (std::size_t j = i + 1; j < B.k; ++j) {
        const double alpha = dotn(B.col(i), B.col(i), B.n);
        const double beta = dotn(B.col(j), B.col(j), B.n);
        const double gamma = dotn(B.col(i), B.col(j), B.n);
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(B.col(i), B.col(j), B.n, c, s);
        rotate(J.col(i), J.col(j), J.n, c, s);
        rotated = true;
      }
    }
    converged = !rotated;
  }

  std::vector<double> sigma(B.k);
  for (std::size_t j = 0; j < B.k; ++j) sigma[j] = std::sqrt(dotn(B.col(j), B.col(j), B.n));
  std::vector<std::size_t> order(B.k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  const double smax = B.k ? sigma[order[0]] : 0.0;
  const double zero_tol = smax * 1e-12;

  // "Left" = normalized columns of B (n-dim); "right" = columns of J (k-dim).
  Tensor<double> left({B.n, B.k}), right({B.k, B.k});
  Tensor<double> S(Shape{B.k});
  std::size_t rank = 0;
  for (std::size_t r = 0; r < B.k; ++r) {
    const std::size_t j = order[r];
    for (std::size_t i = 0; i < B.k; ++i) right(i, r) = J.col(j)[i];
    if (sigma[j] > zero_tol && sigma[j] > 0.0) {
      S[r] = sigma[j];
      for (std::size_t i = 0; i < B.n; ++i) left(i, r) = B.col(j)[i] / sigma[j];
      ++rank;
    } else {
      S[r] = 0.0;
    }
  }
  complete_orthonormal_columns(left, rank);

  // Map back: with B = M, V = right and U = left; with B = M^T the roles swap.
  const Tensor<double>& Vfull = transposed ? left : right;
  const Tensor<double>& Ufull = transposed ? right : left;

  SvdResult out;
  out.sweeps = sweep;
  out.U = Tensor<double>({p, m});
  out.V = Tensor<double>({d, m});
  out.S = Tensor<double>(Shape{m});
  for (std::size_t r = 0; r < m; ++r) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < d; ++i)
      if (std::abs(Vfull(i, r)) > std::abs(Vfull(arg, r))) arg = i;
    const double sign = Vfull(arg, r) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < d; ++i) out.V(i, r) = sign * Vfull(i, r);
    for (std::size_t i = 0; i < p; ++i) out.U(i, r) = sign * Ufull(i, r);
    out.S[r] = S[r];
  }
  return out;
}

}  // namespace viapt
