#pragma once

// Independent reference computations for the unit and acceptance tests.
// Everything here is written with plain loops over doubles and shares no
// code with the library beyond the Tensor container and parameter structs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "viapt/backbone/vit.hpp"
#include "viapt/numerics/rng.hpp"
#include "viapt/prompt/viapt_forward.hpp"

namespace viapt::oracle {

using Mat = std::vector<std::vector<double>>;

inline Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double bound = 1.0) {
  Rng r(seed);
  return r.sample_uniform<double>(shape, bound);
}

inline Mat to_mat(const Tensor<double>& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

inline Tensor<double> from_mat(const Mat& m, std::size_t cols) {
  Tensor<double> t({m.size(), cols});
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) t(i, j) = m[i][j];
  return t;
}

inline Tensor<double> matmul(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

/// x[C,H,W] * w[O,C,kh,kw] + b, zero padding.
inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w,
                             const Tensor<double>& b, std::size_t stride, std::size_t pad) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor<double> y({O, Ho, Wo});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        double s = b[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W))
                continue;
              s += x[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)] *
                   w[((o * C + c) * kh + ky) * kw + kx];
            }
        y[(o * Ho + oy) * Wo + ox] = s;
      }
  return y;
}

/// Classical cyclic Jacobi on a symmetric matrix. Eigenvalues sorted
/// descending; eigenvectors are the columns of `vectors`.
struct Eigen {
  std::vector<double> values;
  Mat vectors;
};

inline Eigen jacobi_eigen(Mat a) {
  const std::size_t n = a.size();
  Mat v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a[x][x] > a[y][y]; });
  Eigen e;
  e.vectors.assign(n, std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r) {
    e.values.push_back(a[order[r]][order[r]]);
    for (std::size_t k = 0; k < n; ++k) e.vectors[k][r] = v[k][order[r]];
  }
  return e;
}

/// Covariance-style Gram matrix C^T C of the row-centred matrix.
inline Mat centred_gram(const Tensor<double>& Z, std::vector<double>* mean_out = nullptr) {
  const std::size_t p = Z.rows(), d = Z.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += Z(i, j) / static_cast<double>(p);
  Mat g(d, std::vector<double>(d, 0.0));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b)
      for (std::size_t i = 0; i < p; ++i) g[a][b] += (Z(i, a) - mean[a]) * (Z(i, b) - mean[b]);
  if (mean_out) *mean_out = mean;
  return g;
}

/// Central differences of a scalar function over every element of x.
inline Tensor<double> numeric_gradient(const std::function<double(const Tensor<double>&)>& f,
                                       Tensor<double> x, double h = 1e-5) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// max |a - b| / max(|a|_inf, |b|_inf, tiny)
inline double relative_error(const Tensor<double>& a, const Tensor<double>& b) {
  double diff = 0, scale = 1e-300;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

// ---- monolithic forward -------------------------------------------------

inline Mat layer_norm(const Mat& x, const Tensor<double>& g, const Tensor<double>& b) {
  Mat y = x;
  for (auto& row : y) {
    double mu = 0, var = 0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(row.size());
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(row.size());
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mu) * inv * g[j] + b[j];
  }
  return y;
}

inline Mat affine(const Mat& x, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t out = w.cols();
  Mat y(x.size(), std::vector<double>(out));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < out; ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < x[i].size(); ++k) s += x[i][k] * w(k, j);
      y[i][j] = s;
    }
  return y;
}

inline double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

/// One pre-norm transformer block over the full sequence.
inline Mat block(const Mat& x, LayerParams<double>& lp, const ViTConfig& cfg) {
  const std::size_t n = x.size(), d = cfg.dim, hd = cfg.head_dim();
  const Mat qkv = affine(layer_norm(x, lp.ln1_gamma.value, lp.ln1_beta.value), lp.w_qkv.value,
                         lp.b_qkv.value);
  Mat heads(n, std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> score(n);
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < hd; ++c) s += qkv[i][h * hd + c] * qkv[j][d + h * hd + c];
        score[j] = s / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, score[j]);
      }
      double z = 0;
      for (auto& s : score) z += (s = std::exp(s - mx));
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < hd; ++c)
          heads[i][h * hd + c] += score[j] / z * qkv[j][2 * d + h * hd + c];
    }
  }
  Mat y = x;
  const Mat attn = affine(heads, lp.w_out.value, lp.b_out.value);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i][j] += attn[i][j];
  Mat hidden = affine(layer_norm(y, lp.ln2_gamma.value, lp.ln2_beta.value), lp.w_fc1.value,
                      lp.b_fc1.value);
  for (auto& row : hidden)
    for (auto& v : row) v = gelu(v);
  const Mat mlp = affine(hidden, lp.w_fc2.value, lp.b_fc2.value);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i][j] += mlp[i][j];
  return y;
}

inline Mat embed(const Tensor<double>& image, Backbone<double>& bb) {
  const ViTConfig& c = bb.config;
  const std::size_t G = c.grid(), P = c.patch, S = c.image_side, d = c.dim;
  Mat e(G * G, std::vector<double>(d));
  for (std::size_t gy = 0; gy < G; ++gy)
    for (std::size_t gx = 0; gx < G; ++gx) {
      const std::size_t t = gy * G + gx;
      for (std::size_t j = 0; j < d; ++j) {
        double s = bb.patch_b.value[j];
        std::size_t k = 0;
        for (std::size_t ch = 0; ch < c.channels; ++ch)
          for (std::size_t y = 0; y < P; ++y)
            for (std::size_t x = 0; x < P; ++x, ++k)
              s += image[(ch * S + gy * P + y) * S + gx * P + x] * bb.patch_w.value(k, j);
        const double freq = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / static_cast<double>(d));
        s += (j % 2 == 0) ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
        e[t][j] = s;
      }
    }
  return e;
}

inline std::vector<double> logits_from_cls(const std::vector<double>& cls, Backbone<double>& bb) {
  const Mat n = layer_norm(Mat{cls}, bb.norm_gamma.value, bb.norm_beta.value);
  return affine(n, bb.head_w.value, bb.head_b.value)[0];
}

/// Top-m principal coordinates of Z's rows, basis from the Jacobi
/// eigen-oracle with the largest-magnitude entry of each direction positive.
inline Mat pca_coords(const Mat& Z, std::size_t m) {
  const std::size_t p = Z.size(), d = Z[0].size();
  const Tensor<double> zt = from_mat(Z, d);
  std::vector<double> mean;
  const Eigen e = jacobi_eigen(centred_gram(zt, &mean));
  Mat out(p, std::vector<double>(m, 0.0));
  for (std::size_t r = 0; r < m; ++r) {
    std::size_t arg = 0;
    for (std::size_t k = 1; k < d; ++k)
      if (std::abs(e.vectors[k][r]) > std::abs(e.vectors[arg][r])) arg = k;
    const double sign = e.vectors[arg][r] < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < p; ++i) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += (Z[i][k] - mean[k]) * sign * e.vectors[k][r];
      out[i][r] = s;
    }
  }
  return out;
}

/// Generator mean and log-variance recomputed with the nested-loop conv.
inline std::pair<std::vector<double>, std::vector<double>> generator_stats(const Mat& e0,
                                                                           Generator<double>& g) {
  const std::size_t k = e0.size(), d = g.dim, s = static_cast<std::size_t>(std::lround(std::sqrt(k)));
  Tensor<double> grid({d, s, s});
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t t = 0; t < k; ++t) grid[c * k + t] = e0[t][c];
  Tensor<double> h1 = conv2d(grid, g.conv1_w.value, g.conv1_b.value, 1, 1);
  for (auto& v : h1.data()) v = gelu(v);
  const Tensor<double> h2 = conv2d(h1, g.conv2_w.value, g.conv2_b.value, 1, 1);
  std::vector<double> pooled(d / 2, 0.0);
  for (std::size_t c = 0; c < d / 2; ++c)
    for (std::size_t t = 0; t < k; ++t) pooled[c] += h2[c * k + t] / static_cast<double>(k);
  const Mat pm{pooled};
  return {affine(pm, g.mu_w.value, g.mu_b.value)[0],
          affine(pm, g.logvar_w.value, g.logvar_b.value)[0]};
}

/// Whole ViaPT forward (probabilistic generator, PCA propagation or the
/// endpoints) materializing the full sequence at every layer.
inline std::vector<double> viapt_logits(const Tensor<double>& image, PromptParams<double>& pp,
                                        Backbone<double>& bb, const Tensor<double>* noise) {
  const ViTConfig& c = bb.config;
  const std::size_t d = c.dim, p = pp.cfg.p, lambda = pp.cfg.lambda, m = pp.cfg.m;
  const Mat e0 = embed(image, bb);
  Mat prompts;
  if (lambda > 0) {
    auto [mu, lv] = generator_stats(e0, *pp.gen);
    for (std::size_t i = 0; i < lambda; ++i) {
      std::vector<double> row(d);
      for (std::size_t j = 0; j < d; ++j) row[j] = (*noise)(i, j) * std::exp(0.5 * lv[j]) + mu[j];
      prompts.push_back(row);
    }
  }
  if (pp.dom) {
    const Mat dom = to_mat(pp.dom->value);
    prompts.insert(prompts.end(), dom.begin(), dom.end());
  }
  Mat seq{bb.cls_token.value.storage()};
  seq.insert(seq.end(), prompts.begin(), prompts.end());
  seq.insert(seq.end(), e0.begin(), e0.end());
  for (std::size_t layer = 0; layer < c.layers; ++layer) {
    if (layer > 0 && p > 0 && m < d) {
      Mat z(seq.begin() + 1, seq.begin() + 1 + static_cast<long>(p));
      Mat coords = m > 0 ? pca_coords(z, m) : Mat(p, std::vector<double>());
      const Mat fresh = to_mat(pp.fresh[layer - 1].value);
      for (std::size_t i = 0; i < p; ++i) {
        std::vector<double> row = coords[i];
        row.insert(row.end(), fresh[i].begin(), fresh[i].end());
        seq[1 + i] = row;
      }
    }
    seq = block(seq, bb.layers[layer], c);
  }
  return logits_from_cls(seq[0], bb);
}

}  // namespace viapt::oracle
