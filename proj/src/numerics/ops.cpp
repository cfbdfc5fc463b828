#include "viapt/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "viapt/numerics/kernels.hpp"

namespace viapt::ops {
namespace {

template <typename T>
const kernels::KernelTable<T>& K() {
  return kernels::active<T>();
}

template <typename T>
void accumulate(Tensor<T>* slot, const Tensor<T>& g) {
  if (slot) K<T>().add(g.size(), slot->ptr(), g.ptr(), slot->ptr());
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(a.shape()));
  }
}

template <typename T>
void require_row_broadcast(const char* op, const Tensor<T>& x, const Tensor<T>& row) {
  require_rank(op, x, 2);
  if (row.rank() != 1 || row.dim(0) != x.cols()) {
    throw DimensionError(std::string(op) + ": row vector " + shape_string(row.shape()) +
                         " does not broadcast over " + shape_string(x.shape()));
  }
}

// Rows/cols view of a rank-1 or rank-2 tensor for last-axis reductions.
template <typename T>
std::pair<std::size_t, std::size_t> last_axis_view(const char* op, const Tensor<T>& x) {
  if (x.rank() == 1) return {1, x.dim(0)};
  if (x.rank() == 2) return {x.rows(), x.cols()};
  throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_string(x.shape()));
}

template <typename T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t Ho, std::size_t Wo,
            T* cols) {
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        T* row = cols + ((c * kh + ky) * kw + kx) * Ho * Wo;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            const bool inside = iy >= 0 && iy < static_cast<long>(H) && ix >= 0 &&
                                ix < static_cast<long>(W);
            row[oy * Wo + ox] = inside ? x[(c * H + static_cast<std::size_t>(iy)) * W +
                                           static_cast<std::size_t>(ix)]
                                       : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
                std::size_t kw, std::size_t stride, std::size_t pad, std::size_t Ho,
                std::size_t Wo, T* x) {
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const T* row = cols + ((c * kh + ky) * kw + kx) * Ho * Wo;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            x[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)] +=
                row[oy * Wo + ox];
          }
        }
      }
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape("add", a.value(), b.value());
  Tensor<T> out(a.shape());
  K<T>().add(out.size(), a.value().ptr(), b.value().ptr(), out.ptr());
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b},
                         [ia, ib](Tape<T>& t, int, const Tensor<T>& g) {
                           accumulate(t.grad_slot(ia), g);
                           accumulate(t.grad_slot(ib), g);
                         });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape("sub", a.value(), b.value());
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int, const Tensor<T>& g) {
    accumulate(t.grad_slot(ia), g);
    if (auto* gb = t.grad_slot(ib))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape("mul", a.value(), b.value());
  Tensor<T> out(a.shape());
  K<T>().mul(out.size(), a.value().ptr(), b.value().ptr(), out.ptr());
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int, const Tensor<T>& g) {
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    if (auto* ga = t.grad_slot(ia))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    if (auto* gb = t.grad_slot(ib))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  K<T>().scale(out.size(), factor, out.ptr());
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, factor](Tape<T>& t, int, const Tensor<T>& g) {
    if (auto* ga = t.grad_slot(ia)) K<T>().axpy(g.size(), factor, g.ptr(), ga->ptr());
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T value) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v += value;
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, int, const Tensor<T>& g) {
    accumulate(t.grad_slot(ia), g);
  });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = std::exp(v);
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, int self, const Tensor<T>& g) {
    if (auto* ga = t.grad_slot(ia)) {
      const auto& y = t.value(self);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
    }
  });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v = std::log(v);
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, int, const Tensor<T>& g) {
    if (auto* ga = t.grad_slot(ia)) {
      const auto& x = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / x[i];
    }
  });
}

template <typename T>
Var<T> add_row(const Var<T>& x, const Var<T>& row) {
  require_row_broadcast("add_row", x.value(), row.value());
  const std::size_t n = x.value().rows(), d = x.value().cols();
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < n; ++r)
    K<T>().add(d, x.value().ptr() + r * d, row.value().ptr(), out.ptr() + r * d);
  const int ix = x.id(), ir = row.id();
  return x.tape().record(std::move(out), {x, row},
                         [ix, ir, n, d](Tape<T>& t, int, const Tensor<T>& g) {
                           accumulate(t.grad_slot(ix), g);
                           if (auto* gr = t.grad_slot(ir))
                             for (std::size_t r = 0; r < n; ++r)
                               K<T>().add(d, gr->ptr(), g.ptr() + r * d, gr->ptr());
                         });
}

template <typename T>
Var<T> sub_row(const Var<T>& x, const Var<T>& row) {
  require_row_broadcast("sub_row", x.value(), row.value());
  const std::size_t n = x.value().rows(), d = x.value().cols();
  const auto& xv = x.value();
  const auto& rv = row.value();
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out(r, c) = xv(r, c) - rv[c];
  const int ix = x.id(), ir = row.id();
  return x.tape().record(std::move(out), {x, row},
                         [ix, ir, n, d](Tape<T>& t, int, const Tensor<T>& g) {
                           accumulate(t.grad_slot(ix), g);
                           if (auto* gr = t.grad_slot(ir))
                             for (std::size_t r = 0; r < n; ++r)
                               for (std::size_t c = 0; c < d; ++c) (*gr)[c] -= g[r * d + c];
                         });
}

template <typename T>
Var<T> mul_row(const Var<T>& x, const Var<T>& row) {
  require_row_broadcast("mul_row", x.value(), row.value());
  const std::size_t n = x.value().rows(), d = x.value().cols();
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < n; ++r)
    K<T>().mul(d, x.value().ptr() + r * d, row.value().ptr(), out.ptr() + r * d);
  const int ix = x.id(), ir = row.id();
  return x.tape().record(std::move(out), {x, row},
                         [ix, ir, n, d](Tape<T>& t, int, const Tensor<T>& g) {
                           const auto& xv = t.value(ix);
                           const auto& rv = t.value(ir);
                           if (auto* gx = t.grad_slot(ix))
                             for (std::size_t r = 0; r < n; ++r)
                               for (std::size_t c = 0; c < d; ++c)
                                 (*gx)[r * d + c] += g[r * d + c] * rv[c];
                           if (auto* gr = t.grad_slot(ir))
                             for (std::size_t r = 0; r < n; ++r)
                               for (std::size_t c = 0; c < d; ++c)
                                 (*gr)[c] += g[r * d + c] * xv[r * d + c];
                         });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank("matmul", av, 2);
  require_rank("matmul", bv, 2);
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner extents differ " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  const std::size_t r = av.rows(), s = av.cols(), n = bv.cols();
  Tensor<T> out({r, n});
  K<T>().gemm_nn(r, n, s, av.ptr(), bv.ptr(), out.ptr(), false);
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b},
                         [ia, ib, r, s, n](Tape<T>& t, int, const Tensor<T>& g) {
                           if (auto* ga = t.grad_slot(ia))
                             K<T>().gemm_nt(r, s, n, g.ptr(), t.value(ib).ptr(), ga->ptr(), true);
                           if (auto* gb = t.grad_slot(ib))
                             K<T>().gemm_tn(s, n, r, t.value(ia).ptr(), g.ptr(), gb->ptr(), true);
                         });
}

template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank("matmul_nt", av, 2);
  require_rank("matmul_nt", bv, 2);
  if (av.cols() != bv.cols()) {
    throw DimensionError("matmul_nt: inner extents differ " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()) + "^T");
  }
  const std::size_t r = av.rows(), s = av.cols(), n = bv.rows();
  Tensor<T> out({r, n});
  K<T>().gemm_nt(r, n, s, av.ptr(), bv.ptr(), out.ptr(), false);
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b},
                         [ia, ib, r, s, n](Tape<T>& t, int, const Tensor<T>& g) {
                           if (auto* ga = t.grad_slot(ia))
                             K<T>().gemm_nn(r, s, n, g.ptr(), t.value(ib).ptr(), ga->ptr(), true);
                           if (auto* gb = t.grad_slot(ib))
                             K<T>().gemm_tn(n, s, r, g.ptr(), t.value(ia).ptr(), gb->ptr(), true);
                         });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  require_rank("transpose", a.value(), 2);
  Tensor<T> out = transpose2d(a.value());
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, int, const Tensor<T>& g) {
    if (auto* ga = t.grad_slot(ia)) accumulate(ga, transpose2d(g));
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  require_rank("linear", wv, 2);
  const bool vec = xv.rank() == 1;
  if (!vec) require_rank("linear", xv, 2);
  const std::size_t n = vec ? 1 : xv.rows();
  const std::size_t in = vec ? xv.dim(0) : xv.cols();
  const std::size_t outd = wv.cols();
  if (wv.rows() != in || bv.rank() != 1 || bv.dim(0) != outd) {
    throw DimensionError("linear: input " + shape_string(xv.shape()) + ", weight " +
                         shape_string(wv.shape()) + ", bias " + shape_string(bv.shape()));
  }
  Tensor<T> out(vec ? Shape{outd} : Shape{n, outd});
  for (std::size_t r = 0; r < n; ++r) std::copy_n(bv.ptr(), outd, out.ptr() + r * outd);
  K<T>().gemm_nn(n, outd, in, xv.ptr(), wv.ptr(), out.ptr(), true);
  const int ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape().record(
      std::move(out), {x, w, b}, [ix, iw, ib, n, in, outd](Tape<T>& t, int, const Tensor<T>& g) {
        if (auto* gx = t.grad_slot(ix))
          K<T>().gemm_nt(n, in, outd, g.ptr(), t.value(iw).ptr(), gx->ptr(), true);
        if (auto* gw = t.grad_slot(iw))
          K<T>().gemm_tn(in, outd, n, t.value(ix).ptr(), g.ptr(), gw->ptr(), true);
        if (auto* gb = t.grad_slot(ib))
          for (std::size_t r = 0; r < n; ++r) K<T>().add(outd, gb->ptr(), g.ptr() + r * outd, gb->ptr());
      });
}

template <typename T>
Var<T> softmax(const Var<T>& x) {
  const auto [n, d] = last_axis_view("softmax", x.value());
  Tensor<T> out = x.value();
  for (std::size_t r = 0; r < n; ++r) {
    T* row = out.ptr() + r * d;
    const T mx = *std::max_element(row, row + d);
    T s = 0;
    for (std::size_t c = 0; c < d; ++c) s += (row[c] = std::exp(row[c] - mx));
    const T inv = T(1) / s;
    for (std::size_t c = 0; c < d; ++c) row[c] *= inv;
  }
  const int ix = x.id();
  return x.tape().record(std::move(out), {x},
                         [ix, n = n, d = d](Tape<T>& t, int self, const Tensor<T>& g) {
                           auto* gx = t.grad_slot(ix);
                           if (!gx) return;
                           const auto& y = t.value(self);
                           for (std::size_t r = 0; r < n; ++r) {
                             const T* yr = y.ptr() + r * d;
                             const T* gr = g.ptr() + r * d;
                             const T s = K<T>().dot(d, yr, gr);
                             T* out = gx->ptr() + r * d;
                             for (std::size_t c = 0; c < d; ++c) out[c] += yr[c] * (gr[c] - s);
                           }
                         });
}

template <typename T>
Var<T> log_softmax(const Var<T>& x) {
  const auto [n, d] = last_axis_view("log_softmax", x.value());
  Tensor<T> out = x.value();
  for (std::size_t r = 0; r < n; ++r) {
    T* row = out.ptr() + r * d;
    const T mx = *std::max_element(row, row + d);
    T s = 0;
    for (std::size_t c = 0; c < d; ++c) s += std::exp(row[c] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t c = 0; c < d; ++c) row[c] -= lse;
  }
  const int ix = x.id();
  return x.tape().record(std::move(out), {x},
                         [ix, n = n, d = d](Tape<T>& t, int self, const Tensor<T>& g) {
                           auto* gx = t.grad_slot(ix);
                           if (!gx) return;
                           const auto& y = t.value(self);
                           for (std::size_t r = 0; r < n; ++r) {
                             const T* yr = y.ptr() + r * d;
                             const T* gr = g.ptr() + r * d;
                             T s = 0;
                             for (std::size_t c = 0; c < d; ++c) s += gr[c];
                             T* out = gx->ptr() + r * d;
                             for (std::size_t c = 0; c < d; ++c) out[c] += gr[c] - std::exp(yr[c]) * s;
                           }
                         });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const auto& xv = x.value();
  require_row_broadcast("layer_norm", xv, gamma.value());
  require_row_broadcast("layer_norm", xv, beta.value());
  const std::size_t n = xv.rows(), d = xv.cols();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor<T> out(xv.shape());
  std::vector<T> rstd(n), means(n);
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = xv.ptr() + r * d;
    T mu = 0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= T(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= T(d);
    const T rs = T(1) / std::sqrt(var + eps);
    means[r] = mu;
    rstd[r] = rs;
    for (std::size_t c = 0; c < d; ++c) out(r, c) = (row[c] - mu) * rs * gv[c] + bv[c];
  }
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, n, d, rstd = std::move(rstd), means = std::move(means)](
          Tape<T>& t, int, const Tensor<T>& g) {
        const auto& xv = t.value(ix);
        const auto& gv = t.value(ig);
        auto* gx = t.grad_slot(ix);
        auto* gg = t.grad_slot(ig);
        auto* gb = t.grad_slot(ib);
        std::vector<T> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < n; ++r) {
          const T* row = xv.ptr() + r * d;
          const T* gr = g.ptr() + r * d;
          for (std::size_t c = 0; c < d; ++c) xhat[c] = (row[c] - means[r]) * rstd[r];
          if (gg)
            for (std::size_t c = 0; c < d; ++c) (*gg)[c] += gr[c] * xhat[c];
          if (gb)
            for (std::size_t c = 0; c < d; ++c) (*gb)[c] += gr[c];
          if (gx) {
            T m1 = 0, m2 = 0;
            for (std::size_t c = 0; c < d; ++c) {
              dxhat[c] = gr[c] * gv[c];
              m1 += dxhat[c];
              m2 += dxhat[c] * xhat[c];
            }
            m1 /= T(d);
            m2 /= T(d);
            T* out = gx->ptr() + r * d;
            for (std::size_t c = 0; c < d; ++c) out[c] += rstd[r] * (dxhat[c] - m1 - xhat[c] * m2);
          }
        }
      });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  Tensor<T> out = x.value();
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (auto& v : out.data()) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  const int ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, inv_sqrt2](Tape<T>& t, int, const Tensor<T>& g) {
    auto* gx = t.grad_slot(ix);
    if (!gx) return;
    const auto& xv = t.value(ix);
    const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xv[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      (*gx)[i] += g[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride,
              std::size_t padding) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  require_rank("conv2d", xv, 3);
  require_rank("conv2d", wv, 4);
  const std::size_t C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const std::size_t O = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != C || b.value().rank() != 1 || b.value().dim(0) != O) {
    throw DimensionError("conv2d: input " + shape_string(xv.shape()) + ", kernel " +
                         shape_string(wv.shape()) + ", bias " + shape_string(b.value().shape()));
  }
  if (stride == 0 || H + 2 * padding < kh || W + 2 * padding < kw)
    throw DimensionError("conv2d: kernel larger than padded input");
  const std::size_t Ho = (H + 2 * padding - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - kw) / stride + 1;
  const std::size_t ckk = C * kh * kw, hw = Ho * Wo;
  std::vector<T> cols(ckk * hw);
  im2col(xv.ptr(), C, H, W, kh, kw, stride, padding, Ho, Wo, cols.data());
  Tensor<T> out({O, Ho, Wo});
  for (std::size_t o = 0; o < O; ++o) std::fill_n(out.ptr() + o * hw, hw, b.value()[o]);
  K<T>().gemm_nn(O, hw, ckk, wv.ptr(), cols.data(), out.ptr(), true);
  const int ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape().record(
      std::move(out), {x, w, b},
      [=](Tape<T>& t, int, const Tensor<T>& g) {
        auto* gx = t.grad_slot(ix);
        auto* gw = t.grad_slot(iw);
        if (gw) {
          std::vector<T> c(ckk * hw);
          im2col(t.value(ix).ptr(), C, H, W, kh, kw, stride, padding, Ho, Wo, c.data());
          K<T>().gemm_nt(O, ckk, hw, g.ptr(), c.data(), gw->ptr(), true);
        }
        if (gx) {
          std::vector<T> gcols(ckk * hw);
          K<T>().gemm_tn(ckk, hw, O, t.value(iw).ptr(), g.ptr(), gcols.data(), false);
          col2im_add(gcols.data(), C, H, W, kh, kw, stride, padding, Ho, Wo, gx->ptr());
        }
        if (auto* gb = t.grad_slot(ib))
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t i = 0; i < hw; ++i) (*gb)[o] += g[o * hw + i];
      });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T s = 0;
  for (T v : x.value().data()) s += v;
  const int ix = x.id();
  return x.tape().record(Tensor<T>::scalar(s), {x}, [ix](Tape<T>& t, int, const Tensor<T>& g) {
    if (auto* gx = t.grad_slot(ix))
      for (auto& v : gx->data()) v += g[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), T(1) / T(n));
}

template <typename T>
Var<T> sum_axis(const Var<T>& x, std::size_t axis) {
  const auto& xv = x.value();
  require_rank("sum_axis", xv, 2);
  if (axis > 1) throw DimensionError("sum_axis: axis must be 0 or 1");
  const std::size_t n = xv.rows(), d = xv.cols();
  Tensor<T> out(Shape{axis == 0 ? d : n});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[axis == 0 ? c : r] += xv(r, c);
  const int ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, n, d, axis](Tape<T>& t, int, const Tensor<T>& g) {
    if (auto* gx = t.grad_slot(ix))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) (*gx)[r * d + c] += g[axis == 0 ? c : r];
  });
}

template <typename T>
Var<T> mean_axis(const Var<T>& x, std::size_t axis) {
  require_rank("mean_axis", x.value(), 2);
  const std::size_t n = axis == 0 ? x.value().rows() : x.value().cols();
  if (n == 0) throw DimensionError("mean_axis over an empty axis");
  return scale(sum_axis(x, axis), T(1) / T(n));
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank("concat", p.value(), 2);
  const std::size_t fixed = parts[0].value().dim(1 - axis);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().dim(1 - axis) != fixed) {
      throw DimensionError("concat: block " + shape_string(p.value().shape()) +
                           " disagrees with " + shape_string(parts[0].value().shape()));
    }
    total += p.value().dim(axis);
  }
  const std::size_t rows = axis == 0 ? total : fixed;
  const std::size_t cols = axis == 0 ? fixed : total;
  Tensor<T> out({rows, cols});
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    const std::size_t w = v.dim(axis);
    if (axis == 0) {
      std::copy_n(v.ptr(), v.size(), out.ptr() + offset * cols);
    } else {
      for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.ptr() + r * w, w, out.ptr() + r * cols + offset);
    }
    ids.push_back(p.id());
    widths.push_back(w);
    offset += w;
  }
  return parts[0].tape().record(
      std::move(out), std::span<const Var<T>>(parts),
      [ids = std::move(ids), widths = std::move(widths), axis, rows, cols](
          Tape<T>& t, int, const Tensor<T>& g) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          const std::size_t w = widths[p];
          if (auto* gp = t.grad_slot(ids[p])) {
            if (axis == 0) {
              K<T>().add(w * cols, gp->ptr(), g.ptr() + off * cols, gp->ptr());
            } else {
              for (std::size_t r = 0; r < rows; ++r)
                K<T>().add(w, gp->ptr() + r * w, g.ptr() + r * cols + off, gp->ptr() + r * w);
            }
          }
          off += w;
        }
      });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  require_rank("slice", xv, 2);
  if (axis > 1 || begin > end || end > xv.dim(axis)) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of " + shape_string(xv.shape()));
  }
  const std::size_t rows = xv.rows(), cols = xv.cols(), w = end - begin;
  Tensor<T> out(axis == 0 ? Shape{w, cols} : Shape{rows, w});
  if (axis == 0) {
    std::copy_n(xv.ptr() + begin * cols, w * cols, out.ptr());
  } else {
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.ptr() + r * cols + begin, w, out.ptr() + r * w);
  }
  const int ix = x.id();
  return x.tape().record(std::move(out), {x},
                         [ix, axis, begin, w, rows, cols](Tape<T>& t, int, const Tensor<T>& g) {
                           auto* gx = t.grad_slot(ix);
                           if (!gx) return;
                           if (axis == 0) {
                             K<T>().add(w * cols, gx->ptr() + begin * cols, g.ptr(), gx->ptr() + begin * cols);
                           } else {
                             for (std::size_t r = 0; r < rows; ++r)
                               K<T>().add(w, gx->ptr() + r * cols + begin, g.ptr() + r * w,
                                          gx->ptr() + r * cols + begin);
                           }
                         });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const int ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape<T>& t, int, const Tensor<T>& g) {
    if (auto* gx = t.grad_slot(ix)) K<T>().add(g.size(), gx->ptr(), g.ptr(), gx->ptr());
  });
}

template <typename T>
Var<T> pick(const Var<T>& x, std::size_t index) {
  if (index >= x.value().size()) {
    throw DimensionError("pick index " + std::to_string(index) + " out of range for " +
                         shape_string(x.shape()));
  }
  const int ix = x.id();
  return x.tape().record(Tensor<T>::scalar(x.value()[index]), {x},
                         [ix, index](Tape<T>& t, int, const Tensor<T>& g) {
                           if (auto* gx = t.grad_slot(ix)) (*gx)[index] += g[0];
                         });
}

#define VIAPT_INSTANTIATE_OPS(T)                                                        \
  template Var<T> add(const Var<T>&, const Var<T>&);                                    \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                    \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                    \
  template Var<T> scale(const Var<T>&, T);                                              \
  template Var<T> add_scalar(const Var<T>&, T);                                         \
  template Var<T> exp(const Var<T>&);                                                   \
  template Var<T> log(const Var<T>&);                                                   \
  template Var<T> add_row(const Var<T>&, const Var<T>&);                                \
  template Var<T> sub_row(const Var<T>&, const Var<T>&);                                \
  template Var<T> mul_row(const Var<T>&, const Var<T>&);                                \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                 \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                              \
  template Var<T> transpose(const Var<T>&);                                             \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                  \
  template Var<T> softmax(const Var<T>&);                                               \
  template Var<T> log_softmax(const Var<T>&);                                           \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);           \
  template Var<T> gelu(const Var<T>&);                                                  \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t,      \
                         std::size_t);                                                  \
  template Var<T> sum(const Var<T>&);                                                   \
  template Var<T> mean(const Var<T>&);                                                  \
  template Var<T> sum_axis(const Var<T>&, std::size_t);                                 \
  template Var<T> mean_axis(const Var<T>&, std::size_t);                                \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                      \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);          \
  template Var<T> reshape(const Var<T>&, Shape);                                        \
  template Var<T> pick(const Var<T>&, std::size_t);

VIAPT_INSTANTIATE_OPS(float)
VIAPT_INSTANTIATE_OPS(double)

}  // namespace viapt::ops
