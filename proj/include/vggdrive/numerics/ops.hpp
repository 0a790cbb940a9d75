// Copyright 2026 The vggdrive-toy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VGGDRIVE__NUMERICS__OPS_HPP_
#define VGGDRIVE__NUMERICS__OPS_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "vggdrive/numerics/autograd.hpp"
#include "vggdrive/numerics/tensor.hpp"

// Differentiable primitives. Each op computes its forward value eagerly and,
// when any input requires a gradient, records a closure that adds the
// vector-Jacobian product into its inputs.

namespace vggdrive
{

namespace kernel
{

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

inline Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

// C[m,n] += A[m,k] * B[k,n]
inline void gemm_nn(
  const double * a, const double * b, double * c, std::size_t m, std::size_t k, std::size_t n)
{
  Map(c, ix(m), ix(n)).noalias() += ConstMap(a, ix(m), ix(k)) * ConstMap(b, ix(k), ix(n));
}

// dA[m,k] += dC[m,n] * B[k,n]^T
inline void gemm_nt(
  const double * dc, const double * b, double * da, std::size_t m, std::size_t k, std::size_t n)
{
  Map(da, ix(m), ix(k)).noalias() +=
    ConstMap(dc, ix(m), ix(n)) * ConstMap(b, ix(k), ix(n)).transpose();
}

// dB[k,n] += A[m,k]^T * dC[m,n]
inline void gemm_tn(
  const double * a, const double * dc, double * db, std::size_t m, std::size_t k, std::size_t n)
{
  Map(db, ix(k), ix(n)).noalias() +=
    ConstMap(a, ix(m), ix(k)).transpose() * ConstMap(dc, ix(m), ix(n));
}

}  // namespace kernel

namespace detail
{

inline void require_same_shape(const Var & a, const Var & b, const char * op)
{
  if (a.shape() != b.shape()) {
    throw DimensionError(
      std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

inline std::size_t norm_axis(int axis, std::size_t rank, const char * op)
{
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range");
  }
  return static_cast<std::size_t>(a);
}

template <typename F>
Var unary(const Var & x, F && f, std::function<void(Node &)> bw)
{
  Tensor out(x.shape());
  const auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    o[i] = f(in[i]);
  }
  return make_result(std::move(out), {x}, std::move(bw));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul

/**
 * @brief Batched matrix product a[..., m, k] x b[..., k, n] -> [..., m, n].
 *
 * Batch extents broadcast numpy-style (equal, 1, or missing).
 */
inline Var matmul(const Var & a, const Var & b)
{
  const Shape & sa = a.shape();
  const Shape & sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa[sa.size() - 1];
  const std::size_t n = sb[sb.size() - 1];

  // Common case: a shared weight matrix on the right folds into one big GEMM.
  if (sb.size() == 2) {
    Shape so = sa;
    so.back() = n;
    const std::size_t rows = a.value().numel() / k;
    Tensor out(so, 0.0);
    kernel::gemm_nn(a.value().raw(), b.value().raw(), out.raw(), rows, k, n);
    return detail::make_result(std::move(out), {a, b}, [rows, k, n](detail::Node & self) {
      const auto & av = self.inputs[0]->value;
      const auto & bv = self.inputs[1]->value;
      if (detail::wants_grad(self, 0)) {
        kernel::gemm_nt(self.grad.raw(), bv.raw(), self.inputs[0]->grad_buffer().raw(), rows, k, n);
      }
      if (detail::wants_grad(self, 1)) {
        kernel::gemm_tn(av.raw(), self.grad.raw(), self.inputs[1]->grad_buffer().raw(), rows, k, n);
      }
    });
  }

  const Shape ba(sa.begin(), sa.end() - 2);
  const Shape bb(sb.begin(), sb.end() - 2);
  const std::size_t nb = std::max(ba.size(), bb.size());
  Shape bo(nb, 1);
  for (std::size_t i = 0; i < nb; ++i) {
    const std::size_t ea = i + ba.size() >= nb ? ba[i + ba.size() - nb] : 1;
    const std::size_t eb = i + bb.size() >= nb ? bb[i + bb.size() - nb] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError(
        "matmul: batch extents not broadcastable " + shape_str(sa) + " and " + shape_str(sb));
    }
    bo[i] = std::max(ea, eb);
  }
  const std::size_t batches = shape_numel(bo);
  std::vector<std::size_t> offa(batches), offb(batches);
  {
    std::vector<std::size_t> idx(nb, 0);
    for (std::size_t t = 0; t < batches; ++t) {
      std::size_t oa = 0, ob = 0;
      for (std::size_t i = 0; i < nb; ++i) {
        if (i + ba.size() >= nb) {
          const std::size_t e = ba[i + ba.size() - nb];
          oa = oa * e + (e == 1 ? 0 : idx[i]);
        }
        if (i + bb.size() >= nb) {
          const std::size_t e = bb[i + bb.size() - nb];
          ob = ob * e + (e == 1 ? 0 : idx[i]);
        }
      }
      offa[t] = oa * m * k;
      offb[t] = ob * k * n;
      for (std::size_t i = nb; i-- > 0;) {
        if (++idx[i] < bo[i]) {
          break;
        }
        idx[i] = 0;
      }
    }
  }
  Shape so = bo;
  so.push_back(m);
  so.push_back(n);
  Tensor out(so, 0.0);
  for (std::size_t t = 0; t < batches; ++t) {
    kernel::gemm_nn(
      a.value().raw() + offa[t], b.value().raw() + offb[t], out.raw() + t * m * n, m, k, n);
  }
  return detail::make_result(
    std::move(out), {a, b},
    [offa = std::move(offa), offb = std::move(offb), m, k, n](detail::Node & self) {
      const auto & av = self.inputs[0]->value;
      const auto & bv = self.inputs[1]->value;
      const bool ga = detail::wants_grad(self, 0);
      const bool gb = detail::wants_grad(self, 1);
      for (std::size_t t = 0; t < offa.size(); ++t) {
        const double * dc = self.grad.raw() + t * m * n;
        if (ga) {
          kernel::gemm_nt(dc, bv.raw() + offb[t], self.inputs[0]->grad_buffer().raw() + offa[t], m, k, n);
        }
        if (gb) {
          kernel::gemm_tn(av.raw() + offa[t], dc, self.inputs[1]->grad_buffer().raw() + offb[t], m, k, n);
        }
      }
    });
}

// ---------------------------------------------------------------------------
// elementwise

/// a + b where b's shape equals a trailing suffix of a's shape (bias-style broadcast).
inline Var add(const Var & a, const Var & b)
{
  const Shape & sa = a.shape();
  const Shape & sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.begin(), sb.end(), sa.end() - sb.size())) {
    throw DimensionError("add: cannot broadcast " + shape_str(sb) + " onto " + shape_str(sa));
  }
  const std::size_t inner = b.value().numel();
  const std::size_t outer = a.value().numel() / inner;
  Tensor out = a.value();
  {
    double * o = out.raw();
    const double * bv = b.value().raw();
    for (std::size_t r = 0; r < outer; ++r) {
      for (std::size_t j = 0; j < inner; ++j) {
        o[r * inner + j] += bv[j];
      }
    }
  }
  return detail::make_result(std::move(out), {a, b}, [outer, inner](detail::Node & self) {
    const double * g = self.grad.raw();
    if (detail::wants_grad(self, 0)) {
      double * da = self.inputs[0]->grad_buffer().raw();
      for (std::size_t i = 0; i < outer * inner; ++i) {
        da[i] += g[i];
      }
    }
    if (detail::wants_grad(self, 1)) {
      double * db = self.inputs[1]->grad_buffer().raw();
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t j = 0; j < inner; ++j) {
          db[j] += g[r * inner + j];
        }
      }
    }
  });
}

inline Var sub(const Var & a, const Var & b)
{
  detail::require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] -= b.value()[i];
  }
  return detail::make_result(std::move(out), {a, b}, [](detail::Node & self) {
    const auto g = self.grad.data();
    if (detail::wants_grad(self, 0)) {
      auto d = self.inputs[0]->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (detail::wants_grad(self, 1)) {
      auto d = self.inputs[1]->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

inline Var mul(const Var & a, const Var & b)
{
  detail::require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] *= b.value()[i];
  }
  return detail::make_result(std::move(out), {a, b}, [](detail::Node & self) {
    const auto g = self.grad.data();
    const auto av = self.inputs[0]->value.data();
    const auto bv = self.inputs[1]->value.data();
    if (detail::wants_grad(self, 0)) {
      auto d = self.inputs[0]->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (detail::wants_grad(self, 1)) {
      auto d = self.inputs[1]->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

inline Var div(const Var & a, const Var & b)
{
  detail::require_same_shape(a, b, "div");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] /= b.value()[i];
  }
  return detail::make_result(std::move(out), {a, b}, [](detail::Node & self) {
    const auto g = self.grad.data();
    const auto av = self.inputs[0]->value.data();
    const auto bv = self.inputs[1]->value.data();
    if (detail::wants_grad(self, 0)) {
      auto d = self.inputs[0]->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] / bv[i];
    }
    if (detail::wants_grad(self, 1)) {
      auto d = self.inputs[1]->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

inline Var scale(const Var & x, double c)
{
  return detail::unary(x, [c](double v) { return c * v; }, [c](detail::Node & self) {
    const auto g = self.grad.data();
    auto d = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += c * g[i];
  });
}

inline Var add_scalar(const Var & x, double c)
{
  return detail::unary(x, [c](double v) { return v + c; }, [](detail::Node & self) {
    const auto g = self.grad.data();
    auto d = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

inline Var sqrt(const Var & x)
{
  return detail::unary(x, [](double v) { return std::sqrt(v); }, [](detail::Node & self) {
    const auto g = self.grad.data();
    const auto y = self.value.data();
    auto d = self.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * 0.5 / y[i];
  });
}

/// tanh-approximated GELU.
inline Var gelu(const Var & x)
{
  constexpr double k0 = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k1 = 0.044715;
  return detail::unary(
    x,
    [](double v) { return 0.5 * v * (1.0 + std::tanh(k0 * (v + k1 * v * v * v))); },
    [](detail::Node & self) {
      const auto g = self.grad.data();
      const auto xv = self.inputs[0]->value.data();
      auto d = self.inputs[0]->grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xv[i];
        const double u = k0 * (v + k1 * v * v * v);
        const double t = std::tanh(u);
        const double du = k0 * (1.0 + 3.0 * k1 * v * v);
        d[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
      }
    });
}

// ---------------------------------------------------------------------------
// reductions

inline Var sum_all(const Var & x)
{
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return detail::make_result(Tensor::scalar(s), {x}, [](detail::Node & self) {
    const double g = self.grad[0];
    for (auto & d : self.inputs[0]->grad_buffer().data()) d += g;
  });
}

inline Var mean_all(const Var & x)
{
  return scale(sum_all(x), 1.0 / static_cast<double>(x.value().numel()));
}

/// Mean over one axis; the axis is removed from the shape.
inline Var mean_axis(const Var & x, int axis)
{
  const Shape & s = x.shape();
  const std::size_t ax = detail::norm_axis(axis, s.size(), "mean_axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[ax];
  Shape so;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != ax) so.push_back(s[i]);
  }
  Tensor out(so, 0.0);
  const double * xv = x.value().raw();
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < inner; ++j) {
        out[o * inner + j] += xv[(o * n + r) * inner + j];
      }
    }
    for (std::size_t j = 0; j < inner; ++j) out[o * inner + j] *= inv;
  }
  return detail::make_result(std::move(out), {x}, [outer, inner, n, inv](detail::Node & self) {
    double * d = self.inputs[0]->grad_buffer().raw();
    const double * g = self.grad.raw();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < inner; ++j) {
          d[(o * n + r) * inner + j] += g[o * inner + j] * inv;
        }
      }
    }
  });
}

/// Sum over the last axis; the axis is removed.
inline Var sum_lastdim(const Var & x)
{
  const std::size_t n = x.dim(-1);
  const std::size_t rows = x.value().numel() / n;
  Shape so(x.shape().begin(), x.shape().end() - 1);
  Tensor out(so, 0.0);
  const double * xv = x.value().raw();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += xv[r * n + j];
    out[r] = s;
  }
  return detail::make_result(std::move(out), {x}, [rows, n](detail::Node & self) {
    double * d = self.inputs[0]->grad_buffer().raw();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < n; ++j) d[r * n + j] += self.grad[r];
    }
  });
}

// ---------------------------------------------------------------------------
// softmax / normalization

namespace detail
{

inline Var softmax_impl(const Var & x, bool causal)
{
  const Shape & s = x.shape();
  if (s.empty() || s.back() == 0) {
    throw DimensionError("softmax: empty last dimension in " + shape_str(s));
  }
  const std::size_t n = s.back();
  const std::size_t rows = x.value().numel() / n;
  std::size_t lq = 1;
  if (causal) {
    if (s.size() < 2 || s[s.size() - 2] != n) {
      throw DimensionError("causal softmax needs square trailing dims, got " + shape_str(s));
    }
    lq = s[s.size() - 2];
  }
  Tensor out(s, 0.0);
  const double * xv = x.value().raw();
  double * o = out.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t valid = causal ? (r % lq) + 1 : n;
    const double * xr = xv + r * n;
    double * orow = o + r * n;
    double mx = xr[0];
    for (std::size_t j = 1; j < valid; ++j) mx = std::max(mx, xr[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < valid; ++j) {
      orow[j] = std::exp(xr[j] - mx);
      z += orow[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < valid; ++j) orow[j] *= inv;
  }
  return make_result(std::move(out), {x}, [rows, n](Node & self) {
    const double * y = self.value.raw();
    const double * g = self.grad.raw();
    double * d = self.inputs[0]->grad_buffer().raw();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        d[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
      }
    }
  });
}

}  // namespace detail

/// Max-subtracted softmax over the last axis.
inline Var softmax_lastdim(const Var & x) { return detail::softmax_impl(x, false); }

/// Softmax over [..., L, L] where row i only sees columns 0..i; masked entries are exactly 0.
inline Var causal_softmax(const Var & x) { return detail::softmax_impl(x, true); }

inline constexpr double kLayerNormEps = 1e-5;

/// Per-slice normalization over the last axis followed by gain/bias.
inline Var layer_norm(const Var & x, const Var & gain, const Var & bias)
{
  const std::size_t n = x.dim(-1);
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw DimensionError(
      "layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
      " must match last extent of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.value().numel() / n;
  Tensor out(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> rstd(rows);
  const double * xv = x.value().raw();
  const double * gv = gain.value().raw();
  const double * bv = bias.value().raw();
  for (std::size_t r = 0; r < rows; ++r) {
    const double * xr = xv + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mean) * rs;
      xhat[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return detail::make_result(
    std::move(out), {x, gain, bias},
    [rows, n, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node & self) {
      const double * g = self.grad.raw();
      const double * gv = self.inputs[1]->value.raw();
      if (detail::wants_grad(self, 1)) {
        double * dg = self.inputs[1]->grad_buffer().raw();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) dg[j] += g[r * n + j] * xhat[r * n + j];
      }
      if (detail::wants_grad(self, 2)) {
        double * db = self.inputs[2]->grad_buffer().raw();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) db[j] += g[r * n + j];
      }
      if (detail::wants_grad(self, 0)) {
        double * dx = self.inputs[0]->grad_buffer().raw();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = g[r * n + j] * gv[j];
            s1 += dh;
            s2 += dh * xhat[r * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = g[r * n + j] * gv[j];
            dx[r * n + j] += rstd[r] * (dh - inv_n * s1 - xhat[r * n + j] * inv_n * s2);
          }
        }
      }
    });
}

// ---------------------------------------------------------------------------
// shape manipulation

inline Var reshape(const Var & x, Shape shape)
{
  Tensor out = x.value().reshaped(std::move(shape));
  return detail::make_result(std::move(out), {x}, [](detail::Node & self) {
    auto d = self.inputs[0]->grad_buffer().data();
    const auto g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

/// out.shape[i] = x.shape[perm[i]].
inline Var permute(const Var & x, const std::vector<std::size_t> & perm)
{
  const Shape & s = x.shape();
  const std::size_t r = s.size();
  if (perm.size() != r) {
    throw DimensionError("permute: rank mismatch for " + shape_str(s));
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  Shape so(r);
  std::vector<std::size_t> stride(r);
  std::vector<bool> used(r, false);
  for (std::size_t i = 0; i < r; ++i) {
    if (perm[i] >= r || used[perm[i]]) {
      throw DimensionError("permute: invalid permutation");
    }
    used[perm[i]] = true;
    so[i] = s[perm[i]];
    stride[i] = in_stride[perm[i]];
  }
  // src[k] is the input offset of output element k.
  const std::size_t total = x.value().numel();
  std::vector<std::size_t> src(total);
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t k = 0; k < total; ++k) {
      src[k] = off;
      for (std::size_t i = r; i-- > 0;) {
        if (++idx[i] < so[i]) {
          off += stride[i];
          break;
        }
        off -= stride[i] * (so[i] - 1);
        idx[i] = 0;
      }
    }
  }
  Tensor out(so);
  const double * xv = x.value().raw();
  for (std::size_t k = 0; k < total; ++k) out[k] = xv[src[k]];
  return detail::make_result(std::move(out), {x}, [src = std::move(src)](detail::Node & self) {
    double * d = self.inputs[0]->grad_buffer().raw();
    const double * g = self.grad.raw();
    for (std::size_t k = 0; k < src.size(); ++k) d[src[k]] += g[k];
  });
}

/// Swap the two trailing axes.
inline Var transpose_last2(const Var & x)
{
  std::vector<std::size_t> perm(x.shape().size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(x, perm);
}

inline Var concat(const std::vector<Var> & parts, int axis)
{
  if (parts.empty()) {
    throw DimensionError("concat: no inputs");
  }
  const Shape & s0 = parts[0].shape();
  const std::size_t ax = detail::norm_axis(axis, s0.size(), "concat");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s0[i];
  for (std::size_t i = ax + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto & p : parts) {
    const Shape & s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      ok = i == ax || s[i] == s0[i];
    }
    if (!ok) {
      throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(s0));
    }
    extents.push_back(s[ax]);
    total += s[ax];
  }
  Shape so = s0;
  so[ax] = total;
  Tensor out(so);
  std::size_t base = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double * pv = parts[p].value().raw();
    const std::size_t chunk = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(pv + o * chunk, pv + (o + 1) * chunk, out.raw() + o * total * inner + base * inner);
    }
    base += extents[p];
  }
  return detail::make_result(
    std::move(out), parts, [outer, inner, total, extents = std::move(extents)](detail::Node & self) {
      std::size_t b = 0;
      const double * g = self.grad.raw();
      for (std::size_t p = 0; p < extents.size(); ++p) {
        const std::size_t chunk = extents[p] * inner;
        if (detail::wants_grad(self, p)) {
          double * d = self.inputs[p]->grad_buffer().raw();
          for (std::size_t o = 0; o < outer; ++o) {
            const double * src = g + o * total * inner + b * inner;
            for (std::size_t j = 0; j < chunk; ++j) d[o * chunk + j] += src[j];
          }
        }
        b += extents[p];
      }
    });
}

/// Half-open range [begin, end) along `axis`.
inline Var slice(const Var & x, int axis, std::size_t begin, std::size_t end)
{
  const Shape & s = x.shape();
  const std::size_t ax = detail::norm_axis(axis, s.size(), "slice");
  if (begin >= end || end > s[ax]) {
    throw DimensionError(
      "slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
      shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[ax];
  const std::size_t len = end - begin;
  Shape so = s;
  so[ax] = len;
  Tensor out(so);
  const double * xv = x.value().raw();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(
      xv + (o * n + begin) * inner, xv + (o * n + end) * inner, out.raw() + o * len * inner);
  }
  return detail::make_result(std::move(out), {x}, [outer, inner, n, begin, len](detail::Node & self) {
    double * d = self.inputs[0]->grad_buffer().raw();
    const double * g = self.grad.raw();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < len * inner; ++j) {
        d[(o * n + begin) * inner + j] += g[o * len * inner + j];
      }
    }
  });
}

/// Rows of x[..., L, D] at `indices` along the second-to-last axis, in the given order.
inline Var gather_rows(const Var & x, const std::vector<std::size_t> & indices)
{
  const Shape & s = x.shape();
  if (s.size() < 2) {
    throw DimensionError("gather_rows: need rank >= 2, got " + shape_str(s));
  }
  const std::size_t l = s[s.size() - 2];
  const std::size_t d = s.back();
  const std::size_t outer = x.value().numel() / (l * d);
  for (auto i : indices) {
    if (i >= l) {
      throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range " + shape_str(s));
    }
  }
  if (indices.empty()) {
    throw DimensionError("gather_rows: empty index list");
  }
  Shape so = s;
  so[so.size() - 2] = indices.size();
  Tensor out(so);
  const double * xv = x.value().raw();
  const std::size_t m = indices.size();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t r = 0; r < m; ++r) {
      std::copy(
        xv + (o * l + indices[r]) * d, xv + (o * l + indices[r] + 1) * d,
        out.raw() + (o * m + r) * d);
    }
  }
  return detail::make_result(std::move(out), {x}, [indices, outer, l, d](detail::Node & self) {
    double * dx = self.inputs[0]->grad_buffer().raw();
    const double * g = self.grad.raw();
    const std::size_t m = indices.size();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          dx[(o * l + indices[r]) * d + j] += g[(o * m + r) * d + j];
        }
      }
    }
  });
}

enum class ScatterMode { add, replace };

/**
 * @brief Writes rows[..., r, :] into base[..., indices[r], :].
 *
 * `add` accumulates onto the base row, `replace` overwrites it. Rows not named
 * in `indices` pass through untouched. Indices must be distinct.
 */
inline Var scatter_rows(
  const Var & base, const Var & rows, const std::vector<std::size_t> & indices, ScatterMode mode)
{
  const Shape & sb = base.shape();
  const Shape & sr = rows.shape();
  if (sb.size() < 2 || sr.size() != sb.size() || sr.back() != sb.back() ||
      sr[sr.size() - 2] != indices.size() ||
      !std::equal(sb.begin(), sb.end() - 2, sr.begin()))
  {
    throw DimensionError(
      "scatter_rows: rows " + shape_str(sr) + " incompatible with base " + shape_str(sb) + " and " +
      std::to_string(indices.size()) + " indices");
  }
  const std::size_t l = sb[sb.size() - 2];
  const std::size_t d = sb.back();
  const std::size_t outer = base.value().numel() / (l * d);
  const std::size_t m = indices.size();
  {
    std::vector<bool> hit(l, false);
    for (auto i : indices) {
      if (i >= l || hit[i]) {
        throw DimensionError("scatter_rows: index out of range or repeated");
      }
      hit[i] = true;
    }
  }
  Tensor out = base.value();
  const double * rv = rows.value().raw();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t r = 0; r < m; ++r) {
      double * dst = out.raw() + (o * l + indices[r]) * d;
      const double * src = rv + (o * m + r) * d;
      for (std::size_t j = 0; j < d; ++j) {
        dst[j] = mode == ScatterMode::add ? dst[j] + src[j] : src[j];
      }
    }
  }
  return detail::make_result(
    std::move(out), {base, rows}, [indices, outer, l, d, m, mode](detail::Node & self) {
      const double * g = self.grad.raw();
      if (detail::wants_grad(self, 0)) {
        double * db = self.inputs[0]->grad_buffer().raw();
        std::vector<bool> hit(l, false);
        for (auto i : indices) hit[i] = true;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t p = 0; p < l; ++p) {
            if (mode == ScatterMode::replace && hit[p]) continue;
            for (std::size_t j = 0; j < d; ++j) db[(o * l + p) * d + j] += g[(o * l + p) * d + j];
          }
        }
      }
      if (detail::wants_grad(self, 1)) {
        double * dr = self.inputs[1]->grad_buffer().raw();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
              dr[(o * m + r) * d + j] += g[(o * l + indices[r]) * d + j];
            }
          }
        }
      }
    });
}

/// Repeats x over new leading axes: result shape = lead ++ x.shape.
inline Var expand_leading(const Var & x, const Shape & lead)
{
  const std::size_t reps = shape_numel(lead);
  const std::size_t n = x.value().numel();
  Shape so = lead;
  so.insert(so.end(), x.shape().begin(), x.shape().end());
  Tensor out(so);
  for (std::size_t r = 0; r < reps; ++r) {
    std::copy(x.value().raw(), x.value().raw() + n, out.raw() + r * n);
  }
  return detail::make_result(std::move(out), {x}, [reps, n](detail::Node & self) {
    double * d = self.inputs[0]->grad_buffer().raw();
    const double * g = self.grad.raw();
    for (std::size_t r = 0; r < reps; ++r)
      for (std::size_t j = 0; j < n; ++j) d[j] += g[r * n + j];
  });
}

// ---------------------------------------------------------------------------
// losses

/// Mean over the batch of -log softmax(logits[b])[targets[b]].
inline Var cross_entropy(const Var & logits, const std::vector<std::size_t> & targets)
{
  const Shape & s = logits.shape();
  if (s.size() != 2 || s[0] != targets.size()) {
    throw DimensionError(
      "cross_entropy: logits " + shape_str(s) + " vs " + std::to_string(targets.size()) +
      " targets");
  }
  const std::size_t b = s[0];
  const std::size_t v = s[1];
  for (auto t : targets) {
    if (t >= v) {
      throw ContractError(
        "cross_entropy: target " + std::to_string(t) + " outside vocabulary of " +
        std::to_string(v));
    }
  }
  Tensor probs(s);
  double loss = 0.0;
  const double * lv = logits.value().raw();
  for (std::size_t r = 0; r < b; ++r) {
    const double * row = lv + r * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < v; ++j) probs[r * v + j] = std::exp(row[j] - lse);
    loss += lse - row[targets[r]];
  }
  loss /= static_cast<double>(b);
  return detail::make_result(
    Tensor::scalar(loss), {logits},
    [probs = std::move(probs), targets, b, v](detail::Node & self) {
      double * d = self.inputs[0]->grad_buffer().raw();
      const double g = self.grad[0] / static_cast<double>(b);
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < v; ++j) {
          d[r * v + j] += g * (probs[r * v + j] - (j == targets[r] ? 1.0 : 0.0));
        }
      }
    });
}

}  // namespace vggdrive

#endif  // VGGDRIVE__NUMERICS__OPS_HPP_
