#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "lenscam/common.hpp"
#include "lenscam/kernels.hpp"

namespace lenscam {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (const int d : s) {
    if (d <= 0) throw ShapeError("shape has non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

template <class Real>
class TapeT;

// Lightweight handle into a tape. Copyable; the tape owns all storage.
template <class Real>
struct TensorT {
  TapeT<Real>* tape = nullptr;
  int id = -1;
  Shape shape;

  bool valid() const { return tape != nullptr && id >= 0; }
  std::size_t numel() const { return shape_numel(shape); }
};

// Reverse-mode differentiation tape with an instrumented multiplication
// counter. The counter tallies scalar multiplications of the FORWARD pass
// only, using a fixed per-op accounting:
//
//   matmul (n,k)x(k,m)        n*k*m
//   matmul_nt (n,k)x(m,k)^T   n*k*m
//   affine (n,k)x(k,m)+bias   n*m*(k+1)      (bias row charged as one
//                                             multiply-accumulate per output)
//   mul (Hadamard)            numel
//   gate_mul (n,h)            n*h*h          (a gating stage is charged as a
//                                             dense per-token product even
//                                             though it executes elementwise;
//                                             see the cost-model notes)
//   scale by scalar           numel
//   add / sub / gelu /
//   softmax / reshape /
//   row select / concat       0
//   batch_norm                2*numel
//   conv2d                    oh*ow*co*(kh*kw*ci + bias)
//   bilinear_resize           4*out_numel
//   mse                       numel
//
// Backward-pass multiplications are not tallied.
template <class Real>
class TapeT {
 public:
  using Tensor = TensorT<Real>;

  Tensor input(const Shape& shape, std::vector<Real> data) {
    check_payload(shape, data.size());
    return make(shape, std::move(data), {}, nullptr, false);
  }

  // A leaf whose gradient is retained after backward().
  Tensor param(const Shape& shape, std::vector<Real> data) {
    check_payload(shape, data.size());
    return make(shape, std::move(data), {}, nullptr, true);
  }

  const std::vector<Real>& value(const Tensor& t) const {
    return node(t).value;
  }
  const std::vector<Real>& grad(const Tensor& t) const { return node(t).grad; }

  std::uint64_t mult_count() const { return mults_; }
  void reset_mult_count() { mults_ = 0; }

  // ---- arithmetic ops ----

  Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul lhs");
    require_2d(b, "matmul rhs");
    const int n = a.shape[0], k = a.shape[1], m = b.shape[1];
    if (b.shape[0] != k)
      throw ShapeError("matmul inner dims differ: " + shape_str(a.shape) +
                       " vs " + shape_str(b.shape));
    std::vector<Real> out(static_cast<std::size_t>(n) * m);
    kernels::matmul(data(a), data(b), out.data(), n, k, m, kernels::mode());
    mults_ += u64(n) * u64(k) * u64(m);
    return make({n, m}, std::move(out), {a.id, b.id},
                [this, a = a.id, b = b.id, n, k, m](const Node& o) {
                  if (wants(a))
                    kernels::matmul_nt(o.grad.data(), nodes_[b].value.data(),
                                       scratch(n, k), n, m, k,
                                       kernels::mode()),
                        accumulate(a, n * std::size_t(k));
                  if (wants(b))
                    kernels::matmul_tn(nodes_[a].value.data(), o.grad.data(),
                                       scratch(k, m), n, k, m,
                                       kernels::mode()),
                        accumulate(b, std::size_t(k) * m);
                });
  }

  // a (n,k) times b(m,k) transposed -> (n,m)
  Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_nt lhs");
    require_2d(b, "matmul_nt rhs");
    const int n = a.shape[0], k = a.shape[1], m = b.shape[0];
    if (b.shape[1] != k)
      throw ShapeError("matmul_nt inner dims differ: " + shape_str(a.shape) +
                       " vs " + shape_str(b.shape));
    std::vector<Real> out(static_cast<std::size_t>(n) * m);
    kernels::matmul_nt(data(a), data(b), out.data(), n, k, m, kernels::mode());
    mults_ += u64(n) * u64(k) * u64(m);
    return make({n, m}, std::move(out), {a.id, b.id},
                [this, a = a.id, b = b.id, n, k, m](const Node& o) {
                  // out = A B^T; dA = G B ; dB = G^T A
                  if (wants(a))
                    kernels::matmul(o.grad.data(), nodes_[b].value.data(),
                                    scratch(n, k), n, m, k, kernels::mode()),
                        accumulate(a, u64s(n, k));
                  if (wants(b))
                    kernels::matmul_tn(o.grad.data(), nodes_[a].value.data(),
                                       scratch(m, k), n, m, k,
                                       kernels::mode()),
                        accumulate(b, u64s(m, k));
                });
  }

  // x (n,k) @ w (k,m) + bias (m), charged n*m*(k+1)
  Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias) {
    require_2d(x, "affine input");
    require_2d(w, "affine weight");
    const int n = x.shape[0], k = x.shape[1], m = w.shape[1];
    if (w.shape[0] != k || bias.shape != Shape{m})
      throw ShapeError("affine shape mismatch: x" + shape_str(x.shape) +
                       " w" + shape_str(w.shape) + " b" +
                       shape_str(bias.shape));
    std::vector<Real> out(static_cast<std::size_t>(n) * m);
    kernels::matmul(data(x), data(w), out.data(), n, k, m, kernels::mode());
    const Real* bv = data(bias);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(i) * m + j] += bv[j];
    mults_ += u64(n) * u64(m) * u64(k + 1);
    return make({n, m}, std::move(out), {x.id, w.id, bias.id},
                [this, x = x.id, w = w.id, b = bias.id, n, k, m](const Node& o) {
                  if (wants(x))
                    kernels::matmul_nt(o.grad.data(), nodes_[w].value.data(),
                                       scratch(n, k), n, m, k,
                                       kernels::mode()),
                        accumulate(x, u64s(n, k));
                  if (wants(w))
                    kernels::matmul_tn(nodes_[x].value.data(), o.grad.data(),
                                       scratch(k, m), n, k, m,
                                       kernels::mode()),
                        accumulate(w, u64s(k, m));
                  if (wants(b)) {
                    Real* g = nodes_[b].grad.data();
                    for (int i = 0; i < n; ++i)
                      for (int j = 0; j < m; ++j)
                        g[j] += o.grad[static_cast<std::size_t>(i) * m + j];
                  }
                });
  }

  Tensor add(const Tensor& a, const Tensor& b) { return add_like(a, b, +1); }
  Tensor sub(const Tensor& a, const Tensor& b) { return add_like(a, b, -1); }

  Tensor mul(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mul");
    std::vector<Real> out(a.numel());
    const Real* av = data(a);
    const Real* bv = data(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    mults_ += out.size();
    return make(a.shape, std::move(out), {a.id, b.id},
                [this, a = a.id, b = b.id](const Node& o) {
                  if (wants(a)) {
                    Real* g = nodes_[a].grad.data();
                    const Real* bv = nodes_[b].value.data();
                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                      g[i] += o.grad[i] * bv[i];
                  }
                  if (wants(b)) {
                    Real* g = nodes_[b].grad.data();
                    const Real* av = nodes_[a].value.data();
                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                      g[i] += o.grad[i] * av[i];
                  }
                });
  }

  // Same arithmetic as mul on (n,h) operands, but charged n*h*h: the gating
  // stage's published count treats the gate as a dense per-token product.
  Tensor gate_mul(const Tensor& q, const Tensor& s) {
    require_2d(q, "gate_mul lhs");
    require_same(q, s, "gate_mul");
    Tensor t = mul(q, s);
    const std::uint64_t h = u64(q.shape[1]);
    mults_ += u64(q.shape[0]) * h * h - q.numel();  // upgrade mul's tally
    return t;
  }

  Tensor scale(const Tensor& a, double c) {
    std::vector<Real> out(a.numel());
    const Real* av = data(a);
    const Real rc = static_cast<Real>(c);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * rc;
    mults_ += out.size();
    return make(a.shape, std::move(out), {a.id},
                [this, a = a.id, rc](const Node& o) {
                  if (!wants(a)) return;
                  Real* g = nodes_[a].grad.data();
                  for (std::size_t i = 0; i < o.grad.size(); ++i)
                    g[i] += o.grad[i] * rc;
                });
  }

  Tensor gelu(const Tensor& x) {
    std::vector<Real> out(x.numel());
    const Real* xv = data(x);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double v = xv[i];
      out[i] = static_cast<Real>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
    }
    return make(x.shape, std::move(out), {x.id},
                [this, x = x.id](const Node& o) {
                  if (!wants(x)) return;
                  Real* g = nodes_[x].grad.data();
                  const Real* xv = nodes_[x].value.data();
                  for (std::size_t i = 0; i < o.grad.size(); ++i) {
                    const double v = xv[i];
                    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                    const double pdf =
                        std::exp(-0.5 * v * v) * kInvSqrt2Pi;
                    g[i] += o.grad[i] * static_cast<Real>(cdf + v * pdf);
                  }
                });
  }

  Tensor softmax_rows(const Tensor& x) {
    require_2d(x, "softmax input");
    const int n = x.shape[0], m = x.shape[1];
    std::vector<Real> out(x.numel());
    const Real* xv = data(x);
    for (int i = 0; i < n; ++i) {
      const Real* row = xv + static_cast<std::size_t>(i) * m;
      Real* orow = out.data() + static_cast<std::size_t>(i) * m;
      Real mx = row[0];
      for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (int j = 0; j < m; ++j) {
        const double e = std::exp(double(row[j]) - double(mx));
        orow[j] = static_cast<Real>(e);
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (int j = 0; j < m; ++j) orow[j] = static_cast<Real>(orow[j] * inv);
    }
    return make(x.shape, std::move(out), {x.id},
                [this, x = x.id, n, m](const Node& o) {
                  if (!wants(x)) return;
                  Real* g = nodes_[x].grad.data();
                  for (int i = 0; i < n; ++i) {
                    const Real* y = o.value.data() + static_cast<std::size_t>(i) * m;
                    const Real* gy = o.grad.data() + static_cast<std::size_t>(i) * m;
                    double dot = 0.0;
                    for (int j = 0; j < m; ++j) dot += double(gy[j]) * double(y[j]);
                    Real* gx = g + static_cast<std::size_t>(i) * m;
                    for (int j = 0; j < m; ++j)
                      gx[j] += static_cast<Real>((double(gy[j]) - dot) * double(y[j]));
                  }
                });
  }

  // Normalizes each feature column over the leading axis, then applies the
  // learned scale/shift. Charged 2*numel.
  Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    double eps = 1e-5) {
    require_2d(x, "batch_norm input");
    const int n = x.shape[0], m = x.shape[1];
    if (gamma.shape != Shape{m} || beta.shape != Shape{m})
      throw ShapeError("batch_norm scale/shift must be " + shape_str({m}));
    std::vector<Real> out(x.numel());
    std::vector<double> mean(m, 0.0), inv_std(m, 0.0);
    const Real* xv = data(x);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) mean[j] += xv[static_cast<std::size_t>(i) * m + j];
    for (int j = 0; j < m; ++j) mean[j] /= n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const double d = xv[static_cast<std::size_t>(i) * m + j] - mean[j];
        inv_std[j] += d * d;
      }
    for (int j = 0; j < m; ++j) inv_std[j] = 1.0 / std::sqrt(inv_std[j] / n + eps);
    const Real* gv = data(gamma);
    const Real* bv = data(beta);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const std::size_t ix = static_cast<std::size_t>(i) * m + j;
        out[ix] = static_cast<Real>((xv[ix] - mean[j]) * inv_std[j] * gv[j] +
                                    bv[j]);
      }
    mults_ += 2 * x.numel();
    return make(
        x.shape, std::move(out), {x.id, gamma.id, beta.id},
        [this, x = x.id, ga = gamma.id, be = beta.id, n, m, mean,
         inv_std](const Node& o) {
          const Real* xv = nodes_[x].value.data();
          const Real* gv = nodes_[ga].value.data();
          for (int j = 0; j < m; ++j) {
            // Column-wise reductions in fixed row order.
            double sum_g = 0.0, sum_gx = 0.0;
            for (int i = 0; i < n; ++i) {
              const std::size_t ix = static_cast<std::size_t>(i) * m + j;
              const double xh = (xv[ix] - mean[j]) * inv_std[j];
              sum_g += o.grad[ix];
              sum_gx += double(o.grad[ix]) * xh;
            }
            if (wants(ga)) nodes_[ga].grad[j] += static_cast<Real>(sum_gx);
            if (wants(be)) nodes_[be].grad[j] += static_cast<Real>(sum_g);
            if (wants(x)) {
              const double k1 = sum_g / n, k2 = sum_gx / n;
              for (int i = 0; i < n; ++i) {
                const std::size_t ix = static_cast<std::size_t>(i) * m + j;
                const double xh = (xv[ix] - mean[j]) * inv_std[j];
                nodes_[x].grad[ix] += static_cast<Real>(
                    gv[j] * inv_std[j] * (double(o.grad[ix]) - k1 - xh * k2));
              }
            }
          }
        });
  }

  // Single-image NHWC convolution: x (h,w,ci), kern (kh,kw,ci,co),
  // bias (co) or invalid handle for none.
  Tensor conv2d(const Tensor& x, const Tensor& kern, const Tensor& bias,
                int stride, int pad) {
    if (x.shape.size() != 3)
      throw ShapeError("conv2d input must be (h,w,c), got " +
                       shape_str(x.shape));
    if (kern.shape.size() != 4)
      throw ShapeError("conv2d kernel must be (kh,kw,ci,co), got " +
                       shape_str(kern.shape));
    const int h = x.shape[0], w = x.shape[1], ci = x.shape[2];
    const int kh = kern.shape[0], kw = kern.shape[1], co = kern.shape[3];
    if (kern.shape[2] != ci)
      throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape) +
                       " kernel " + shape_str(kern.shape));
    if (stride < 1 || pad < 0)
      throw DomainError("conv2d requires stride >= 1 and pad >= 0");
    if (kh > h + 2 * pad || kw > w + 2 * pad)
      throw ShapeError("conv2d kernel exceeds padded input");
    const bool has_bias = bias.valid();
    if (has_bias && bias.shape != Shape{co})
      throw ShapeError("conv2d bias must be " + shape_str({co}));
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
    std::vector<Real> out(static_cast<std::size_t>(oh) * ow * co);
    kernels::conv2d_forward(data(x), h, w, ci, data(kern), kh, kw, co,
                            has_bias ? data(bias) : nullptr, stride, pad,
                            out.data(), oh, ow, kernels::mode());
    mults_ += u64(oh) * u64(ow) * u64(co) *
              (u64(kh) * u64(kw) * u64(ci) + (has_bias ? 1 : 0));
    const int bid = has_bias ? bias.id : -1;
    return make(
        {oh, ow, co}, std::move(out),
        has_bias ? std::vector<int>{x.id, kern.id, bias.id}
                 : std::vector<int>{x.id, kern.id},
        [this, x = x.id, k = kern.id, bid, h, w, ci, kh, kw, co, stride, pad,
         oh, ow](const Node& o) {
          if (wants(x))
            kernels::conv2d_backward_input(
                o.grad.data(), oh, ow, co, nodes_[k].value.data(), kh, kw, ci,
                stride, pad, scratch(static_cast<std::size_t>(h) * w, ci), h,
                w, kernels::mode()),
                accumulate(x, static_cast<std::size_t>(h) * w * ci);
          const bool want_k = wants(k);
          const bool want_b = bid >= 0 && wants(bid);
          if (want_k || want_b) {
            std::vector<Real> gk(static_cast<std::size_t>(kh) * kw * ci * co);
            std::vector<Real> gb(want_b ? co : 0);
            kernels::conv2d_backward_kernel(
                nodes_[x].value.data(), h, w, ci, o.grad.data(), oh, ow, co,
                kh, kw, stride, pad, gk.data(), want_b ? gb.data() : nullptr,
                kernels::mode());
            if (want_k) {
              Real* g = nodes_[k].grad.data();
              for (std::size_t i = 0; i < gk.size(); ++i) g[i] += gk[i];
            }
            if (want_b) {
              Real* g = nodes_[bid].grad.data();
              for (int i = 0; i < co; ++i) g[i] += gb[i];
            }
          }
        });
  }

  // (h,w,c) -> (oh,ow,c); charged 4*out_numel.
  Tensor bilinear_resize(const Tensor& x, int oh, int ow) {
    if (x.shape.size() != 3)
      throw ShapeError("bilinear_resize input must be (h,w,c)");
    if (oh <= 0 || ow <= 0) throw ShapeError("resize target must be positive");
    const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
    std::vector<Real> out(static_cast<std::size_t>(oh) * ow * c);
    const Real* xv = data(x);
    auto coords = [](int o, int n, double s, int& i0, int& i1, double& t) {
      const double f = std::clamp((o + 0.5) * s - 0.5, 0.0, n - 1.0);
      i0 = static_cast<int>(f);
      i1 = std::min(i0 + 1, n - 1);
      t = f - i0;
    };
    const double sy = static_cast<double>(h) / oh;
    const double sx = static_cast<double>(w) / ow;
    for (int y = 0; y < oh; ++y) {
      int y0, y1;
      double ty;
      coords(y, h, sy, y0, y1, ty);
      for (int x2 = 0; x2 < ow; ++x2) {
        int x0, x1;
        double tx;
        coords(x2, w, sx, x0, x1, tx);
        for (int ch = 0; ch < c; ++ch) {
          const double p00 = xv[(static_cast<std::size_t>(y0) * w + x0) * c + ch];
          const double p01 = xv[(static_cast<std::size_t>(y0) * w + x1) * c + ch];
          const double p10 = xv[(static_cast<std::size_t>(y1) * w + x0) * c + ch];
          const double p11 = xv[(static_cast<std::size_t>(y1) * w + x1) * c + ch];
          const double top = p00 + tx * (p01 - p00);
          const double bot = p10 + tx * (p11 - p10);
          out[(static_cast<std::size_t>(y) * ow + x2) * c + ch] =
              static_cast<Real>(top + ty * (bot - top));
        }
      }
    }
    mults_ += 4 * out.size();
    return make({oh, ow, c}, std::move(out), {x.id},
                [this, x = x.id, h, w, c, oh, ow, sy, sx, coords](const Node& o) {
                  if (!wants(x)) return;
                  Real* g = nodes_[x].grad.data();
                  for (int y = 0; y < oh; ++y) {
                    int y0, y1;
                    double ty;
                    coords(y, h, sy, y0, y1, ty);
                    for (int x2 = 0; x2 < ow; ++x2) {
                      int x0, x1;
                      double tx;
                      coords(x2, w, sx, x0, x1, tx);
                      for (int ch = 0; ch < c; ++ch) {
                        const Real go =
                            o.grad[(static_cast<std::size_t>(y) * ow + x2) * c + ch];
                        g[(static_cast<std::size_t>(y0) * w + x0) * c + ch] +=
                            static_cast<Real>((1 - ty) * (1 - tx) * go);
                        g[(static_cast<std::size_t>(y0) * w + x1) * c + ch] +=
                            static_cast<Real>((1 - ty) * tx * go);
                        g[(static_cast<std::size_t>(y1) * w + x0) * c + ch] +=
                            static_cast<Real>(ty * (1 - tx) * go);
                        g[(static_cast<std::size_t>(y1) * w + x1) * c + ch] +=
                            static_cast<Real>(ty * tx * go);
                      }
                    }
                  }
                });
  }

  Tensor reshape(const Tensor& x, const Shape& s) {
    if (shape_numel(s) != x.numel())
      throw ShapeError("reshape " + shape_str(x.shape) + " -> " + shape_str(s) +
                       " changes element count");
    std::vector<Real> out(value(x));
    return make(s, std::move(out), {x.id}, [this, x = x.id](const Node& o) {
      if (!wants(x)) return;
      Real* g = nodes_[x].grad.data();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    });
  }

  // Gathers rows of a 2D tensor; gradient scatter-adds back.
  Tensor select_rows(const Tensor& x, std::vector<int> rows) {
    require_2d(x, "select_rows input");
    const int m = x.shape[1];
    for (const int r : rows)
      if (r < 0 || r >= x.shape[0])
        throw ShapeError("select_rows index " + std::to_string(r) +
                         " out of range for " + shape_str(x.shape));
    std::vector<Real> out(rows.size() * static_cast<std::size_t>(m));
    const Real* xv = data(x);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(xv + static_cast<std::size_t>(rows[i]) * m,
                xv + static_cast<std::size_t>(rows[i] + 1) * m,
                out.begin() + static_cast<std::size_t>(i) * m);
    // the lambda capture moves `rows`; fix the row count first (argument
    // evaluation order is unspecified)
    const int out_rows = static_cast<int>(rows.size());
    return make({out_rows, m}, std::move(out), {x.id},
                [this, x = x.id, rows = std::move(rows), m](const Node& o) {
                  if (!wants(x)) return;
                  Real* g = nodes_[x].grad.data();
                  for (std::size_t i = 0; i < rows.size(); ++i) {
                    const Real* src = o.grad.data() + i * m;
                    Real* dst = g + static_cast<std::size_t>(rows[i]) * m;
                    for (int j = 0; j < m; ++j) dst[j] += src[j];
                  }
                });
  }

  Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows of zero tensors");
    const int m = parts[0].shape.size() == 2 ? parts[0].shape[1] : -1;
    int n = 0;
    std::vector<int> ids;
    for (const Tensor& p : parts) {
      if (p.shape.size() != 2 || p.shape[1] != m)
        throw ShapeError("concat_rows operands must share column count");
      n += p.shape[0];
      ids.push_back(p.id);
    }
    std::vector<Real> out;
    out.reserve(static_cast<std::size_t>(n) * m);
    for (const Tensor& p : parts) {
      const auto& v = value(p);
      out.insert(out.end(), v.begin(), v.end());
    }
    return make({n, m}, std::move(out), ids,
                [this, ids, m](const Node& o) {
                  std::size_t off = 0;
                  for (const int id : ids) {
                    const std::size_t cnt = nodes_[id].value.size();
                    if (wants(id)) {
                      Real* g = nodes_[id].grad.data();
                      for (std::size_t i = 0; i < cnt; ++i)
                        g[i] += o.grad[off + i];
                    }
                    off += cnt;
                  }
                });
  }

  Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (const Real v : value(x)) acc += v;
    std::vector<Real> out{static_cast<Real>(acc)};
    return make({1}, std::move(out), {x.id}, [this, x = x.id](const Node& o) {
      if (!wants(x)) return;
      Real* g = nodes_[x].grad.data();
      for (std::size_t i = 0; i < nodes_[x].value.size(); ++i)
        g[i] += o.grad[0];
    });
  }

  Tensor mse(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mse");
    const Real* av = data(a);
    const Real* bv = data(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
      const double d = double(av[i]) - double(bv[i]);
      acc += d * d;
    }
    const double inv_n = 1.0 / a.numel();
    mults_ += a.numel();
    std::vector<Real> out{static_cast<Real>(acc * inv_n)};
    return make({1}, std::move(out), {a.id, b.id},
                [this, a = a.id, b = b.id, inv_n](const Node& o) {
                  const Real* av = nodes_[a].value.data();
                  const Real* bv = nodes_[b].value.data();
                  const double s = 2.0 * inv_n * o.grad[0];
                  for (std::size_t i = 0; i < nodes_[a].value.size(); ++i) {
                    const Real d = static_cast<Real>(s * (av[i] - bv[i]));
                    if (wants(a)) nodes_[a].grad[i] += d;
                    if (wants(b)) nodes_[b].grad[i] -= d;
                  }
                });
  }

  // ---- differentiation ----

  void backward(const Tensor& loss) {
    if (loss.numel() != 1)
      throw ShapeError("backward requires a scalar loss, got " +
                       shape_str(loss.shape));
    for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), Real(0));
    nodes_[loss.id].grad[0] = Real(1);
    for (int i = loss.id; i >= 0; --i)
      if (!nodes_[i].grad.empty() && nodes_[i].backward)
        nodes_[i].backward(nodes_[i]);
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    std::vector<int> parents;
    std::function<void(const Node&)> backward;
  };

  static constexpr double kInvSqrt2 = 0.70710678118654752440;
  static constexpr double kInvSqrt2Pi = 0.39894228040143267794;

  static std::uint64_t u64(int v) { return static_cast<std::uint64_t>(v); }
  static std::size_t u64s(int a, int b) {
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(b);
  }

  void check_payload(const Shape& shape, std::size_t n) const {
    if (shape_numel(shape) != n)
      throw ShapeError("payload of " + std::to_string(n) +
                       " values does not fill shape " + shape_str(shape));
  }

  const Node& node(const Tensor& t) const {
    if (t.tape != this || t.id < 0 ||
        t.id >= static_cast<int>(nodes_.size()))
      throw ShapeError("tensor handle does not belong to this tape");
    return nodes_[t.id];
  }

  const Real* data(const Tensor& t) const { return node(t).value.data(); }

  bool wants(int id) const { return !nodes_[id].grad.empty(); }

  // Scratch buffer reused by matrix backward rules; accumulate() folds it
  // into the target node's gradient.
  Real* scratch(std::size_t n, std::size_t m) {
    scratch_.assign(n * m, Real(0));
    return scratch_.data();
  }

  void accumulate(int id, std::size_t count) {
    Real* g = nodes_[id].grad.data();
    for (std::size_t i = 0; i < count; ++i) g[i] += scratch_[i];
  }

  Tensor make(const Shape& shape, std::vector<Real> value,
              std::vector<int> parents,
              std::function<void(const Node&)> backward,
              bool force_grad = false) {
    for (const Real v : value)
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericFault("non-finite value produced at tape node " +
                           std::to_string(nodes_.size()));
    // A node participates in backward if it is a parameter leaf or any
    // parent does; pure constants carry no gradient buffer.
    bool grad = force_grad;
    for (const int p : parents) grad = grad || wants(p);
    Node n;
    n.shape = shape;
    n.value = std::move(value);
    if (grad) n.grad.assign(n.value.size(), Real(0));
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    Tensor t;
    t.tape = this;
    t.id = static_cast<int>(nodes_.size()) - 1;
    t.shape = shape;
    return t;
  }

  Tensor add_like(const Tensor& a, const Tensor& b, int sign) {
    require_same(a, b, sign > 0 ? "add" : "sub");
    std::vector<Real> out(a.numel());
    const Real* av = data(a);
    const Real* bv = data(b);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = sign > 0 ? av[i] + bv[i] : av[i] - bv[i];
    return make(a.shape, std::move(out), {a.id, b.id},
                [this, a = a.id, b = b.id, sign](const Node& o) {
                  if (wants(a)) {
                    Real* g = nodes_[a].grad.data();
                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                      g[i] += o.grad[i];
                  }
                  if (wants(b)) {
                    Real* g = nodes_[b].grad.data();
                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                      g[i] += sign > 0 ? o.grad[i] : -o.grad[i];
                  }
                });
  }

  void require_2d(const Tensor& t, const char* what) const {
    if (t.shape.size() != 2)
      throw ShapeError(std::string(what) + " must be 2D, got " +
                       shape_str(t.shape));
  }

  void require_same(const Tensor& a, const Tensor& b, const char* what) const {
    if (a.shape != b.shape)
      throw ShapeError(std::string(what) + " operands differ: " +
                       shape_str(a.shape) + " vs " + shape_str(b.shape));
  }

  std::vector<Node> nodes_;
  std::vector<Real> scratch_;
  std::uint64_t mults_ = 0;
};

using Tensor32 = TensorT<float>;
using Tensor64 = TensorT<double>;
using Tape32 = TapeT<float>;
using Tape64 = TapeT<double>;

extern template class TapeT<float>;
extern template class TapeT<double>;

// ---- checkpoints -------------------------------------------------------
//
// Flat little-endian float32 payload plus a JSON manifest at <path>.json
// listing names, shapes, and byte offsets. Round-trip is bit-exact.

struct NamedParam {
  std::string name;
  Shape shape;
  std::vector<float> value;
};

void save_checkpoint(const std::string& path,
                     const std::vector<NamedParam>& params);
std::vector<NamedParam> load_checkpoint(const std::string& path);

}  // namespace lenscam
