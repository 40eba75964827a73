#include "sert/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "sert/errors.hpp"

namespace sert::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void record(std::vector<Tensor> inputs, const Tensor& out, Tape::BackwardFn fn) {
  active_tape()->record(std::move(inputs), out, std::move(fn));
}

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B, double* C) {
  for (std::size_t i = 0; i < M; ++i) {
    double* c = C + i * N;
    const double* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = a[k];
      const double* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B, double* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    double* c = C + i * N;
    for (std::size_t j = 0; j < N; ++j) {
      const double* b = B + j * K;
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += a[k] * b[k];
      c[j] += s;
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B, double* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    const double* b = B + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const double aik = a[k];
      double* c = C + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

}  // namespace

std::uint64_t& mac_counter() {
  thread_local std::uint64_t counter = 0;
  return counter;
}

// --- elementwise --------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (needs_record({&a, &b})) {
    record({a, b}, out, [a, b](std::span<const double> g) {
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (needs_record({&a, &b})) {
    record({a, b}, out, [a, b](std::span<const double> g) {
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (needs_record({&a, &b})) {
    record({a, b}, out, [a, b](std::span<const double> g) {
      auto x = a.data(), y = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * s;
  if (needs_record({&a})) {
    record({a}, out, [a, s](std::span<const double> g) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.ndim() != 1 || x.ndim() == 0 || x.shape().back() != bias.size()) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                         shape_str(x.shape()));
  }
  const std::size_t n = bias.size();
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data(), bv = bias.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] + bv[i % n];
  if (needs_record({&x, &bias})) {
    record({x, bias}, out, [x, bias, n](std::span<const double> g) {
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
      }
    });
  }
  return out;
}

Tensor mul_rows(const Tensor& x, const Tensor& g) {
  if (x.ndim() != 3 || g.ndim() != 2 || x.dim(0) != g.dim(0) || x.dim(2) != g.dim(1)) {
    throw DimensionError("mul_rows: expected x [B,T,C] and g [B,C], got " + shape_str(x.shape()) + " and " +
                         shape_str(g.shape()));
  }
  const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data(), gv = g.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) o[(b * T + t) * C + c] = xv[(b * T + t) * C + c] * gv[b * C + c];
  if (needs_record({&x, &g})) {
    record({x, g}, out, [x, g, B, T, C](std::span<const double> go) {
      auto xv = x.data(), gv = g.data();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) gx[(b * T + t) * C + c] += go[(b * T + t) * C + c] * gv[b * C + c];
      }
      if (g.requires_grad()) {
        auto gg = g.grad_buffer();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) gg[b * C + c] += go[(b * T + t) * C + c] * xv[(b * T + t) * C + c];
      }
    });
  }
  return out;
}

// --- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  auto fail = [&](const std::string& why) {
    return DimensionError("matmul: " + why + " (a " + shape_str(a.shape()) + ", b " + shape_str(b.shape()) +
                          (transpose_b ? ", b transposed)" : ")"));
  };
  if (a.ndim() < 2 || b.ndim() < 2) throw fail("operands need at least two axes");
  const std::size_t m = a.dim(a.ndim() - 2), k = a.dim(a.ndim() - 1);
  const std::size_t bk = transpose_b ? b.dim(b.ndim() - 1) : b.dim(b.ndim() - 2);
  const std::size_t n = transpose_b ? b.dim(b.ndim() - 2) : b.dim(b.ndim() - 1);
  if (bk != k) throw fail("inner dimensions disagree");

  const bool shared_b = b.ndim() == 2;
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < a.ndim(); ++i) batch *= a.dim(i);
  if (!shared_b) {
    if (b.ndim() != a.ndim()) throw fail("batched operands need equal rank");
    for (std::size_t i = 0; i + 2 < a.ndim(); ++i)
      if (a.dim(i) != b.dim(i)) throw fail("batch extents disagree");
  }

  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  Tensor out(out_shape);
  mac_counter() += static_cast<std::uint64_t>(batch) * m * n * k;

  // A shared right operand folds the batch into the row count.
  const std::size_t groups = shared_b ? 1 : batch;
  const std::size_t rows = shared_b ? batch * m : m;
  const double* av = a.data().data();
  const double* bv = b.data().data();
  double* ov = out.mutable_data().data();
  for (std::size_t g = 0; g < groups; ++g) {
    const double* ag = av + g * rows * k;
    const double* bg = bv + g * k * n;
    double* og = ov + g * rows * n;
    if (transpose_b)
      gemm_nt(rows, n, k, ag, bg, og);
    else
      gemm_nn(rows, n, k, ag, bg, og);
  }

  if (needs_record({&a, &b})) {
    record({a, b}, out, [a, b, transpose_b, groups, rows, n, k](std::span<const double> go) {
      const double* av = a.data().data();
      const double* bv = b.data().data();
      const double* gv = go.data();
      double* ga = a.requires_grad() ? a.grad_buffer().data() : nullptr;
      double* gb = b.requires_grad() ? b.grad_buffer().data() : nullptr;
      for (std::size_t g = 0; g < groups; ++g) {
        const double* ag = av + g * rows * k;
        const double* bg = bv + g * k * n;
        const double* dg = gv + g * rows * n;
        if (ga) {
          // dA = dC * B^T  (or dC * B when b is stored transposed)
          if (transpose_b)
            gemm_nn(rows, k, n, dg, bg, ga + g * rows * k);
          else
            gemm_nt(rows, k, n, dg, bg, ga + g * rows * k);
        }
        if (gb) {
          // dB = A^T * dC  (or dC^T * A when transposed)
          if (transpose_b)
            gemm_tn(rows, k, n, dg, ag, gb + g * k * n);
          else
            gemm_tn(rows, n, k, ag, dg, gb + g * k * n);
        }
      }
    });
  }
  return out;
}

// --- softmax / norm / activations -----------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.ndim()) throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  x.check_finite("softmax input");
  const std::size_t n = x.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);

  Tensor out(x.shape());
  auto xv = x.data();
  auto o = out.mutable_data();
  for (std::size_t p = 0; p < outer; ++p) {
    for (std::size_t q = 0; q < inner; ++q) {
      const std::size_t base = p * n * inner + q;
      double mx = xv[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xv[base + i * inner]);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(xv[base + i * inner] - mx);
        o[base + i * inner] = e;
        s += e;
      }
      const double inv = 1.0 / s;
      for (std::size_t i = 0; i < n; ++i) o[base + i * inner] *= inv;
    }
  }
  if (needs_record({&x})) {
    record({x}, out, [x, out, n, outer, inner](std::span<const double> go) {
      auto y = out.data();
      auto gx = x.grad_buffer();
      for (std::size_t p = 0; p < outer; ++p) {
        for (std::size_t q = 0; q < inner; ++q) {
          const std::size_t base = p * n * inner + q;
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) dot += go[base + i * inner] * y[base + i * inner];
          for (std::size_t i = 0; i < n; ++i) gx[base + i * inner] += y[base + i * inner] * (go[base + i * inner] - dot);
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  if (x.ndim() == 0 || gamma.ndim() != 1 || beta.ndim() != 1 || gamma.size() != x.shape().back() ||
      beta.size() != x.shape().back()) {
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.size() / c;
  Tensor out(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * c;
    double mu = 0.0;
    for (std::size_t i = 0; i < c; ++i) mu += row[i];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < c; ++i) {
      xhat[r * c + i] = (row[i] - mu) * is;
      o[r * c + i] = xhat[r * c + i] * gv[i] + bv[i];
    }
  }
  if (needs_record({&x, &gamma, &beta})) {
    record({x, gamma, beta}, out,
           [x, gamma, beta, c, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::span<const double> go) {
             auto gv = gamma.data();
             if (gamma.requires_grad()) {
               auto gg = gamma.grad_buffer();
               for (std::size_t r = 0; r < rows; ++r)
                 for (std::size_t i = 0; i < c; ++i) gg[i] += go[r * c + i] * xhat[r * c + i];
             }
             if (beta.requires_grad()) {
               auto gb = beta.grad_buffer();
               for (std::size_t r = 0; r < rows; ++r)
                 for (std::size_t i = 0; i < c; ++i) gb[i] += go[r * c + i];
             }
             if (x.requires_grad()) {
               auto gx = x.grad_buffer();
               std::vector<double> dxhat(c);
               for (std::size_t r = 0; r < rows; ++r) {
                 double m1 = 0.0, m2 = 0.0;
                 for (std::size_t i = 0; i < c; ++i) {
                   dxhat[i] = go[r * c + i] * gv[i];
                   m1 += dxhat[i];
                   m2 += dxhat[i] * xhat[r * c + i];
                 }
                 m1 /= static_cast<double>(c);
                 m2 /= static_cast<double>(c);
                 for (std::size_t i = 0; i < c; ++i)
                   gx[r * c + i] += inv_std[r] * (dxhat[i] - m1 - xhat[r * c + i] * m2);
               }
             }
           });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  auto xv = x.data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
  if (needs_record({&x})) {
    record({x}, out, [x](std::span<const double> go) {
      auto xv = x.data();
      auto gx = x.grad_buffer();
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double v = xv[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        gx[i] += go[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  auto xv = x.data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  if (needs_record({&x})) {
    record({x}, out, [x, out](std::span<const double> go) {
      auto y = out.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * y[i] * (1.0 - y[i]);
    });
  }
  return out;
}

// --- reductions ---------------------------------------------------------------

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  if (axis >= x.ndim()) throw DimensionError("mean_axis: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  const std::size_t n = x.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
  Shape s;
  for (std::size_t i = 0; i < x.ndim(); ++i)
    if (i != axis) s.push_back(x.dim(i));
  if (s.empty()) s.push_back(1);
  Tensor out(s);
  auto xv = x.data();
  auto o = out.mutable_data();
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t p = 0; p < outer; ++p) {
    for (std::size_t q = 0; q < inner; ++q) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += xv[(p * n + i) * inner + q];
      o[p * inner + q] = acc * inv;
    }
  }
  if (needs_record({&x})) {
    record({x}, out, [x, n, outer, inner, inv](std::span<const double> go) {
      auto gx = x.grad_buffer();
      for (std::size_t p = 0; p < outer; ++p)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t q = 0; q < inner; ++q) gx[(p * n + i) * inner + q] += go[p * inner + q] * inv;
    });
  }
  return out;
}

Tensor average_pool_spatial(const Tensor& x) {
  if (x.ndim() < 3) throw DimensionError("average_pool_spatial: expected [..., h, w, c], got " + shape_str(x.shape()));
  const std::size_t nd = x.ndim();
  const std::size_t h = x.dim(nd - 3), w = x.dim(nd - 2), c = x.dim(nd - 1);
  Shape lead(x.shape().begin(), x.shape().end() - 3);
  Shape flat = lead;
  flat.push_back(h * w);
  flat.push_back(c);
  Tensor pooled = mean_axis(reshape(x, flat), lead.size());
  Shape out_shape = lead;
  out_shape.insert(out_shape.end(), {1, 1, c});
  return reshape(pooled, out_shape);
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (needs_record({&x})) {
    record({x}, out, [x](std::span<const double> go) {
      auto gx = x.grad_buffer();
      for (auto& g : gx) g += go[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "mse_loss");
  Tensor d = sub(prediction, target);
  return mean(mul(d, d));
}

// --- layout -------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto xv = x.data();
  Tensor out(std::move(shape), std::vector<double>(xv.begin(), xv.end()));
  if (needs_record({&x})) {
    record({x}, out, [x](std::span<const double> go) {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t nd = x.ndim();
  if (perm.size() != nd) throw DimensionError("permute: permutation rank does not match " + shape_str(x.shape()));
  std::vector<bool> seen(nd, false);
  for (auto p : perm) {
    if (p >= nd || seen[p]) throw DimensionError("permute: invalid permutation for " + shape_str(x.shape()));
    seen[p] = true;
  }
  Shape out_shape(nd);
  for (std::size_t i = 0; i < nd; ++i) out_shape[i] = x.dim(perm[i]);
  std::vector<std::size_t> in_strides(nd, 1);
  for (std::size_t i = nd - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * x.dim(i + 1);
  // source offset for each destination element, walked with an odometer
  std::vector<std::size_t> src(x.size());
  {
    std::vector<std::size_t> idx(nd, 0);
    std::size_t off = 0;
    for (std::size_t lin = 0; lin < src.size(); ++lin) {
      src[lin] = off;
      for (std::size_t ax = nd; ax-- > 0;) {
        ++idx[ax];
        off += in_strides[perm[ax]];
        if (idx[ax] < out_shape[ax]) break;
        off -= in_strides[perm[ax]] * out_shape[ax];
        idx[ax] = 0;
      }
    }
  }
  Tensor out(out_shape);
  auto xv = x.data();
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[src[i]];
  if (needs_record({&x})) {
    record({x}, out, [x, src = std::move(src)](std::span<const double> go) {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < go.size(); ++i) gx[src[i]] += go[i];
    });
  }
  return out;
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.ndim() != b.ndim() || a.ndim() == 0 ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    throw DimensionError("concat_last: incompatible " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t ca = a.shape().back(), cb = b.shape().back(), rows = a.size() / ca;
  Shape s = a.shape();
  s.back() = ca + cb;
  Tensor out(s);
  auto o = out.mutable_data();
  auto av = a.data(), bv = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * ca, ca, o.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, o.data() + r * (ca + cb) + ca);
  }
  if (needs_record({&a, &b})) {
    record({a, b}, out, [a, b, ca, cb, rows](std::span<const double> go) {
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < ca; ++i) ga[r * ca + i] += go[r * (ca + cb) + i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < cb; ++i) gb[r * cb + i] += go[r * (ca + cb) + ca + i];
      }
    });
  }
  return out;
}

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.ndim() == 0 || begin >= end || end > x.shape().back()) {
    throw DimensionError("slice_last: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t c = x.shape().back(), w = end - begin, rows = x.size() / c;
  Shape s = x.shape();
  s.back() = w;
  Tensor out(s);
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.data() + r * c + begin, w, o.data() + r * w);
  if (needs_record({&x})) {
    record({x}, out, [x, c, w, rows, begin](std::span<const double> go) {
      auto gx = x.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < w; ++i) gx[r * c + begin + i] += go[r * w + i];
    });
  }
  return out;
}

Tensor gather_last(const Tensor& x, std::span<const std::size_t> index) {
  if (x.ndim() == 0 || index.empty()) throw DimensionError("gather_last: empty index or scalar input");
  const std::size_t c = x.shape().back(), w = index.size(), rows = x.size() / c;
  for (auto i : index)
    if (i >= c) throw DimensionError("gather_last: index " + std::to_string(i) + " out of range for " + shape_str(x.shape()));
  Shape s = x.shape();
  s.back() = w;
  Tensor out(s);
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < w; ++j) o[r * w + j] = xv[r * c + index[j]];
  if (needs_record({&x})) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    record({x}, out, [x, c, w, rows, idx = std::move(idx)](std::span<const double> go) {
      auto gx = x.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j) gx[r * c + idx[j]] += go[r * w + j];
    });
  }
  return out;
}

Tensor gather_hw(const Tensor& x, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
  if (x.ndim() != 4) throw DimensionError("gather_hw: expected [N,H,W,C], got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t Ho = rows.size(), Wo = cols.size();
  if (Ho == 0 || Wo == 0) throw DimensionError("gather_hw: empty row or column map");
  for (auto r : rows)
    if (r >= H) throw DimensionError("gather_hw: row index out of range for " + shape_str(x.shape()));
  for (auto c : cols)
    if (c >= W) throw DimensionError("gather_hw: column index out of range for " + shape_str(x.shape()));
  Tensor out(Shape{N, Ho, Wo, C});
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j)
        std::copy_n(xv.data() + ((n * H + rows[i]) * W + cols[j]) * C, C, o.data() + ((n * Ho + i) * Wo + j) * C);
  if (needs_record({&x})) {
    std::vector<std::size_t> rv(rows.begin(), rows.end()), cv(cols.begin(), cols.end());
    record({x}, out, [x, N, H, W, C, rv = std::move(rv), cv = std::move(cv)](std::span<const double> go) {
      auto gx = x.grad_buffer();
      const std::size_t Ho = rv.size(), Wo = cv.size();
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < Ho; ++i)
          for (std::size_t j = 0; j < Wo; ++j) {
            double* dst = gx.data() + ((n * H + rv[i]) * W + cv[j]) * C;
            const double* srcg = go.data() + ((n * Ho + i) * Wo + j) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] += srcg[c];
          }
    });
  }
  return out;
}

Tensor add_position_bias(const Tensor& scores, const Tensor& table, std::span<const std::size_t> index) {
  if (scores.ndim() != 4 || table.ndim() != 2 || scores.dim(1) != table.dim(0) || scores.dim(2) != scores.dim(3) ||
      index.size() != scores.dim(2) * scores.dim(3)) {
    throw DimensionError("add_position_bias: scores " + shape_str(scores.shape()) + ", table " +
                         shape_str(table.shape()) + ", index length " + std::to_string(index.size()));
  }
  const std::size_t B = scores.dim(0), heads = scores.dim(1), TT = index.size(), R = table.dim(1);
  for (auto i : index)
    if (i >= R) throw DimensionError("add_position_bias: index out of table range");
  Tensor out(scores.shape());
  auto o = out.mutable_data();
  auto sv = scores.data(), tv = table.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t base = (b * heads + h) * TT;
      for (std::size_t p = 0; p < TT; ++p) o[base + p] = sv[base + p] + tv[h * R + index[p]];
    }
  if (needs_record({&scores, &table})) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    record({scores, table}, out, [scores, table, B, heads, TT, R, idx = std::move(idx)](std::span<const double> go) {
      if (scores.requires_grad()) {
        auto gs = scores.grad_buffer();
        for (std::size_t i = 0; i < go.size(); ++i) gs[i] += go[i];
      }
      if (table.requires_grad()) {
        auto gt = table.grad_buffer();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t base = (b * heads + h) * TT;
            for (std::size_t p = 0; p < TT; ++p) gt[h * R + idx[p]] += go[base + p];
          }
      }
    });
  }
  return out;
}

// --- convolution --------------------------------------------------------------

Tensor conv2d_3x3(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.ndim() != 4 || weight.ndim() != 4 || weight.dim(0) != 3 || weight.dim(1) != 3 || weight.dim(2) != x.dim(3)) {
    throw DimensionError("conv2d_3x3: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3), Cout = weight.dim(3);
  if (bias.defined() && (bias.ndim() != 1 || bias.size() != Cout)) {
    throw DimensionError("conv2d_3x3: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(Cout) +
                         " output channels");
  }
  const std::size_t K = 9 * Cin, M = N * H * W;
  // im2col: cols[(n,i,j), (ky,kx,ci)], zero outside the image
  std::vector<double> cols(M * K, 0.0);
  auto xv = x.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        double* row = cols.data() + ((n * H + i) * W + j) * K;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i + ky) - 1;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j + kx) - 1;
            if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(W)) continue;
            std::copy_n(xv.data() + ((n * H + si) * W + sj) * Cin, Cin, row + (ky * 3 + kx) * Cin);
          }
        }
      }
  Tensor out(Shape{N, H, W, Cout});
  auto o = out.mutable_data();
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::size_t r = 0; r < M; ++r) std::copy_n(bv.data(), Cout, o.data() + r * Cout);
  }
  gemm_nn(M, Cout, K, cols.data(), weight.data().data(), o.data());
  mac_counter() += static_cast<std::uint64_t>(M) * K * Cout;

  if (needs_record({&x, &weight, &bias})) {
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    record(std::move(inputs), out,
           [x, weight, bias, N, H, W, Cin, Cout, K, M, cols = std::move(cols)](std::span<const double> go) {
             if (bias.defined() && bias.requires_grad()) {
               auto gb = bias.grad_buffer();
               for (std::size_t r = 0; r < M; ++r)
                 for (std::size_t c = 0; c < Cout; ++c) gb[c] += go[r * Cout + c];
             }
             if (weight.requires_grad()) gemm_tn(M, Cout, K, cols.data(), go.data(), weight.grad_buffer().data());
             if (x.requires_grad()) {
               std::vector<double> dcols(M * K, 0.0);
               gemm_nt(M, K, Cout, go.data(), weight.data().data(), dcols.data());
               auto gx = x.grad_buffer();
               for (std::size_t n = 0; n < N; ++n)
                 for (std::size_t i = 0; i < H; ++i)
                   for (std::size_t j = 0; j < W; ++j) {
                     const double* row = dcols.data() + ((n * H + i) * W + j) * K;
                     for (std::size_t ky = 0; ky < 3; ++ky) {
                       const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i + ky) - 1;
                       if (si < 0 || si >= static_cast<std::ptrdiff_t>(H)) continue;
                       for (std::size_t kx = 0; kx < 3; ++kx) {
                         const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j + kx) - 1;
                         if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(W)) continue;
                         double* dst = gx.data() + ((n * H + si) * W + sj) * Cin;
                         const double* src = row + (ky * 3 + kx) * Cin;
                         for (std::size_t c = 0; c < Cin; ++c) dst[c] += src[c];
                       }
                     }
                   }
             }
           });
  }
  return out;
}

}  // namespace sert::ops
