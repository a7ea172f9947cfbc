#include "ash/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ash/errors.hpp"

namespace ash {

namespace {

using Span = std::span<const double>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

enum class Bcast { kEqual, kScalarA, kScalarB };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::kEqual;
  if (b.numel() == 1) return Bcast::kScalarB;
  if (a.numel() == 1) return Bcast::kScalarA;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
}

// Shared driver for the four arithmetic binaries. `f` computes the value,
// `da`/`db` the partial derivatives given (x, y, out).
template <class F, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  const Bcast kind = broadcast_kind(a, b, name);
  const Shape shape = kind == Bcast::kScalarA ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto x = a.data();
  const auto y = b.data();
  auto xi = [kind, x](std::size_t i) { return kind == Bcast::kScalarA ? x[0] : x[i]; };
  auto yi = [kind, y](std::size_t i) { return kind == Bcast::kScalarB ? y[0] : y[i]; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(xi(i), yi(i));
  return record_op(shape, std::move(out), {a, b},
                   [a, b, kind, n, da, db](Span g, Span o) mutable {
                     const auto x = a.data();
                     const auto y = b.data();
                     auto xv = [&](std::size_t i) { return kind == Bcast::kScalarA ? x[0] : x[i]; };
                     auto yv = [&](std::size_t i) { return kind == Bcast::kScalarB ? y[0] : y[i]; };
                     if (a.requires_grad()) {
                       auto ga = a.grad_buffer();
                       for (std::size_t i = 0; i < n; ++i) {
                         ga[kind == Bcast::kScalarA ? 0 : i] += g[i] * da(xv(i), yv(i), o[i]);
                       }
                     }
                     if (b.requires_grad()) {
                       auto gb = b.grad_buffer();
                       for (std::size_t i = 0; i < n; ++i) {
                         gb[kind == Bcast::kScalarB ? 0 : i] += g[i] * db(xv(i), yv(i), o[i]);
                       }
                     }
                   });
}

// Unary elementwise with derivative expressed through (x, out).
template <class F, class D>
Tensor unary_op(const Tensor& a, F f, D d) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return record_op(a.shape(), std::move(out), {a}, [a, d](Span g, Span o) mutable {
    const auto x = a.data();
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * d(x[i], o[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return record_op({m, n}, std::move(out), {a, b}, [a, b, m, k, n](Span g, Span) mutable {
    if (a.requires_grad()) gemm_nt(g.data(), b.data().data(), a.grad_buffer().data(), m, n, k);
    if (b.requires_grad()) gemm_tn(a.data().data(), g.data(), b.grad_buffer().data(), m, k, n);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return record_op({m, n}, std::move(out), {a, b}, [a, b, m, k, n](Span g, Span) mutable {
    // dA = G B, dB = G^T A
    if (a.requires_grad()) gemm_nn(g.data(), b.data().data(), a.grad_buffer().data(), m, n, k);
    if (b.requires_grad()) gemm_tn(g.data(), a.data().data(), b.grad_buffer().data(), m, n, k);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  if (bias.defined() && bias.numel() != n) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  if (bias.defined()) {
    const auto bv = bias.data();
    for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * n);
  }
  gemm_nn(x.data().data(), w.data().data(), out.data(), m, k, n);
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return record_op({m, n}, std::move(out), inputs, [x, w, bias, m, k, n](Span g, Span) mutable {
    if (x.requires_grad()) gemm_nt(g.data(), w.data().data(), x.grad_buffer().data(), m, n, k);
    if (w.requires_grad()) gemm_tn(x.data().data(), g.data(), w.grad_buffer().data(), m, k, n);
    if (bias.defined() && bias.requires_grad()) {
      auto gb = bias.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto x = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return record_op({n, m}, std::move(out), {a}, [a, m, n](Span g, Span) mutable {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(
      a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor square(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        // Split by sign so exp never overflows.
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double o) { return o * (1.0 - o); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); }, [](double, double o) { return 1.0 - o * o; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return record_op({1}, {s}, {a}, [a](Span g, Span) mutable {
    for (auto& v : a.grad_buffer()) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) s += v;
  return record_op({1}, {s / n}, {a}, [a, n](Span g, Span) mutable {
    for (auto& v : a.grad_buffer()) v += g[0] / n;
  });
}

Tensor softmax_rows(const Tensor& x, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("softmax_rows: temperature must be positive, got " + std::to_string(temperature));
  }
  require_rank(x, 2, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto in = x.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data() + i * n;
    double* o = out.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp((row[j] - mx) / temperature);
      z += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return record_op(x.shape(), std::move(out), {x}, [x, m, n, temperature](Span g, Span o) mutable {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * o[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        gx[i * n + j] += o[i * n + j] * (g[i * n + j] - dot) / temperature;
      }
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank(x, 2, "log_softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto in = x.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return record_op(x.shape(), std::move(out), {x}, [x, m, n](Span g, Span o) mutable {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += g[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] - std::exp(o[i * n + j]) * gs;
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  const auto in = logits.data();
  std::vector<double> probs(m * n, 0.0);
  std::vector<int> tgt(targets.begin(), targets.end());
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (tgt[i] < 0) continue;
    if (static_cast<std::size_t>(tgt[i]) >= n) {
      throw ParameterError("cross_entropy: target " + std::to_string(tgt[i]) + " out of range for " +
                           std::to_string(n) + " classes");
    }
    const double* row = in.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] = std::exp(row[j] - lse);
    total += lse - row[tgt[i]];
    ++count;
  }
  const double value = count ? total / static_cast<double>(count) : 0.0;
  return record_op({1}, {value}, {logits},
                   [logits, probs = std::move(probs), tgt = std::move(tgt), m, n, count](Span g, Span) mutable {
                     if (!count) return;
                     auto gl = logits.grad_buffer();
                     const double w = g[0] / static_cast<double>(count);
                     for (std::size_t i = 0; i < m; ++i) {
                       if (tgt[i] < 0) continue;
                       for (std::size_t j = 0; j < n; ++j) gl[i * n + j] += w * probs[i * n + j];
                       gl[i * n + static_cast<std::size_t>(tgt[i])] -= w;
                     }
                   });
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto in = x.data();
  std::vector<double> out(m * n, 0.0);
  std::vector<double> norms(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += in[i * n + j] * in[i * n + j];
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = in[i * n + j] / norms[i];
  }
  return record_op(x.shape(), std::move(out), {x}, [x, norms = std::move(norms), m, n](Span g, Span o) mutable {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      if (norms[i] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * o[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += (g[i * n + j] - o[i * n + j] * dot) / norms[i];
    }
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm_rows: affine params " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match " + shape_str(x.shape()));
  }
  const auto in = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<double> xhat(m * n), inv_std(m), out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = in.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = gm[j] * xhat[i * n + j] + bt[j];
    }
  }
  return record_op(x.shape(), std::move(out), {x, gamma, beta},
                   [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), m, n](Span g, Span) mutable {
                     const auto gm = gamma.data();
                     if (gamma.requires_grad() || beta.requires_grad()) {
                       std::span<double> gg, gb;
                       if (gamma.requires_grad()) gg = gamma.grad_buffer();
                       if (beta.requires_grad()) gb = beta.grad_buffer();
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) {
                           if (!gg.empty()) gg[j] += g[i * n + j] * xhat[i * n + j];
                           if (!gb.empty()) gb[j] += g[i * n + j];
                         }
                     }
                     if (!x.requires_grad()) return;
                     auto gx = x.grad_buffer();
                     const double inv_n = 1.0 / static_cast<double>(n);
                     for (std::size_t i = 0; i < m; ++i) {
                       double s1 = 0.0, s2 = 0.0;
                       for (std::size_t j = 0; j < n; ++j) {
                         const double d = g[i * n + j] * gm[j];
                         s1 += d;
                         s2 += d * xhat[i * n + j];
                       }
                       for (std::size_t j = 0; j < n; ++j) {
                         const double d = g[i * n + j] * gm[j];
                         gx[i * n + j] += inv_std[i] * (d - s1 * inv_n - xhat[i * n + j] * s2 * inv_n);
                       }
                     }
                   });
}

Tensor row_block_mean(const Tensor& x, std::size_t block) {
  require_rank(x, 2, "row_block_mean");
  const std::size_t rows = x.dim(0), n = x.dim(1);
  if (block == 0 || rows % block != 0) {
    throw DimensionError("row_block_mean: " + std::to_string(rows) + " rows not divisible into blocks of " +
                         std::to_string(block));
  }
  const std::size_t b = rows / block;
  const auto in = x.data();
  std::vector<double> out(b * n, 0.0);
  const double w = 1.0 / static_cast<double>(block);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[(r / block) * n + j] += in[r * n + j];
  for (auto& v : out) v *= w;
  return record_op({b, n}, std::move(out), {x}, [x, block, rows, n, w](Span g, Span) mutable {
    auto gx = x.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += w * g[(r / block) * n + j];
  });
}

// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  const auto d = a.data();
  return record_op(std::move(shape), std::vector<double>(d.begin(), d.end()), {a},
                   [a](Span g, Span) mutable {
                     auto ga = a.grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank(a, 2, "gather_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto in = a.data();
  std::vector<double> out(rows.size() * n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " out of range for " +
                           shape_str(a.shape()));
    }
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(rows[r] * n), n, out.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return record_op({rows.size(), n}, std::move(out), {a}, [a, idx = std::move(idx), n](Span g, Span) mutable {
    auto ga = a.grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) ga[idx[r] * n + j] += g[r * n + j];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts.front().dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return record_op({rows, n}, std::move(out), parts, [parts](Span g, Span) mutable {
    std::size_t offset = 0;
    for (auto& p : parts) {
      const std::size_t len = p.numel();
      if (p.requires_grad()) {
        auto gp = p.grad_buffer();
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_rows");
  if (begin > end || end > a.dim(0)) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t n = a.dim(1);
  const auto in = a.data();
  std::vector<double> out(in.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          in.begin() + static_cast<std::ptrdiff_t>(end * n));
  return record_op({end - begin, n}, std::move(out), {a}, [a, begin, n](Span g, Span) mutable {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
  });
}

// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dOptions opts) {
  require_rank(input, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  const std::size_t b = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t s = opts.stride, p = opts.padding;
  if (kernel.dim(1) != c) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " expects " +
                         std::to_string(kernel.dim(1)) + " channels, input " + shape_str(input.shape()));
  }
  if (s == 0) throw ParameterError("conv2d: stride must be positive");
  if (kh > h + 2 * p || kw > w + 2 * p) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                         shape_str(input.shape()));
  }
  const std::size_t oh = (h + 2 * p - kh) / s + 1;
  const std::size_t ow = (w + 2 * p - kw) / s + 1;
  const auto x = input.data();
  const auto k = kernel.data();
  std::vector<double> out(b * o * oh * ow, 0.0);

  // Visits every (output, input, weight) triple once; used for forward and
  // both backward products so the index arithmetic lives in one place.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t ic = 0; ic < c; ++ic)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::size_t kidx = ((oc * c + ic) * kh + ky) * kw + kx;
              for (std::size_t oy = 0; oy < oh; ++oy) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                const std::size_t obase = ((n * o + oc) * oh + oy) * ow;
                const std::size_t ibase = ((n * c + ic) * h + static_cast<std::size_t>(iy)) * w;
                for (std::size_t ox = 0; ox < ow; ++ox) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  fn(obase + ox, ibase + static_cast<std::size_t>(ix), kidx);
                }
              }
            }
  };

  for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) { out[oi] += x[ii] * k[ki]; });
  return record_op({b, o, oh, ow}, std::move(out), {input, kernel},
                   [input, kernel, for_each_tap](Span g, Span) mutable {
                     const auto x = input.data();
                     const auto k = kernel.data();
                     if (input.requires_grad()) {
                       auto gx = input.grad_buffer();
                       for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) { gx[ii] += g[oi] * k[ki]; });
                     }
                     if (kernel.requires_grad()) {
                       auto gk = kernel.grad_buffer();
                       for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) { gk[ki] += g[oi] * x[ii]; });
                     }
                   });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 4, "add_channel_bias");
  const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (bias.numel() != c) {
    throw DimensionError("add_channel_bias: bias " + shape_str(bias.shape()) + " for input " + shape_str(x.shape()));
  }
  const auto in = x.data();
  const auto bv = bias.data();
  std::vector<double> out(in.size());
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) out[(n * c + ch) * hw + i] = in[(n * c + ch) * hw + i] + bv[ch];
  return record_op(x.shape(), std::move(out), {x, bias}, [x, bias, b, c, hw](Span g, Span) mutable {
    if (x.requires_grad()) {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.grad_buffer();
      for (std::size_t n = 0; n < b; ++n)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < hw; ++i) gb[ch] += g[(n * c + ch) * hw + i];
    }
  });
}

Tensor avg_pool2d(const Tensor& x, std::size_t k) {
  require_rank(x, 4, "avg_pool2d");
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k == 0 || h % k != 0 || w % k != 0) {
    throw DimensionError("avg_pool2d: window " + std::to_string(k) + " does not tile " + shape_str(x.shape()));
  }
  const std::size_t oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  const auto in = x.data();
  std::vector<double> out(b * c * oh * ow, 0.0);
  for (std::size_t plane = 0; plane < b * c; ++plane)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        out[(plane * oh + y / k) * ow + xx / k] += in[(plane * h + y) * w + xx] * inv;
  return record_op({b, c, oh, ow}, std::move(out), {x}, [x, b, c, h, w, k, oh, ow, inv](Span g, Span) mutable {
    auto gx = x.grad_buffer();
    for (std::size_t plane = 0; plane < b * c; ++plane)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          gx[(plane * h + y) * w + xx] += g[(plane * oh + y / k) * ow + xx / k] * inv;
  });
}

Tensor patch_tokens(const Tensor& x) {
  require_rank(x, 4, "patch_tokens");
  const std::size_t b = x.dim(0), c = x.dim(1), gh = x.dim(2), gw = x.dim(3);
  const std::size_t n = gh * gw;
  const auto in = x.data();
  std::vector<double> out(b * n * c);
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < n; ++p) out[(s * n + p) * c + ch] = in[(s * c + ch) * n + p];
  return record_op({b * n, c}, std::move(out), {x}, [x, b, c, n](Span g, Span) mutable {
    auto gx = x.grad_buffer();
    for (std::size_t s = 0; s < b; ++s)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < n; ++p) gx[(s * c + ch) * n + p] += g[(s * n + p) * c + ch];
  });
}

// ---------------------------------------------------------------------------

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch,
                            std::size_t seq, std::size_t heads, std::span<const std::uint8_t> key_mask,
                            AttentionProbs* probs_out) {
  require_rank(q, 2, "multi_head_attention");
  const std::size_t rows = batch * seq;
  const std::size_t d = q.dim(1);
  if (q.dim(0) != rows || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("multi_head_attention: q/k/v " + shape_str(q.shape()) + "/" + shape_str(k.shape()) +
                         "/" + shape_str(v.shape()) + " inconsistent with batch " + std::to_string(batch) +
                         " x seq " + std::to_string(seq));
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("multi_head_attention: model dim " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  if (key_mask.size() != rows) {
    throw DimensionError("multi_head_attention: key mask length " + std::to_string(key_mask.size()) +
                         " != " + std::to_string(rows));
  }
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto qd = q.data();
  const auto kd = k.data();
  const auto vd = v.data();
  std::vector<double> probs(batch * heads * seq * seq, 0.0);
  std::vector<double> out(rows * d, 0.0);
  std::vector<std::uint8_t> mask(key_mask.begin(), key_mask.end());

  for (std::size_t b = 0; b < batch; ++b) {
    bool any = false;
    for (std::size_t j = 0; j < seq; ++j) any = any || mask[b * seq + j];
    if (!any) throw ContractError("multi_head_attention: sequence " + std::to_string(b) + " has no unmasked key");
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < seq; ++i) {
        double* p = probs.data() + ((b * heads + h) * seq + i) * seq;
        const double* qi = qd.data() + (b * seq + i) * d + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < seq; ++j) {
          if (!mask[b * seq + j]) {
            p[j] = -std::numeric_limits<double>::infinity();
            continue;
          }
          const double* kj = kd.data() + (b * seq + j) * d + h * dh;
          double s = 0.0;
          for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
          p[j] = s * inv_sqrt;
          mx = std::max(mx, p[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < seq; ++j) {
          p[j] = mask[b * seq + j] ? std::exp(p[j] - mx) : 0.0;
          z += p[j];
        }
        double* oi = out.data() + (b * seq + i) * d + h * dh;
        for (std::size_t j = 0; j < seq; ++j) {
          p[j] /= z;
          if (p[j] == 0.0) continue;
          const double* vj = vd.data() + (b * seq + j) * d + h * dh;
          for (std::size_t t = 0; t < dh; ++t) oi[t] += p[j] * vj[t];
        }
      }
    }
  }
  if (probs_out) {
    probs_out->batch = batch;
    probs_out->heads = heads;
    probs_out->seq = seq;
    probs_out->values = probs;
  }

  return record_op(
      q.shape(), std::move(out), {q, k, v},
      [q, k, v, probs = std::move(probs), batch, seq, heads, d, dh, inv_sqrt](Span g, Span) mutable {
        const auto qd = q.data();
        const auto kd = k.data();
        const auto vd = v.data();
        std::span<double> gq, gk, gv;
        if (q.requires_grad()) gq = q.grad_buffer();
        if (k.requires_grad()) gk = k.grad_buffer();
        if (v.requires_grad()) gv = v.grad_buffer();
        std::vector<double> dp(seq);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < seq; ++i) {
              const double* p = probs.data() + ((b * heads + h) * seq + i) * seq;
              const double* gi = g.data() + (b * seq + i) * d + h * dh;
              double dot = 0.0;
              for (std::size_t j = 0; j < seq; ++j) {
                dp[j] = 0.0;
                if (p[j] == 0.0) continue;
                const double* vj = vd.data() + (b * seq + j) * d + h * dh;
                for (std::size_t t = 0; t < dh; ++t) dp[j] += gi[t] * vj[t];
                dot += p[j] * dp[j];
                if (!gv.empty()) {
                  double* gvj = gv.data() + (b * seq + j) * d + h * dh;
                  for (std::size_t t = 0; t < dh; ++t) gvj[t] += p[j] * gi[t];
                }
              }
              const double* qi = qd.data() + (b * seq + i) * d + h * dh;
              for (std::size_t j = 0; j < seq; ++j) {
                if (p[j] == 0.0) continue;
                const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
                const double* kj = kd.data() + (b * seq + j) * d + h * dh;
                if (!gq.empty()) {
                  double* gqi = gq.data() + (b * seq + i) * d + h * dh;
                  for (std::size_t t = 0; t < dh; ++t) gqi[t] += ds * kj[t];
                }
                if (!gk.empty()) {
                  double* gkj = gk.data() + (b * seq + j) * d + h * dh;
                  for (std::size_t t = 0; t < dh; ++t) gkj[t] += ds * qi[t];
                }
              }
            }
      });
}

}  // namespace ash
