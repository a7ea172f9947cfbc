#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>

#include "acceptance.hpp"
#include "ash/fusion.hpp"
#include "ash/harness/trainer.hpp"
#include "ash/objectives.hpp"
#include "ash/ops.hpp"
#include "ash/scheduler.hpp"
#include "ash/snn.hpp"
#include "ash/spike_codec.hpp"
#include "ash/transformer.hpp"
#include "gradcheck.hpp"
#include "lif_reference.hpp"

namespace ash::acceptance {

namespace {

using testing::GradCheckResult;
using testing::grad_check;
using testing::probe_like;
using testing::probe_sum;
using testing::random_leaf;

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// One differentiable operation; each call builds a fresh random instance.
struct GradCase {
  const char* name;
  std::function<GradCheckResult(Rng&)> check;
};

Tensor positive_leaf(Shape shape, Rng& rng) { return random_leaf(std::move(shape), rng, 0.5, 2.0); }

// Gradient of the hard LIF step against central differences of the soft
// activation whose derivative the surrogate is.
GradCheckResult lif_surrogate(Rng& rng) {
  const snn::LifConfig cfg = testing::random_lif(rng);
  Tensor u = random_leaf({6}, rng, -1.0, 1.0), x = random_leaf({6}, rng, -1.0, 2.0);
  const Tensor p = probe_like({6}, rng);
  probe_sum(snn::lif_step(cfg, snn::MembraneState{u, 0}, x).spikes, p).backward();
  const Tensor gu = Tensor({6}, std::vector<double>(u.grad().begin(), u.grad().end()));
  const Tensor gx = Tensor({6}, std::vector<double>(x.grad().begin(), x.grad().end()));
  NoGradGuard no_grad;
  auto soft = [&] {
    const Tensor v = add_scalar(add(scale(add_scalar(u, -cfg.u_rest), cfg.leak), x), cfg.u_rest);
    return probe_sum(tanh(scale(add_scalar(v, -cfg.threshold), 1.0 / cfg.surrogate_width)), p).item();
  };
  GradCheckResult res;
  for (auto [t, g] : {std::pair{&u, &gu}, std::pair{&x, &gx}}) {
    auto d = t->mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double o = d[i], h = 1e-4;
      auto central = [&](double step) {
        d[i] = o + step;
        const double up = soft();
        d[i] = o - step;
        const double down = soft();
        d[i] = o;
        return (up - down) / (2.0 * step);
      };
      const double numeric = (4.0 * central(0.5 * h) - central(h)) / 3.0;
      res.max_rel_err = std::max(res.max_rel_err, testing::rel_err(g->at(i), numeric));
    }
  }
  return res;
}

align::TransformerConfig tiny_transformer() {
  align::TransformerConfig c;
  c.layers = 1;
  c.heads = 2;
  c.d_model = 4;
  c.ff_dim = 6;
  c.max_seq_len = 8;
  c.vocab_size = 10;
  c.visual_dim = 3;
  c.max_patches = 4;
  c.visual_classes = 5;
  return c;
}

std::vector<GradCase> gradient_cases() {
  auto unary = [](const char* name, Tensor (*op)(const Tensor&), bool positive) {
    return GradCase{name, [op, positive](Rng& rng) {
                      Tensor a = positive ? positive_leaf({3, 4}, rng) : random_leaf({3, 4}, rng);
                      const Tensor p = probe_like({3, 4}, rng);
                      return grad_check([&] { return probe_sum(op(a), p); }, {a});
                    }};
  };
  auto binary = [](const char* name, Tensor (*op)(const Tensor&, const Tensor&)) {
    return GradCase{name, [op](Rng& rng) {
                      Tensor a = random_leaf({3, 4}, rng), b = positive_leaf({3, 4}, rng);
                      const Tensor p = probe_like({3, 4}, rng);
                      return grad_check([&] { return probe_sum(op(a, b), p); }, {a, b});
                    }};
  };
  std::vector<GradCase> cases{
      {"matmul",
       [](Rng& rng) {
         Tensor a = random_leaf({3, 4}, rng), b = random_leaf({4, 5}, rng);
         const Tensor p = probe_like({3, 5}, rng);
         return grad_check([&] { return probe_sum(matmul(a, b), p); }, {a, b});
       }},
      {"matmul_nt",
       [](Rng& rng) {
         Tensor a = random_leaf({3, 4}, rng), b = random_leaf({5, 4}, rng);
         const Tensor p = probe_like({3, 5}, rng);
         return grad_check([&] { return probe_sum(matmul_nt(a, b), p); }, {a, b});
       }},
      {"linear",
       [](Rng& rng) {
         Tensor x = random_leaf({3, 4}, rng), w = random_leaf({4, 2}, rng), b = random_leaf({2}, rng);
         const Tensor p = probe_like({3, 2}, rng);
         return grad_check([&] { return probe_sum(linear(x, w, b), p); }, {x, w, b});
       }},
      {"transpose",
       [](Rng& rng) {
         Tensor a = random_leaf({3, 4}, rng);
         const Tensor p = probe_like({4, 3}, rng);
         return grad_check([&] { return probe_sum(transpose(a), p); }, {a});
       }},
      binary("add", add),
      binary("sub", sub),
      binary("mul", mul),
      binary("div", div),
      unary("neg", neg, false),
      unary("square", square, false),
      unary("exp", exp, false),
      unary("log", log, true),
      unary("sigmoid", sigmoid, false),
      unary("tanh", tanh, false),
      unary("relu", relu, false),
      {"scale and add_scalar",
       [](Rng& rng) {
         Tensor a = random_leaf({3, 4}, rng);
         const double k = rng.uniform(-2.0, 2.0);
         const Tensor p = probe_like({3, 4}, rng);
         return grad_check([&] { return probe_sum(add_scalar(scale(a, k), k), p); }, {a});
       }},
      {"sum and mean",
       [](Rng& rng) {
         Tensor a = random_leaf({3, 4}, rng);
         return grad_check([&] { return add(sum(square(a)), mean(a)); }, {a});
       }},
      {"softmax_rows",
       [](Rng& rng) {
         Tensor a = random_leaf({3, 5}, rng);
         const double t = rng.uniform(0.2, 2.0);
         const Tensor p = probe_like({3, 5}, rng);
         return grad_check([&] { return probe_sum(softmax_rows(a, t), p); }, {a});
       }},
      {"log_softmax_rows",
       [](Rng& rng) {
         Tensor a = random_leaf({3, 5}, rng);
         const Tensor p = probe_like({3, 5}, rng);
         return grad_check([&] { return probe_sum(log_softmax_rows(a), p); }, {a});
       }},
      {"cross_entropy",
       [](Rng& rng) {
         Tensor a = random_leaf({4, 5}, rng);
         const std::vector<int> t{static_cast<int>(rng.below(5)), -1, static_cast<int>(rng.below(5)), 0};
         return grad_check([&] { return cross_entropy(a, t); }, {a});
       }},
      {"l2_normalize_rows",
       [](Rng& rng) {
         Tensor a = random_leaf({3, 4}, rng);
         const Tensor p = probe_like({3, 4}, rng);
         return grad_check([&] { return probe_sum(l2_normalize_rows(a), p); }, {a});
       }},
      {"layer_norm_rows",
       [](Rng& rng) {
         Tensor a = random_leaf({3, 5}, rng), g = random_leaf({5}, rng), b = random_leaf({5}, rng);
         const Tensor p = probe_like({3, 5}, rng);
         return grad_check([&] { return probe_sum(layer_norm_rows(a, g, b), p); }, {a, g, b});
       }},
      {"row_block_mean",
       [](Rng& rng) {
         Tensor a = random_leaf({6, 3}, rng);
         const Tensor p = probe_like({2, 3}, rng);
         return grad_check([&] { return probe_sum(row_block_mean(a, 3), p); }, {a});
       }},
      {"gather, concat, slice, reshape",
       [](Rng& rng) {
         Tensor a = random_leaf({4, 3}, rng), b = random_leaf({2, 3}, rng);
         const std::vector<std::size_t> rows{3, 0, 3, 1};
         const Tensor p = probe_like({3, 4}, rng);
         return grad_check(
             [&] { return probe_sum(reshape(slice_rows(concat_rows({gather_rows(a, rows), b}), 1, 5), {3, 4}), p); },
             {a, b});
       }},
      {"conv2d",
       [](Rng& rng) {
         Tensor x = random_leaf({2, 3, 6, 6}, rng), k = random_leaf({4, 3, 3, 3}, rng);
         const std::size_t stride = 1 + rng.below(2);
         const std::size_t out = (6 + 2 - 3) / stride + 1;
         const Tensor p = probe_like({2, 4, out, out}, rng);
         return grad_check([&] { return probe_sum(conv2d(x, k, {.stride = stride, .padding = 1}), p); }, {x, k});
       }},
      {"channel bias, pooling, patch tokens",
       [](Rng& rng) {
         Tensor x = random_leaf({2, 3, 4, 4}, rng), b = random_leaf({3}, rng);
         const Tensor p = probe_like({8, 3}, rng);
         return grad_check([&] { return probe_sum(patch_tokens(avg_pool2d(add_channel_bias(x, b), 2)), p); },
                           {x, b});
       }},
      {"multi_head_attention",
       [](Rng& rng) {
         Tensor q = random_leaf({8, 6}, rng), k = random_leaf({8, 6}, rng), v = random_leaf({8, 6}, rng);
         const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 1, 1, 0};
         const Tensor p = probe_like({8, 6}, rng);
         return grad_check([&] { return probe_sum(multi_head_attention(q, k, v, 2, 4, 2, mask), p); }, {q, k, v});
       }},
      {"tdbn",
       [](Rng& rng) {
         Tensor x = random_leaf({6, 3}, rng), s = random_leaf({3}, rng), b = random_leaf({3}, rng);
         const double theta = rng.uniform(0.5, 2.0);
         const Tensor p = probe_like({6, 3}, rng);
         return grad_check([&] { return probe_sum(snn::tdbn(x, theta, s, b), p); }, {x, s, b});
       }},
      {"lif surrogate path", lif_surrogate},
      {"collector_readout",
       [](Rng& rng) {
         Tensor s = random_leaf({4, 5}, rng, 0.5, 3.0), c = random_leaf({3, 5}, rng);
         const Tensor p = probe_like({4, 3}, rng);
         return grad_check([&] { return probe_sum(snn::collector_readout(s, c), p); }, {s, c});
       }},
      {"summary ratio fusion",
       [](Rng& rng) {
         Tensor f = random_leaf({4, 5}, rng), w = random_leaf({5, 5}, rng), b = random_leaf({5}, rng);
         Tensor snn_f = random_leaf({4, 5}, rng);
         const Tensor p = probe_like({4, 5}, rng);
         return grad_check(
             [&] {
               return probe_sum(
                   fusion::fuse(fusion::summary_ratio(f, w, b), snn_f, f, fusion::SrMode::kTrainable), p);
             },
             {f, w, b, snn_f});
       }},
      {"transformer block",
       [](Rng& rng) {
         const align::AlignTransformer tf(tiny_transformer(), rng);
         Tensor x = random_leaf({6, 4}, rng);
         const std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 0};
         const Tensor p = probe_like({6, 4}, rng);
         std::vector<Tensor> inputs{x};
         for (const auto& t : tf.parameters()) inputs.push_back(t);
         return grad_check([&] { return probe_sum(tf.encode(x, mask, 2, 3), p); }, inputs);
       }},
      {"itc loss",
       [](Rng& rng) {
         Tensor img = random_leaf({4, 3}, rng), txt = random_leaf({4, 3}, rng), tau = random_leaf({1}, rng, 0.2, 1.0);
         objectives::NegativeQueue iq(4), tq(4);
         iq.push(l2_normalize_rows(Tensor::uniform({3, 3}, rng, -1.0, 1.0)));
         tq.push(l2_normalize_rows(Tensor::uniform({3, 3}, rng, -1.0, 1.0)));
         return grad_check(
             [&] {
               objectives::NegativeQueue a = iq, b = tq;
               return objectives::itc_loss(l2_normalize_rows(img), l2_normalize_rows(txt), tau, &a, &b);
             },
             {img, txt, tau});
       }},
      {"itm loss",
       [](Rng& rng) {
         Tensor logits = random_leaf({6, 2}, rng);
         std::vector<int> labels(6);
         for (auto& l : labels) l = static_cast<int>(rng.below(2));
         return grad_check([&] { return objectives::itm_loss(logits, labels); }, {logits});
       }},
      {"mlm and mvm losses",
       [](Rng& rng) {
         Tensor a = random_leaf({4, 7}, rng), b = random_leaf({3, 5}, rng);
         const std::vector<int> ta{static_cast<int>(rng.below(7)), -1, 2, 6}, tb{4, -1, 0};
         return grad_check([&] { return add(objectives::mlm_loss(a, ta), objectives::mvm_loss(b, tb)); }, {a, b});
       }},
      {"stua loss",
       [](Rng& rng) {
         objectives::AlignmentHeads heads(5, 4, 3, rng, rng.uniform(0.2, 1.0));
         Tensor v = random_leaf({4, 5}, rng), w = random_leaf({4, 4}, rng);
         std::vector<Tensor> inputs{v, w};
         for (const auto& t : heads.parameters()) inputs.push_back(t);
         return grad_check(
             [&] { return objectives::stua_loss(objectives::stua_score(v, w, heads), heads.temperature()); }, inputs);
       }},
  };
  return cases;
}

// Brute-force retrieve: stable sort of all other ids by descending score.
std::vector<std::size_t> brute_retrieve(std::size_t anchor, std::size_t phi, const Tensor& sims) {
  const std::size_t n = sims.dim(0);
  std::vector<std::size_t> others;
  for (std::size_t j = 0; j < n; ++j)
    if (j != anchor) others.push_back(j);
  std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
    return sims.at(anchor * n + a) > sims.at(anchor * n + b);
  });
  std::vector<std::size_t> out{anchor};
  out.insert(out.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(phi - 1));
  return out;
}

Tensor symmetric_sims(std::size_t n, const std::function<double(std::size_t, std::size_t)>& draw) {
  Tensor s({n, n}, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s.mutable_data()[i * n + j] = s.mutable_data()[j * n + i] = draw(i, j);
  return s;
}

}  // namespace

Verdict gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  const auto cases = gradient_cases();
  constexpr int kInstances = 20;
  Rng rng(20240601);
  double worst = 0.0;
  std::string worst_op, failing;
  std::size_t checks = 0;
  for (const auto& c : cases) {
    double op_worst = 0.0;
    for (int i = 0; i < kInstances; ++i) {
      op_worst = std::max(op_worst, c.check(rng).max_rel_err);
      ++checks;
    }
    if (op_worst > 1e-6) failing += std::string(failing.empty() ? "" : ", ") + c.name;
    if (op_worst >= worst) {
      worst = op_worst;
      worst_op = c.name;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Verdict v;
  v.pass = failing.empty() && secs < 60.0;
  v.detail = std::to_string(cases.size()) + " operations x " + std::to_string(kInstances) + " instances (" +
             std::to_string(checks) + " checks), worst rel err " + fmt("%.2e", worst) + " (" + worst_op + "), " +
             fmt("%.1f s", secs) + " of 60 s";
  if (!failing.empty()) v.detail += "; over 1e-6: " + failing;
  return v;
}

Verdict lif_oracle() {
  Rng rng(2002);
  std::size_t exact = 0, compared = 0;
  for (int config = 0; config < 100; ++config) {
    const snn::LifConfig cfg = testing::random_lif(rng);
    const std::size_t n = 1 + rng.below(16);
    snn::MembraneState state = snn::MembraneState::at_rest({n}, cfg);
    std::vector<testing::ScalarNeuron> ref(n, testing::ScalarNeuron{cfg.u_rest});
    bool same = true;
    for (int t = 0; t < 20; ++t) {
      const Tensor input = Tensor::uniform({n}, rng, -0.5, 1.5);
      const auto out = snn::lif_step(cfg, state, input);
      for (std::size_t i = 0; i < n; ++i) {
        const double spike = ref[i].step(cfg, input.at(i)) ? 1.0 : 0.0;
        same = same && out.spikes.at(i) == spike && out.state.u.at(i) == ref[i].u;
        ++compared;
      }
      state = out.state;
    }
    if (same) ++exact;
  }
  return {exact == 100, std::to_string(exact) + "/100 configs bit-identical over T=20 (" + std::to_string(compared) +
                            " neuron-steps)"};
}

Verdict spike_contracts() {
  Rng rng(3003);
  std::vector<double> p(1000);
  for (auto& v : p) v = rng.uniform();
  const auto train = spike::encode_probabilistic(p, 1000, 77);
  std::size_t binary = 0, entries = 0;
  for (std::size_t u = 0; u < 1000; ++u)
    for (std::size_t t = 0; t < 1000; ++t) {
      const double s = train.at(u, t);
      binary += (s == 0.0 || s == 1.0) ? 1 : 0;
      ++entries;
    }
  const std::vector<double> targets{0.0, 0.05, 0.25, 0.5, 0.73, 0.95, 1.0};
  const auto long_train = spike::encode_probabilistic(targets, 10000, 78);
  double worst = 0.0;
  for (std::size_t u = 0; u < targets.size(); ++u) {
    double fired = 0.0;
    for (std::size_t t = 0; t < 10000; ++t) fired += long_train.at(u, t);
    worst = std::max(worst, std::abs(fired / 10000.0 - targets[u]));
  }
  return {binary == entries && entries == 1000000 && worst <= 0.02,
          std::to_string(binary) + "/" + std::to_string(entries) + " entries binary; worst rate error at T=10000 " +
              fmt("%.4f", worst) + " (limit 0.02)"};
}

Verdict collector_oracle() {
  Rng rng(4004);
  double worst_loop = 0.0, worst_scale = 0.0;
  bool zeros_exact = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 6, m1 = 5, m2 = 7;
    const Tensor c = Tensor::randn({m1, m2}, rng, 1.0);
    std::vector<double> s(rows * m2);
    for (auto& v : s) v = static_cast<double>(rng.below(11));
    const std::size_t silent = rng.below(rows);
    std::fill_n(s.begin() + static_cast<std::ptrdiff_t>(silent * m2), m2, 0.0);
    const auto f = snn::collector_readout(Tensor({rows, m2}, s), c).to_vector();
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < m2; ++j) total += s[r * m2 + j];
      for (std::size_t a = 0; a < m1; ++a) {
        if (total == 0.0) {
          zeros_exact = zeros_exact && f[r * m1 + a] == 0.0;
          continue;
        }
        double num = 0.0;
        for (std::size_t j = 0; j < m2; ++j) num += s[r * m2 + j] * c.at(a * m2 + j);
        worst_loop = std::max(worst_loop, std::abs(f[r * m1 + a] - num / total));
      }
    }
    const double k = rng.uniform(0.05, 20.0);
    for (auto& v : s) v *= k;
    const auto g = snn::collector_readout(Tensor({rows, m2}, s), c).to_vector();
    for (std::size_t i = 0; i < f.size(); ++i) worst_scale = std::max(worst_scale, std::abs(f[i] - g[i]));
  }
  return {worst_loop <= 1e-12 && zeros_exact && worst_scale <= 1e-12,
          "loop oracle diff " + fmt("%.1e", worst_loop) + ", zero-spike rows exact: " + (zeros_exact ? "yes" : "no") +
              ", scaling diff " + fmt("%.1e", worst_scale) + " (limits 1e-12)"};
}

Verdict stua_identities() {
  Rng rng(5005);
  double worst_eq = 0.0;
  for (std::size_t b : {2u, 3u, 8u, 16u, 64u}) {
    const Tensor row = Tensor::uniform({1, 6}, rng, -1.0, 1.0);
    const std::vector<std::size_t> same(b, 0);
    const Tensor v = l2_normalize_rows(gather_rows(row, same));
    const Tensor w = l2_normalize_rows(gather_rows(Tensor::uniform({1, 6}, rng, -1.0, 1.0), same));
    const double loss = objectives::stua_loss(objectives::stua_score(v, w), rng.uniform(0.05, 2.0)).item();
    worst_eq = std::max(worst_eq, std::abs(loss - 0.5 * std::log(static_cast<double>(b))));
  }
  double worst_shift = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor r = Tensor::uniform({5, 5}, rng, -1.0, 1.0);
    auto shifted = r.to_vector();
    for (std::size_t i = 0; i < 5; ++i) {
      const double c = rng.uniform(-5.0, 5.0);
      for (std::size_t j = 0; j < 5; ++j) shifted[i * 5 + j] += c;
    }
    const double tau = rng.uniform(0.1, 1.0);
    worst_shift = std::max(worst_shift, std::abs(objectives::stua_loss(r, tau).item() -
                                                 objectives::stua_loss(Tensor({5, 5}, shifted), tau).item()));
  }
  // b = 2, r = I, tau = 1: each row's softmax puts e / (e + 1) on its match,
  // so the loss is 0.5 * ln(1 + e^-1).
  const double worked = objectives::stua_loss(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}), 1.0).item();
  const bool pass = worst_eq <= 1e-9 && worst_shift <= 1e-9 && std::abs(worked - 0.1566) <= 1e-3 &&
                    std::abs(worked - 0.5 * std::log1p(std::exp(-1.0))) <= 1e-12;
  return {pass, "equal-embedding |loss - ln(B)/2| " + fmt("%.1e", worst_eq) + ", row-shift diff " +
                    fmt("%.1e", worst_shift) + ", b=2 worked value " + fmt("%.6f", worked) + " (expected 0.1566)"};
}

Verdict retrieval_oracles() {
  Rng rng(6006);
  std::size_t retrieve_ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    const bool coarse = trial % 2 == 1;  // quantized scores force ties
    const Tensor s = symmetric_sims(n, [&](std::size_t, std::size_t) {
      const double v = rng.uniform(-1.0, 1.0);
      return coarse ? std::round(v * 4.0) / 4.0 : v;
    });
    const std::size_t anchor = rng.below(n), phi = 1 + rng.below(n);
    if (sched::retrieve(anchor, phi, s) == brute_retrieve(anchor, phi, s)) ++retrieve_ok;
  }
  std::size_t multiset_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(120), batch = 1 + rng.below(24), phi = 1 + rng.below(batch);
    const Tensor s = symmetric_sims(n, [&](std::size_t, std::size_t) { return std::round(rng.uniform(-2, 2)) / 2; });
    const auto plan = sched::reorganize_epoch(phi, s, batch, rng);
    std::vector<std::size_t> ids;
    bool sized = true;
    for (const auto& b : plan.batches) {
      ids.insert(ids.end(), b.begin(), b.end());
      sized = sized && !b.empty() && b.size() <= batch;
    }
    std::sort(ids.begin(), ids.end());
    std::vector<std::size_t> expect(n);
    std::iota(expect.begin(), expect.end(), std::size_t{0});
    if (sized && ids == expect) ++multiset_ok;
  }
  std::size_t recovered = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng r(seed);
    // 16 samples, cluster of i is i % 4; within-cluster scores dominate.
    const Tensor s = symmetric_sims(16, [&](std::size_t i, std::size_t j) {
      return i % 4 == j % 4 ? r.uniform(0.6, 0.95) : r.uniform(-0.6, 0.45);
    });
    const auto plan = sched::reorganize_epoch(4, s, 4, r);
    std::set<std::set<std::size_t>> got, want;
    for (const auto& g : plan.groups) got.insert({g.begin(), g.end()});
    for (std::size_t c = 0; c < 4; ++c) want.insert({c, c + 4, c + 8, c + 12});
    if (got == want && plan.batches.size() == 4) ++recovered;
  }
  return {retrieve_ok == 200 && multiset_ok == 100 && recovered == 3,
          "retrieve matches full sort " + std::to_string(retrieve_ok) + "/200, multiset preserved " +
              std::to_string(multiset_ok) + "/100, planted clusters recovered " + std::to_string(recovered) + "/3"};
}

Verdict freeze_contract() {
  harness::RunConfig cfg = harness::parse_config(
      R"({"dataset_size": 96, "eval_size": 8, "epochs": 3, "warmup_epochs": 2, "batch_size": 8, "retrieve_count": 8,
          "T": 4})");
  harness::Trainer trainer(cfg);
  auto snapshot = [](harness::AshNet& m) {
    std::vector<std::vector<double>> out;
    for (const auto& nt : m.spiking_parameters()) out.push_back(nt.tensor.to_vector());
    return out;
  };
  auto others = [](harness::AshNet& m) {
    std::vector<double> out;
    for (const auto& nt : m.transformer().parameters()) {
      const auto v = nt.to_vector();
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  };
  const auto initial = snapshot(trainer.model());
  const auto initial_other = others(trainer.model());
  std::size_t warm_steps = 0, identical = 0;
  bool other_moved = false, unfrozen_moved = false;
  harness::TrainOptions opts;
  opts.on_step = [&](const harness::StepInfo& info, harness::AshNet& m) {
    if (info.phase == sched::Phase::kFrozenWarmup) {
      ++warm_steps;
      if (snapshot(m) == initial) ++identical;
      other_moved = other_moved || others(m) != initial_other;
    } else {
      unfrozen_moved = unfrozen_moved || snapshot(m) != initial;
    }
  };
  trainer.train(opts);
  return {warm_steps > 0 && identical == warm_steps && other_moved && unfrozen_moved,
          std::to_string(identical) + "/" + std::to_string(warm_steps) +
              " warmup steps left SNN and collector tensors bit-identical; transformer moved: " +
              (other_moved ? "yes" : "no") + "; spiking tensors move after unfreezing: " +
              (unfrozen_moved ? "yes" : "no")};
}

Verdict vqa_utility() {
  const std::vector<int> n{0, 1, 2, 3, 5};
  const std::vector<double> want{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0};
  std::string got;
  bool exact = true;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double v = objectives::vqa_accuracy(n[i]);
    exact = exact && v == want[i];
    got += (i ? ", " : "") + fmt("%.17g", v);
  }
  return {exact, "n = {0,1,2,3,5} -> {" + got + "}"};
}

}  // namespace ash::acceptance
