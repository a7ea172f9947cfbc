#include "ash/snn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ash/errors.hpp"
#include "ash/ops.hpp"

namespace ash::snn {

using Span = std::span<const double>;

void LifConfig::validate() const {
  if (!(leak > 0.0 && leak <= 1.0)) throw ParameterError("LIF leak must lie in (0, 1], got " + std::to_string(leak));
  if (!(threshold > u_reset)) throw ParameterError("LIF threshold must exceed u_reset");
  if (!(surrogate_width > 0.0)) throw ParameterError("LIF surrogate width must be positive");
}

MembraneState MembraneState::at_rest(Shape shape, const LifConfig& cfg) {
  return {Tensor(std::move(shape), cfg.u_rest), 0};
}

Tensor spike_fn(const Tensor& membrane, double threshold, double width) {
  const auto u = membrane.data();
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] >= threshold ? 1.0 : 0.0;
  return record_op(membrane.shape(), std::move(out), {membrane},
                   [membrane, threshold, width](Span g, Span) mutable {
                     const auto u = membrane.data();
                     auto gu = membrane.grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       const double t = std::tanh((u[i] - threshold) / width);
                       gu[i] += g[i] * (1.0 - t * t) / width;
                     }
                   });
}

namespace {

// u' = leak * (u - u_rest) + u_rest + input, evaluated left to right so the
// scalar reference in the tests reproduces the same doubles.
Tensor charge(const LifConfig& cfg, const Tensor& u, const Tensor& input) {
  const auto ud = u.data();
  const auto id = input.data();
  std::vector<double> out(ud.size());
  for (std::size_t i = 0; i < ud.size(); ++i) out[i] = cfg.leak * (ud[i] - cfg.u_rest) + cfg.u_rest + id[i];
  const double leak = cfg.leak;
  return record_op(u.shape(), std::move(out), {u, input}, [u, input, leak](Span g, Span) mutable {
    if (u.requires_grad()) {
      auto gu = u.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gu[i] += leak * g[i];
    }
    if (input.requires_grad()) {
      auto gi = input.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Tensor reset(const Tensor& charged, const Tensor& spikes, double u_reset) {
  const auto v = charged.data();
  const auto s = spikes.data();
  std::vector<double> out(v.size());
  std::vector<std::uint8_t> fired(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    fired[i] = s[i] != 0.0;
    out[i] = fired[i] ? u_reset : v[i];
  }
  return record_op(charged.shape(), std::move(out), {charged}, [charged, fired = std::move(fired)](Span g, Span) mutable {
    auto gv = charged.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!fired[i]) gv[i] += g[i];
  });
}

}  // namespace

LifOutput lif_step(const LifConfig& cfg, const MembraneState& state, const Tensor& input) {
  if (state.u.shape() != input.shape()) {
    throw DimensionError("lif_step: membrane " + shape_str(state.u.shape()) + " vs input " + shape_str(input.shape()));
  }
  Tensor charged = charge(cfg, state.u, input);
  Tensor spikes = spike_fn(charged, cfg.threshold, cfg.surrogate_width);
  Tensor next = reset(charged, spikes, cfg.u_reset);
  return {spikes, {next, state.step + 1}};
}

Tensor tdbn(const Tensor& pre, double threshold, const Tensor& scale, const Tensor& shift, double eps) {
  if (pre.rank() != 2) throw DimensionError("tdbn: expected [population x units], got " + shape_str(pre.shape()));
  const std::size_t rows = pre.dim(0), n = pre.dim(1);
  if (rows < 2) throw ContractError("tdbn: normalization population needs at least 2 samples");
  if (scale.numel() != n || shift.numel() != n) {
    throw DimensionError("tdbn: scale/shift " + shape_str(scale.shape()) + "/" + shape_str(shift.shape()) +
                         " for " + shape_str(pre.shape()));
  }
  const auto x = pre.data();
  const auto sc = scale.data();
  const auto sh = shift.data();
  std::vector<double> mu(n, 0.0), var(n, 0.0), inv_std(n);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) mu[j] += x[r * n + j];
  for (auto& m : mu) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) var[j] += (x[r * n + j] - mu[j]) * (x[r * n + j] - mu[j]);
  std::vector<std::uint8_t> floored(n);
  for (std::size_t j = 0; j < n; ++j) {
    var[j] /= static_cast<double>(rows);
    floored[j] = var[j] < eps;
    inv_std[j] = 1.0 / std::sqrt(std::max(var[j], eps));
  }
  std::vector<double> xhat(rows * n), out(rows * n);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (x[r * n + j] - mu[j]) * inv_std[j];
      out[r * n + j] = threshold * sc[j] * xhat[r * n + j] + sh[j];
    }
  return record_op(
      pre.shape(), std::move(out), {pre, scale, shift},
      [pre, scale, shift, threshold, rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std),
       floored = std::move(floored)](Span g, Span) mutable {
        const auto sc = scale.data();
        if (scale.requires_grad()) {
          auto gs = scale.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) gs[j] += g[r * n + j] * threshold * xhat[r * n + j];
        }
        if (shift.requires_grad()) {
          auto gb = shift.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
        }
        if (!pre.requires_grad()) return;
        auto gx = pre.grad_buffer();
        const double inv_rows = 1.0 / static_cast<double>(rows);
        std::vector<double> s1(n, 0.0), s2(n, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[r * n + j] * threshold * sc[j];
            s1[j] += d;
            s2[j] += d * xhat[r * n + j];
          }
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[r * n + j] * threshold * sc[j];
            // A floored variance is a constant, so only the mean term remains.
            const double var_term = floored[j] ? 0.0 : xhat[r * n + j] * s2[j] * inv_rows;
            gx[r * n + j] += inv_std[j] * (d - s1[j] * inv_rows - var_term);
          }
      });
}

Tensor collector_readout(const Tensor& counts, const Tensor& codebook) {
  if (counts.rank() != 2 || codebook.rank() != 2 || counts.dim(1) != codebook.dim(1)) {
    throw DimensionError("collector_readout: activations " + shape_str(counts.shape()) + " vs codebook " +
                         shape_str(codebook.shape()));
  }
  const std::size_t rows = counts.dim(0), m2 = counts.dim(1), m1 = codebook.dim(0);
  const auto s = counts.data();
  const auto c = codebook.data();
  std::vector<double> total(rows, 0.0), out(rows * m1, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m2; ++j) total[r] += s[r * m2 + j];
    if (total[r] == 0.0) continue;
    for (std::size_t a = 0; a < m1; ++a) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m2; ++j) acc += c[a * m2 + j] * s[r * m2 + j];
      out[r * m1 + a] = acc / total[r];
    }
  }
  return record_op({rows, m1}, std::move(out), {counts, codebook},
                   [counts, codebook, total = std::move(total), rows, m1, m2](Span g, Span f) mutable {
                     const auto s = counts.data();
                     const auto c = codebook.data();
                     std::span<double> gs, gc;
                     if (counts.requires_grad()) gs = counts.grad_buffer();
                     if (codebook.requires_grad()) gc = codebook.grad_buffer();
                     for (std::size_t r = 0; r < rows; ++r) {
                       if (total[r] == 0.0) continue;
                       const double inv = 1.0 / total[r];
                       for (std::size_t a = 0; a < m1; ++a) {
                         const double ga = g[r * m1 + a] * inv;
                         if (ga == 0.0) continue;
                         for (std::size_t j = 0; j < m2; ++j) {
                           if (!gc.empty()) gc[a * m2 + j] += ga * s[r * m2 + j];
                           if (!gs.empty()) gs[r * m2 + j] += ga * (c[a * m2 + j] - f[r * m1 + a]);
                         }
                       }
                     }
                   });
}

SemanticCollector::SemanticCollector(std::size_t m1, std::size_t m2, Rng& rng)
    : codebook_(Tensor::randn({m1, m2}, rng, 1.0 / std::sqrt(static_cast<double>(m1)))) {
  codebook_.set_requires_grad(true);
}

SnnEncoder::SnnEncoder(const SnnEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.lif.validate();
  if (cfg.patches == 0 || cfg.patch_area == 0 || cfg.hidden == 0 || cfg.m2 == 0) {
    throw ParameterError("SnnEncoder: all layer sizes must be positive");
  }
  w1_ = Tensor::randn({cfg.patch_area, cfg.hidden}, rng, 1.0 / std::sqrt(static_cast<double>(cfg.patch_area)));
  w2_ = Tensor::randn({cfg.hidden, cfg.m2}, rng, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
  scale1_ = Tensor({cfg.hidden}, 1.0);
  shift1_ = Tensor({cfg.hidden}, 0.0);
  scale2_ = Tensor({cfg.m2}, 1.0);
  shift2_ = Tensor({cfg.m2}, 0.0);
  for (Tensor* t : {&w1_, &w2_, &scale1_, &shift1_, &scale2_, &shift2_}) t->set_requires_grad(true);
}

Tensor SnnEncoder::run_layer(const Tensor& currents, std::size_t width, std::size_t steps_per_sample,
                             std::size_t samples, bool reset_between_samples, std::vector<Tensor>& spikes_out) const {
  const std::size_t n = cfg_.patches;
  MembraneState state = MembraneState::at_rest({n, width}, cfg_.lif);
  spikes_out.clear();
  spikes_out.reserve(steps_per_sample * samples);
  for (std::size_t k = 0; k < steps_per_sample * samples; ++k) {
    if (reset_between_samples && k > 0 && k % steps_per_sample == 0) {
      state = MembraneState::at_rest({n, width}, cfg_.lif);
    }
    LifOutput out = lif_step(cfg_.lif, state, slice_rows(currents, k * n, (k + 1) * n));
    spikes_out.push_back(out.spikes);
    state = std::move(out.state);
  }
  return concat_rows(spikes_out);
}

Tensor SnnEncoder::encode_abstract(const std::vector<spike::SpikeTrain>& trains, bool reset_between_samples) const {
  if (trains.empty()) throw ContractError("encode_abstract: empty batch");
  const std::size_t steps = trains.front().steps();
  const std::size_t n = cfg_.patches, area = cfg_.patch_area;
  for (const auto& t : trains) {
    if (t.steps() != steps) throw ContractError("encode_abstract: spike trains disagree on T");
    if (t.num_units() != n * area) {
      throw ContractError("encode_abstract: train has " + std::to_string(t.num_units()) + " units, expected " +
                          std::to_string(n * area));
    }
  }
  const std::size_t b = trains.size();
  // Input rows are ordered (sample, step, patch).
  std::vector<double> x(b * steps * n * area);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t a = 0; a < area; ++a)
          x[(((i * steps + t) * n) + p) * area + a] = trains[i].at(p * area + a, t);
  const Tensor input({b * steps * n, area}, std::move(x));

  std::vector<Tensor> layer1, layer2;
  const Tensor s1 = run_layer(tdbn(matmul(input, w1_), cfg_.lif.threshold, scale1_, shift1_), cfg_.hidden, steps, b,
                              reset_between_samples, layer1);
  run_layer(tdbn(matmul(s1, w2_), cfg_.lif.threshold, scale2_, shift2_), cfg_.m2, steps, b, reset_between_samples,
            layer2);

  std::vector<Tensor> counts;
  counts.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    Tensor acc = layer2[i * steps];
    for (std::size_t t = 1; t < steps; ++t) acc = add(acc, layer2[i * steps + t]);
    counts.push_back(acc);
  }
  return concat_rows(counts);
}

std::vector<Tensor> SnnEncoder::parameters() const { return {w1_, scale1_, shift1_, w2_, scale2_, shift2_}; }

std::vector<NamedTensor> SnnEncoder::named_parameters(const std::string& prefix) const {
  return {{prefix + "w1", w1_},     {prefix + "scale1", scale1_}, {prefix + "shift1", shift1_},
          {prefix + "w2", w2_},     {prefix + "scale2", scale2_}, {prefix + "shift2", shift2_}};
}

void set_frozen(Optimizer& optimizer, bool frozen) {
  optimizer.set_frozen(kSnnGroup, frozen);
  optimizer.set_frozen(kCollectorGroup, frozen);
}

}  // namespace ash::snn
