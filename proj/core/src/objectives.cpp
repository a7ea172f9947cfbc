#include "ash/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "ash/errors.hpp"
#include "ash/ops.hpp"

namespace ash::objectives {

namespace {

Tensor trainable(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

std::vector<int> diagonal_targets(std::size_t n) {
  std::vector<int> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<int>(i);
  return t;
}

constexpr double kExcluded = -1e30;

// Contrastive logits of `queries` against `bank`, optionally extended by the
// queued rows, divided by the temperature. Off-diagonal columns whose caption
// key equals the query's are pushed to kExcluded.
Tensor contrastive_logits(const Tensor& queries, const Tensor& bank, const NegativeQueue* queue,
                          const Tensor& temperature, std::span<const std::size_t> keys) {
  const bool queued = queue && !queue->empty();
  Tensor all = queued ? concat_rows({bank, queue->as_tensor()}) : bank;
  Tensor logits = div(matmul_nt(queries, all), temperature);
  if (keys.empty()) return logits;
  const std::size_t b = queries.dim(0), cols = all.dim(0);
  std::vector<double> mask(b * cols, 0.0);
  bool any = false;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t key = j < b ? keys[j] : queue->keys()[j - b];
      if (j != i && key == keys[i]) {
        mask[i * cols + j] = kExcluded;
        any = true;
      }
    }
  }
  return any ? add(logits, Tensor({b, cols}, std::move(mask))) : logits;
}

}  // namespace

AlignmentHeads::AlignmentHeads(std::size_t visual_dim, std::size_t text_dim, std::size_t align_dim, Rng& rng,
                               double initial_temperature) {
  if (align_dim == 0) throw ParameterError("alignment dimension must be positive");
  if (!(initial_temperature >= kMinTemperature && initial_temperature <= kMaxTemperature)) {
    throw ParameterError("initial temperature " + std::to_string(initial_temperature) + " outside [1e-3, 10]");
  }
  wv_ = trainable(Tensor::randn({visual_dim, align_dim}, rng, 1.0 / std::sqrt(static_cast<double>(visual_dim))));
  bv_ = trainable(Tensor({align_dim}, 0.0));
  ww_ = trainable(Tensor::randn({text_dim, align_dim}, rng, 1.0 / std::sqrt(static_cast<double>(text_dim))));
  bw_ = trainable(Tensor({align_dim}, 0.0));
  log_tau_ = trainable(Tensor::scalar(std::log(initial_temperature)));
}

Tensor AlignmentHeads::embed_visual(const Tensor& visual) const { return l2_normalize_rows(linear(visual, wv_, bv_)); }

Tensor AlignmentHeads::embed_text(const Tensor& text) const { return l2_normalize_rows(linear(text, ww_, bw_)); }

Tensor AlignmentHeads::temperature() const { return exp(log_tau_); }

double AlignmentHeads::temperature_value() const { return std::exp(log_tau_.item()); }

void AlignmentHeads::clamp_temperature() {
  auto v = log_tau_.mutable_data();
  v[0] = std::clamp(v[0], std::log(kMinTemperature), std::log(kMaxTemperature));
}

std::vector<NamedTensor> AlignmentHeads::named_parameters(const std::string& prefix) const {
  return {{prefix + "visual_w", wv_},
          {prefix + "visual_b", bv_},
          {prefix + "text_w", ww_},
          {prefix + "text_b", bw_},
          {prefix + "log_tau", log_tau_}};
}

NegativeQueue::NegativeQueue(std::size_t capacity) : capacity_(capacity) {}

void NegativeQueue::push(const Tensor& rows, std::span<const std::size_t> keys) {
  if (capacity_ == 0) return;
  if (rows.rank() != 2) throw DimensionError("queue push expects a 2-D tensor, got " + shape_str(rows.shape()));
  if (!keys.empty() && keys.size() != rows.dim(0)) {
    throw DimensionError("queue push: " + std::to_string(keys.size()) + " keys for " + std::to_string(rows.dim(0)) +
                         " rows");
  }
  const std::size_t dim = rows.dim(1);
  if (!rows_.empty() && rows_.front().size() != dim) {
    throw DimensionError("queue holds rows of width " + std::to_string(rows_.front().size()) + ", got " +
                         std::to_string(dim));
  }
  const auto v = rows.data();
  for (std::size_t r = 0; r < rows.dim(0); ++r) {
    rows_.emplace_back(v.begin() + static_cast<std::ptrdiff_t>(r * dim),
                       v.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
    keys_.push_back(keys.empty() ? kNoKey : keys[r]);
    if (rows_.size() > capacity_) {
      rows_.pop_front();
      keys_.pop_front();
    }
  }
}

Tensor NegativeQueue::as_tensor() const {
  if (rows_.empty()) return {};
  const std::size_t dim = rows_.front().size();
  std::vector<double> flat;
  flat.reserve(rows_.size() * dim);
  for (const auto& r : rows_) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor({rows_.size(), dim}, std::move(flat));
}

Tensor itc_loss(const Tensor& image_emb, const Tensor& text_emb, const Tensor& temperature, NegativeQueue* image_queue,
                NegativeQueue* text_queue, std::span<const std::size_t> keys) {
  if (image_emb.shape() != text_emb.shape() || image_emb.rank() != 2) {
    throw DimensionError("itc_loss: image " + shape_str(image_emb.shape()) + " vs text " +
                         shape_str(text_emb.shape()));
  }
  const std::size_t b = image_emb.dim(0);
  const bool queued = (image_queue && !image_queue->empty()) || (text_queue && !text_queue->empty());
  if (b < 2 && !queued) throw ContractError("itc_loss: a single pair with empty queues has no negatives");

  if (!keys.empty() && keys.size() != b) throw DimensionError("itc_loss: one key per pair required");

  const auto targets = diagonal_targets(b);
  Tensor i2t = cross_entropy(contrastive_logits(image_emb, text_emb, text_queue, temperature, keys), targets);
  Tensor t2i = cross_entropy(contrastive_logits(text_emb, image_emb, image_queue, temperature, keys), targets);
  Tensor loss = scale(add(i2t, t2i), 0.5);
  if (image_queue) image_queue->push(image_emb.detach(), keys);
  if (text_queue) text_queue->push(text_emb.detach(), keys);
  return loss;
}

Tensor itm_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(1) != 2) {
    throw DimensionError("itm_loss expects [rows x 2] logits, got " + shape_str(logits.shape()));
  }
  for (int l : labels)
    if (l != 0 && l != 1) throw ParameterError("itm label must be 0 or 1, got " + std::to_string(l));
  return cross_entropy(logits, labels);
}

std::vector<std::size_t> hardest_negatives(const Tensor& scores, std::span<const std::size_t> text_key) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) {
    throw DimensionError("hardest_negatives expects a square matrix, got " + shape_str(scores.shape()));
  }
  const std::size_t b = scores.dim(0);
  if (text_key.size() != b) throw DimensionError("hardest_negatives: one text key per row required");
  if (b < 2) throw ContractError("hardest_negatives needs at least two pairs");
  const auto s = scores.data();
  std::vector<std::size_t> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = (i + 1) % b;
    bool found = false;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i || text_key[j] == text_key[i]) continue;
      if (!found || s[i * b + j] > s[i * b + best]) {
        best = j;
        found = true;
      }
    }
    out[i] = best;
  }
  return out;
}

MaskedText mask_tokens(const align::TokenSequence& seq, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ParameterError("mask rate must lie in [0, 1]");
  std::vector<std::size_t> maskable;
  for (std::size_t p = 0; p < seq.size(); ++p)
    if (seq.attention_mask[p] && seq.ids[p] >= align::kNumReserved) maskable.push_back(p);
  MaskedText out{seq, std::vector<int>(seq.size(), -1)};
  if (maskable.empty()) {
    // Only special tokens: mask the last attended position so the loss still
    // has a target.
    std::size_t p = seq.size();
    for (std::size_t q = 0; q < seq.size(); ++q)
      if (seq.attention_mask[q]) p = q;
    if (p == seq.size()) throw ContractError("mask_tokens: sequence has no attended token");
    out.targets[p] = seq.ids[p];
    out.tokens.ids[p] = align::kMask;
    return out;
  }

  bool any = false;
  for (std::size_t p : maskable) {
    if (rng.uniform() < rate) {
      out.targets[p] = seq.ids[p];
      out.tokens.ids[p] = align::kMask;
      any = true;
    }
  }
  if (!any) {
    const std::size_t p = maskable[rng.below(maskable.size())];
    out.targets[p] = seq.ids[p];
    out.tokens.ids[p] = align::kMask;
  }
  return out;
}

Tensor mlm_loss(const Tensor& logits, std::span<const int> targets) { return cross_entropy(logits, targets); }

Tensor mvm_loss(const Tensor& logits, std::span<const int> targets) { return cross_entropy(logits, targets); }

std::vector<SpikeLabel> generate_spike_labels(const Tensor& counts, std::span<const std::size_t> rows) {
  if (counts.rank() != 2) throw DimensionError("spike labels need [rows x M2] counts");
  const std::size_t m2 = counts.dim(1);
  const auto c = counts.data();
  std::vector<SpikeLabel> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= counts.dim(0)) throw DimensionError("spike label row " + std::to_string(r) + " out of range");
    const double* row = c.data() + r * m2;
    const auto best = static_cast<std::size_t>(std::max_element(row, row + m2) - row);
    out.push_back({r, static_cast<int>(best), row[best] == 0.0});
  }
  return out;
}

Tensor stua_score(const Tensor& visual_emb, const Tensor& text_emb) {
  if (visual_emb.rank() != 2 || text_emb.rank() != 2 || visual_emb.dim(1) != text_emb.dim(1)) {
    throw DimensionError("stua_score: " + shape_str(visual_emb.shape()) + " vs " + shape_str(text_emb.shape()));
  }
  return matmul_nt(visual_emb, text_emb);
}

Tensor stua_score(const Tensor& visual, const Tensor& text, const AlignmentHeads& heads) {
  return stua_score(heads.embed_visual(visual), heads.embed_text(text));
}

Tensor stua_loss(const Tensor& scores, const Tensor& temperature) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) {
    throw DimensionError("stua_loss expects a square score matrix, got " + shape_str(scores.shape()));
  }
  if (scores.dim(0) < 2) throw ContractError("stua_loss needs a batch of at least 2");
  if (temperature.item() <= 0.0) throw ParameterError("stua_loss temperature must be positive");
  const auto targets = diagonal_targets(scores.dim(0));
  return scale(cross_entropy(div(scores, temperature), targets), 0.5);
}

Tensor stua_loss(const Tensor& scores, double temperature) {
  return stua_loss(scores, Tensor::scalar(temperature));
}

double vqa_accuracy(int humans_matching) {
  if (humans_matching < 0) {
    throw ParameterError("number of matching annotators cannot be negative: " + std::to_string(humans_matching));
  }
  return std::min(static_cast<double>(humans_matching) / 3.0, 1.0);
}

}  // namespace ash::objectives
