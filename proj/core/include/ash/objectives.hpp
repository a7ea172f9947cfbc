#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "ash/checkpoint.hpp"
#include "ash/rng.hpp"
#include "ash/tensor.hpp"
#include "ash/transformer.hpp"

namespace ash::objectives {

inline constexpr double kMinTemperature = 1e-3;
inline constexpr double kMaxTemperature = 10.0;

/// Projection pair into a shared alignment space plus a learnable
/// temperature stored as log(tau).
class AlignmentHeads {
 public:
  AlignmentHeads(std::size_t visual_dim, std::size_t text_dim, std::size_t align_dim, Rng& rng,
                 double initial_temperature = 0.07);

  /// l2_normalize(v * W_v + b_v), [rows x align_dim].
  Tensor embed_visual(const Tensor& visual) const;
  /// l2_normalize(w * W_w + b_w), [rows x align_dim].
  Tensor embed_text(const Tensor& text) const;

  /// exp(log_tau) as a differentiable single-element tensor.
  Tensor temperature() const;
  double temperature_value() const;
  /// Projects log_tau back into [log 1e-3, log 10]; call after each update.
  void clamp_temperature();

  std::vector<Tensor> parameters() const { return {wv_, bv_, ww_, bw_, log_tau_}; }
  std::vector<NamedTensor> named_parameters(const std::string& prefix) const;

 private:
  Tensor wv_, bv_, ww_, bw_, log_tau_;
};

/// FIFO ring of detached embeddings used as extra contrastive negatives.
class NegativeQueue {
 public:
  explicit NegativeQueue(std::size_t capacity);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  void clear() noexcept {
    rows_.clear();
    keys_.clear();
  }

  /// Appends each row of `rows` (values only), evicting the oldest entries.
  /// `keys`, when given, labels each row (one per row) for duplicate masking.
  void push(const Tensor& rows, std::span<const std::size_t> keys = {});
  /// Oldest first, [size x dim] constant tensor. Empty queue -> undefined.
  Tensor as_tensor() const;
  const std::deque<std::vector<double>>& rows() const noexcept { return rows_; }
  /// Key per row, kNoKey for rows pushed without keys.
  const std::deque<std::size_t>& keys() const noexcept { return keys_; }

  static constexpr std::size_t kNoKey = static_cast<std::size_t>(-1);

 private:
  std::size_t capacity_;
  std::deque<std::vector<double>> rows_;
  std::deque<std::size_t> keys_;
};

/// Symmetric InfoNCE over B matched pairs of normalized embeddings. Row i of
/// each side is positive for row i of the other; the other in-batch rows and
/// the queued rows act as negatives. With `keys` (one caption key per pair),
/// in-batch or queued rows sharing row i's key are dropped from its negatives.
/// Queues, when given, receive the batch (and keys) after the loss is formed.
Tensor itc_loss(const Tensor& image_emb, const Tensor& text_emb, const Tensor& temperature,
                NegativeQueue* image_queue = nullptr, NegativeQueue* text_queue = nullptr,
                std::span<const std::size_t> keys = {});

/// Cross-entropy of 2-way match logits; label 1 = matched, 0 = mismatched.
Tensor itm_loss(const Tensor& logits, std::span<const int> labels);

/// For each row i the column j != i with the highest score, skipping columns
/// whose `text_key` equals row i's (identical captions are not negatives).
/// Ties go to the lowest column. Rows with no admissible column fall back to
/// (i + 1) % B.
std::vector<std::size_t> hardest_negatives(const Tensor& scores, std::span<const std::size_t> text_key);

struct MaskedText {
  align::TokenSequence tokens;
  std::vector<int> targets;  // original id at masked positions, -1 elsewhere
};

/// Replaces each non-special token by [MASK] with probability `rate`. When no
/// token is drawn, one maskable position is chosen uniformly and masked.
/// A sequence of special tokens only gets its last attended position masked;
/// one with no attended position throws ContractError.
MaskedText mask_tokens(const align::TokenSequence& seq, double rate, Rng& rng);

/// Mean cross-entropy over masked positions (`targets` -1 elsewhere).
Tensor mlm_loss(const Tensor& logits, std::span<const int> targets);

/// Mean cross-entropy between per-patch logits over M2 semantics and spike
/// label targets; -1 entries (unmasked or silent patches) are skipped.
Tensor mvm_loss(const Tensor& logits, std::span<const int> targets);

struct SpikeLabel {
  std::size_t row = 0;
  int label = 0;
  bool silent = false;
};

/// Argmax over the M2 spike counts of each listed row of `counts`
/// ([rows x M2]), lowest index on ties. All-zero rows get label 0 and are
/// flagged silent.
std::vector<SpikeLabel> generate_spike_labels(const Tensor& counts, std::span<const std::size_t> rows);

/// r[i][m] = <v_i, w_m> for already-normalized embeddings.
Tensor stua_score(const Tensor& visual_emb, const Tensor& text_emb);
/// Pools nothing: projects with `heads` first, then scores.
Tensor stua_score(const Tensor& visual, const Tensor& text, const AlignmentHeads& heads);

/// 0.5 * mean_s CE(softmax(r[s] / tau), one_hot(s)). Requires square r with
/// b >= 2.
Tensor stua_loss(const Tensor& scores, const Tensor& temperature);
Tensor stua_loss(const Tensor& scores, double temperature);

/// min(n / 3, 1). Negative n is a ParameterError.
double vqa_accuracy(int humans_matching);

}  // namespace ash::objectives
