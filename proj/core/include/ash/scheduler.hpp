#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "ash/rng.hpp"
#include "ash/tensor.hpp"

namespace ash::sched {

enum class Phase { kFrozenWarmup, kReorganized };

std::string_view to_string(Phase phase);

/// Which objectives contribute to the training loss in a phase.
struct LossSet {
  bool itc = false;
  bool itm = false;
  bool mlm = false;
  bool mvm = false;
  bool stua = false;
};

LossSet losses_for(Phase phase);
/// True when the spiking weights and collector stay fixed in `phase`.
bool snn_frozen(Phase phase);

/// One epoch's batches over sample indices 0..n-1. `groups` records the
/// similarity groups the batches were packed from (empty for random plans).
struct EpochPlan {
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::vector<std::size_t>> groups;
  std::size_t retrieve_count = 0;
  Phase phase = Phase::kFrozenWarmup;

  std::size_t num_samples() const;
  /// JSON array of batches, each an array of ids.
  std::string to_json() const;
};

/// Cosine similarity between the rows of `embeddings` ([n x d]); the
/// diagonal is exactly 1.
Tensor similarity_matrix(const Tensor& embeddings);

/// The anchor followed by its phi - 1 most similar other samples, by
/// descending score with ties to the lowest id.
std::vector<std::size_t> retrieve(std::size_t anchor, std::size_t phi, const Tensor& sims);

/// Greedy cover: anchors are visited in a seeded random order; each unused
/// anchor claims itself plus its phi - 1 most similar unused samples, and the
/// groups are packed in order into batches of at most `batch_size` ids.
EpochPlan reorganize_epoch(std::size_t phi, const Tensor& sims, std::size_t batch_size, Rng& rng);

/// Shuffled ids cut into consecutive batches of `batch_size`.
EpochPlan random_plan(std::size_t n, std::size_t batch_size, Rng& rng);

/// Phase per epoch: the first `warmup_epochs` are frozen warmup, the rest
/// reorganized. Throws ConfigError unless warmup_epochs < total_epochs.
std::vector<Phase> training_schedule(std::size_t warmup_epochs, std::size_t total_epochs);

/// Mean pairwise similarity inside batches, averaged over batches with at
/// least two members.
double mean_intra_batch_similarity(const EpochPlan& plan, const Tensor& sims);

}  // namespace ash::sched
