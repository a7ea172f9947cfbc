#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ash/harness/config.hpp"
#include "ash/harness/dataset.hpp"
#include "ash/harness/metrics.hpp"
#include "ash/harness/model.hpp"

namespace ash::harness {

struct StepInfo {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // 1-based global step
  sched::Phase phase = sched::Phase::kFrozenWarmup;
  double loss = 0.0;
};

struct TrainOptions {
  /// Output directory; nothing is written when empty.
  std::filesystem::path out_dir;
  bool dump_plans = false;
  bool write_checkpoint = true;
  /// Called after every optimizer step.
  std::function<void(const StepInfo&, AshNet&)> on_step;
  /// Called after every epoch's evaluation.
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct RecallResult {
  double r_at_1 = 0.0;
  double r_at_5 = 0.0;
  double r_at_10 = 0.0;
  std::size_t pairs = 0;
};

/// Owns the dataset split, cached spike trains and tokens, the model and its
/// optimizer. Pairs [0, train_count) train; the first eval_size pairs after
/// them are the evaluation set.
class Trainer {
 public:
  explicit Trainer(RunConfig cfg);

  const RunConfig& config() const noexcept { return cfg_; }
  AshNet& model() noexcept { return *model_; }
  const std::vector<SyntheticPair>& dataset() const noexcept { return data_; }

  /// Runs the full schedule. Throws DivergenceError on a non-finite loss.
  std::vector<EpochMetrics> train(const TrainOptions& options = {});

  /// Image-to-text Recall@{1,5,10} over the evaluation pairs using ITC
  /// scores (k is capped at the number of pairs).
  RecallResult evaluate();
  /// ITC score matrix between evaluation images (rows) and captions.
  Tensor evaluation_scores();
  /// Normalized ITC image embeddings of `ids`, encoded in batch_size chunks.
  Tensor image_embeddings(std::span<const std::size_t> ids);

  void save(const std::filesystem::path& checkpoint) const;
  void load(const std::filesystem::path& checkpoint);

 private:
  Tensor images_of(std::span<const std::size_t> ids) const;
  std::vector<spike::SpikeTrain> trains_of(std::span<const std::size_t> ids) const;
  std::vector<align::TokenSequence> texts_of(std::span<const std::size_t> ids) const;
  Tensor text_embeddings(std::span<const std::size_t> ids);

  struct StepLosses {
    Tensor itc, itm, mlm, mvm, stua;
  };
  StepLosses step_losses(std::span<const std::size_t> ids, const sched::LossSet& active);

  RunConfig cfg_;
  std::vector<SyntheticPair> data_;
  std::vector<align::TokenSequence> tokens_;
  std::vector<std::size_t> caption_key_;
  std::vector<spike::SpikeTrain> trains_;
  std::unique_ptr<AshNet> model_;
  Optimizer optimizer_;
  Rng rng_;
};

struct SweepRow {
  std::size_t cell = 0;
  std::uint64_t seed = 0;
  std::size_t T = 0;
  std::size_t retrieve_count = 0;
  std::string sr_mode;
  bool collector_enabled = true;
  double final_loss = 0.0;
  double r_at_1 = 0.0;
  double r_at_5 = 0.0;
  double r_at_10 = 0.0;
};

inline constexpr const char* kSweepHeader =
    "cell,seed,T,retrieve_count,sr_mode,collector_enabled,final_loss,r_at_1,r_at_5,r_at_10";

/// Every configuration of the Cartesian product of the non-empty sweep axes,
/// crossed with the sweep seeds (or the base seed).
std::vector<RunConfig> sweep_cells(const RunConfig& base);

/// Trains every cell without writing files; `progress` sees each row as it
/// completes.
std::vector<SweepRow> run_sweep(const RunConfig& base, const std::function<void(const SweepRow&)>& progress = {});
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Tokenized captions share one vocabulary built from the fixed palettes.
align::Vocabulary caption_vocabulary();

}  // namespace ash::harness
