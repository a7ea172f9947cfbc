#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ash/scheduler.hpp"
#include "ash/tensor.hpp"

namespace ash::harness {

/// Fraction of rows whose diagonal entry ranks among the row's top k scores.
/// Rank counts strictly higher scores plus equal scores at lower columns.
double recall_at_k(const Tensor& scores, std::size_t k);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // optimizer steps taken so far
  // Epoch means of the active losses; inactive ones stay empty.
  std::optional<double> itc, itm, mlm, mvm, stua;
  double r_at_1 = 0.0;
  double r_at_5 = 0.0;
  double r_at_10 = 0.0;
  sched::Phase phase = sched::Phase::kFrozenWarmup;

  double total_loss() const;
};

inline constexpr const char* kMetricsHeader =
    "epoch,step,loss_itc,loss_itm,loss_mlm,loss_mvm,loss_stua,r_at_1,r_at_5,r_at_10,phase";

std::string metrics_csv(const std::vector<EpochMetrics>& rows);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ash::harness
