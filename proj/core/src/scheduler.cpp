#include "ash/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "ash/errors.hpp"

namespace ash::sched {

namespace {

void require_square(const Tensor& sims) {
  if (sims.rank() != 2 || sims.dim(0) != sims.dim(1)) {
    throw DimensionError("similarity matrix must be square, got " + shape_str(sims.shape()));
  }
}

// Ids ordered by descending similarity to `anchor`, lowest id first on ties.
bool more_similar(const double* row, std::size_t a, std::size_t b) {
  if (row[a] != row[b]) return row[a] > row[b];
  return a < b;
}

}  // namespace

std::string_view to_string(Phase phase) {
  return phase == Phase::kFrozenWarmup ? "frozen_warmup" : "reorganized";
}

LossSet losses_for(Phase phase) {
  if (phase == Phase::kFrozenWarmup) return {.itc = true, .itm = true, .mlm = true, .mvm = false, .stua = false};
  return {.itc = true, .itm = true, .mlm = true, .mvm = true, .stua = true};
}

bool snn_frozen(Phase phase) { return phase == Phase::kFrozenWarmup; }

std::size_t EpochPlan::num_samples() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.size();
  return n;
}

std::string EpochPlan::to_json() const { return nlohmann::json(batches).dump(); }

Tensor similarity_matrix(const Tensor& embeddings) {
  if (embeddings.rank() != 2) throw DimensionError("similarity_matrix expects [n x d] embeddings");
  const std::size_t n = embeddings.dim(0), d = embeddings.dim(1);
  const auto e = embeddings.data();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += e[i * d + k] * e[i * d + k];
    norms[i] = std::sqrt(s);
  }
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += e[i * d + k] * e[j * d + k];
      const double denom = norms[i] * norms[j];
      const double c = denom > 0.0 ? dot / denom : 0.0;
      out[i * n + j] = c;
      out[j * n + i] = c;
    }
  }
  return Tensor({n, n}, std::move(out));
}

std::vector<std::size_t> retrieve(std::size_t anchor, std::size_t phi, const Tensor& sims) {
  require_square(sims);
  const std::size_t n = sims.dim(0);
  if (phi < 1 || phi > n) {
    throw ParameterError("retrieve count " + std::to_string(phi) + " outside [1, " + std::to_string(n) + "]");
  }
  if (anchor >= n) throw ParameterError("anchor " + std::to_string(anchor) + " out of range");
  const double* row = sims.data().data() + anchor * n;
  std::vector<std::size_t> others;
  others.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j)
    if (j != anchor) others.push_back(j);
  std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(phi - 1), others.end(),
                    [row](std::size_t a, std::size_t b) { return more_similar(row, a, b); });
  std::vector<std::size_t> out{anchor};
  out.insert(out.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(phi - 1));
  return out;
}

EpochPlan reorganize_epoch(std::size_t phi, const Tensor& sims, std::size_t batch_size, Rng& rng) {
  require_square(sims);
  const std::size_t n = sims.dim(0);
  if (phi < 1 || phi > batch_size) {
    throw ParameterError("retrieve count " + std::to_string(phi) + " must lie in [1, batch_size=" +
                         std::to_string(batch_size) + "]");
  }
  std::vector<std::size_t> anchors(n);
  std::iota(anchors.begin(), anchors.end(), std::size_t{0});
  rng.shuffle(anchors);

  EpochPlan plan;
  plan.retrieve_count = phi;
  plan.phase = Phase::kReorganized;
  std::vector<bool> used(n, false);
  std::vector<std::size_t> candidates;
  for (std::size_t anchor : anchors) {
    if (used[anchor]) continue;
    const double* row = sims.data().data() + anchor * n;
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (!used[j] && j != anchor) candidates.push_back(j);
    const std::size_t take = std::min(phi - 1, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      [row](std::size_t a, std::size_t b) { return more_similar(row, a, b); });
    std::vector<std::size_t> group{anchor};
    group.insert(group.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take));
    for (std::size_t id : group) used[id] = true;
    plan.groups.push_back(std::move(group));
  }

  std::vector<std::size_t> current;
  for (const auto& g : plan.groups) {
    if (current.size() + g.size() > batch_size) {
      plan.batches.push_back(std::move(current));
      current.clear();
    }
    current.insert(current.end(), g.begin(), g.end());
  }
  if (!current.empty()) plan.batches.push_back(std::move(current));
  return plan;
}

EpochPlan random_plan(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ParameterError("batch size must be positive");
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  rng.shuffle(ids);
  EpochPlan plan;
  plan.phase = Phase::kFrozenWarmup;
  for (std::size_t i = 0; i < n; i += batch_size) {
    plan.batches.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(i),
                              ids.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return plan;
}

std::vector<Phase> training_schedule(std::size_t warmup_epochs, std::size_t total_epochs) {
  if (warmup_epochs >= total_epochs) {
    throw ConfigError("warmup_epochs", "must be smaller than epochs (" + std::to_string(warmup_epochs) +
                                           " >= " + std::to_string(total_epochs) + ")");
  }
  std::vector<Phase> phases(total_epochs, Phase::kReorganized);
  std::fill_n(phases.begin(), warmup_epochs, Phase::kFrozenWarmup);
  return phases;
}

double mean_intra_batch_similarity(const EpochPlan& plan, const Tensor& sims) {
  require_square(sims);
  const std::size_t n = sims.dim(0);
  const auto s = sims.data();
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& b : plan.batches) {
    if (b.size() < 2) continue;
    double acc = 0.0;
    for (std::size_t x = 0; x < b.size(); ++x)
      for (std::size_t y = x + 1; y < b.size(); ++y) acc += s[b[x] * n + b[y]];
    total += acc / static_cast<double>(b.size() * (b.size() - 1) / 2);
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

}  // namespace ash::sched
