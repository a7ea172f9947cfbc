#include "ash/harness/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "ash/errors.hpp"

namespace ash::harness {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

double recall_at_k(const Tensor& scores, std::size_t k) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) {
    throw DimensionError("recall_at_k expects a square score matrix, got " + shape_str(scores.shape()));
  }
  const std::size_t n = scores.dim(0);
  if (k < 1 || k > n) throw ParameterError("recall_at_k: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  const auto s = scores.data();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = s.data() + i * n;
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (row[j] > row[i] || (row[j] == row[i] && j < i)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double EpochMetrics::total_loss() const {
  double t = 0.0;
  for (const auto& v : {itc, itm, mlm, mvm, stua})
    if (v) t += *v;
  return t;
}

std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + ',' + std::to_string(r.step) + ',' + fmt(r.itc) + ',' + fmt(r.itm) + ',' +
           fmt(r.mlm) + ',' + fmt(r.mvm) + ',' + fmt(r.stua) + ',' + fmt(r.r_at_1) + ',' + fmt(r.r_at_5) + ',' +
           fmt(r.r_at_10) + ',' + std::string(sched::to_string(r.phase)) + '\n';
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace ash::harness
