#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

#include "acceptance.hpp"

namespace {

using ash::acceptance::Verdict;

struct Criterion {
  int id;
  const char* title;
  Verdict (*run)();
};

const std::vector<Criterion>& criteria() {
  using namespace ash::acceptance;
  static const std::vector<Criterion> all{
      {1, "gradient suite", gradient_suite},
      {2, "LIF scalar oracle", lif_oracle},
      {3, "spike contracts", spike_contracts},
      {4, "collector readout oracle", collector_oracle},
      {5, "STUA identities", stua_identities},
      {6, "retrieval and reorganization oracles", retrieval_oracles},
      {7, "freeze contract", freeze_contract},
      {8, "smoke training", smoke_training},
      {9, "summary-ratio regime trend", sr_regime_trend},
      {10, "time window and retrieve count sweeps", time_window_sweep},
      {11, "VQA accuracy utility", vqa_utility},
      {12, "determinism", determinism},
  };
  return all;
}

}  // namespace

// Usage: ashnet_acceptance [id ...]. Runs every criterion when no id is given
// and prints one line per criterion; exits non-zero if any fails.
int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  bool all_pass = true;
  for (const auto& c : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d %s  %s: %s [%.1f s]\n", c.id, v.pass ? "PASS" : "FAIL", c.title, v.detail.c_str(), secs);
    std::fflush(stdout);
    all_pass = all_pass && v.pass;
  }
  return all_pass ? 0 : 1;
}
