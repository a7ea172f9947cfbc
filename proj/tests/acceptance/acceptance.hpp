#pragma once

#include <string>

namespace ash::acceptance {

struct Verdict {
  bool pass = false;
  std::string detail;
};

Verdict gradient_suite();         // 1
Verdict lif_oracle();             // 2
Verdict spike_contracts();        // 3
Verdict collector_oracle();       // 4
Verdict stua_identities();        // 5
Verdict retrieval_oracles();      // 6
Verdict freeze_contract();        // 7
Verdict smoke_training();         // 8
Verdict sr_regime_trend();        // 9
Verdict time_window_sweep();      // 10
Verdict vqa_utility();            // 11
Verdict determinism();            // 12

}  // namespace ash::acceptance
