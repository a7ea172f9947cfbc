#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ash/tensor.hpp"

namespace ash {

enum class OptimizerKind { kSgdMomentum, kAdamW };

struct OptimizerHyper {
  double lr = 1e-2;
  double momentum = 0.9;     // SGD only
  double weight_decay = 0.0; // L2 for SGD, decoupled for AdamW
  double beta1 = 0.9;        // AdamW only
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter optimizer state: SGD uses `first` as the velocity buffer,
/// AdamW uses both moments.
struct SlotState {
  std::vector<double> first;
  std::vector<double> second;
  std::uint64_t steps = 0;
};

/// One SGD-with-momentum update (PyTorch convention: v <- mu*v + g + wd*p,
/// p <- p - lr*v).
void sgd_momentum_update(Tensor& param, SlotState& state, const OptimizerHyper& hyper);

/// One AdamW update with bias correction and decoupled weight decay.
void adamw_update(Tensor& param, SlotState& state, const OptimizerHyper& hyper);

struct ParamGroup {
  std::string name;
  std::vector<Tensor> params;
  OptimizerKind kind = OptimizerKind::kSgdMomentum;
  OptimizerHyper hyper;
  bool frozen = false;
};

/// Holds parameter groups, each with its own update rule. A frozen group keeps
/// its tensors bit-identical: its gradients are discarded at step time and no
/// optimizer state advances.
class Optimizer {
 public:
  void add_group(ParamGroup group);
  ParamGroup& group(const std::string& name);
  const std::vector<ParamGroup>& groups() const noexcept { return groups_; }

  void set_frozen(const std::string& name, bool frozen) { group(name).frozen = frozen; }
  void set_lr(const std::string& name, double lr) { group(name).hyper.lr = lr; }

  /// Allocates zero gradients on every parameter.
  void zero_grad();
  /// Applies one update to every non-frozen group. Throws ContractError if a
  /// parameter of an active group has no gradient buffer.
  void step();

 private:
  std::vector<ParamGroup> groups_;
  std::vector<std::vector<SlotState>> state_;
};

}  // namespace ash
