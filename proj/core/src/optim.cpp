#include "ash/optim.hpp"

#include <cmath>

#include "ash/errors.hpp"

namespace ash {

void sgd_momentum_update(Tensor& param, SlotState& state, const OptimizerHyper& hyper) {
  if (!param.has_grad()) throw ContractError("optimizer step on parameter " + shape_str(param.shape()) + " without gradient");
  const auto g = param.grad();
  auto p = param.mutable_data();
  if (state.first.empty()) state.first.assign(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double grad = g[i] + hyper.weight_decay * p[i];
    state.first[i] = hyper.momentum * state.first[i] + grad;
    p[i] -= hyper.lr * state.first[i];
  }
  ++state.steps;
}

void adamw_update(Tensor& param, SlotState& state, const OptimizerHyper& hyper) {
  if (!param.has_grad()) throw ContractError("optimizer step on parameter " + shape_str(param.shape()) + " without gradient");
  const auto g = param.grad();
  auto p = param.mutable_data();
  if (state.first.empty()) {
    state.first.assign(p.size(), 0.0);
    state.second.assign(p.size(), 0.0);
  }
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] -= hyper.lr * hyper.weight_decay * p[i];
    state.first[i] = hyper.beta1 * state.first[i] + (1.0 - hyper.beta1) * g[i];
    state.second[i] = hyper.beta2 * state.second[i] + (1.0 - hyper.beta2) * g[i] * g[i];
    const double mhat = state.first[i] / c1;
    const double vhat = state.second[i] / c2;
    p[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

void Optimizer::add_group(ParamGroup group) {
  for (const auto& g : groups_) {
    if (g.name == group.name) throw ContractError("duplicate parameter group '" + group.name + "'");
  }
  state_.emplace_back(group.params.size());
  groups_.push_back(std::move(group));
}

ParamGroup& Optimizer::group(const std::string& name) {
  for (auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw ContractError("unknown parameter group '" + name + "'");
}

void Optimizer::zero_grad() {
  for (auto& g : groups_)
    for (auto& p : g.params) p.zero_grad();
}

void Optimizer::step() {
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    auto& g = groups_[gi];
    if (g.frozen) {
      for (auto& p : g.params) p.clear_grad();
      continue;
    }
    for (std::size_t pi = 0; pi < g.params.size(); ++pi) {
      if (g.kind == OptimizerKind::kSgdMomentum) {
        sgd_momentum_update(g.params[pi], state_[gi][pi], g.hyper);
      } else {
        adamw_update(g.params[pi], state_[gi][pi], g.hyper);
      }
    }
  }
}

}  // namespace ash
