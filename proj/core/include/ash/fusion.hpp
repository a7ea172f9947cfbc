#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "ash/checkpoint.hpp"
#include "ash/rng.hpp"
#include "ash/tensor.hpp"

namespace ash::fusion {

enum class SrMode { kFixedZero, kFixedOne, kTrainable };

std::string_view to_string(SrMode mode);

/// Affine map M1 -> M1 feeding the sigmoid summary-ratio gate.
class SummaryGate {
 public:
  SummaryGate(std::size_t m1, Rng& rng);

  /// SR = sigmoid(f_cnn * W + b), one gate per token and feature.
  Tensor summary_ratio(const Tensor& f_cnn) const;

  Tensor& weight() noexcept { return weight_; }
  Tensor& bias() noexcept { return bias_; }
  std::vector<Tensor> parameters() const { return {weight_, bias_}; }
  std::vector<NamedTensor> named_parameters(const std::string& prefix) const {
    return {{prefix + "weight", weight_}, {prefix + "bias", bias_}};
  }

 private:
  Tensor weight_;
  Tensor bias_;
};

/// Functional form of the gate for callers holding their own parameters.
Tensor summary_ratio(const Tensor& f_cnn, const Tensor& weight, const Tensor& bias);

/// trainable:  sr * f_snn + f_cnn
/// fixed_one:  f_snn + f_cnn
/// fixed_zero: f_cnn (returned as-is)
/// `sr` is only read in trainable mode and may be undefined otherwise.
Tensor fuse(const Tensor& sr, const Tensor& f_snn, const Tensor& f_cnn, SrMode mode);

}  // namespace ash::fusion
