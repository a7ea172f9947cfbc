#include "ash/fusion.hpp"

#include <cmath>

#include "ash/errors.hpp"
#include "ash/ops.hpp"

namespace ash::fusion {

std::string_view to_string(SrMode mode) {
  switch (mode) {
    case SrMode::kFixedZero: return "fixed_zero";
    case SrMode::kFixedOne: return "fixed_one";
    case SrMode::kTrainable: return "trainable";
  }
  return "unknown";
}

SummaryGate::SummaryGate(std::size_t m1, Rng& rng)
    : weight_(Tensor::randn({m1, m1}, rng, 1.0 / std::sqrt(static_cast<double>(m1)))), bias_({m1}, 0.0) {
  weight_.set_requires_grad(true);
  bias_.set_requires_grad(true);
}

Tensor SummaryGate::summary_ratio(const Tensor& f_cnn) const { return fusion::summary_ratio(f_cnn, weight_, bias_); }

Tensor summary_ratio(const Tensor& f_cnn, const Tensor& weight, const Tensor& bias) {
  if (f_cnn.rank() != 2 || weight.rank() != 2 || weight.dim(0) != f_cnn.dim(1) || weight.dim(1) != f_cnn.dim(1)) {
    throw DimensionError("summary_ratio: features " + shape_str(f_cnn.shape()) + " vs gate " +
                         shape_str(weight.shape()));
  }
  return sigmoid(linear(f_cnn, weight, bias));
}

Tensor fuse(const Tensor& sr, const Tensor& f_snn, const Tensor& f_cnn, SrMode mode) {
  if (f_snn.shape() != f_cnn.shape()) {
    throw DimensionError("fuse: SNN stream " + shape_str(f_snn.shape()) + " vs CNN stream " + shape_str(f_cnn.shape()));
  }
  switch (mode) {
    case SrMode::kFixedZero: return f_cnn;
    case SrMode::kFixedOne: return add(f_snn, f_cnn);
    case SrMode::kTrainable:
      if (sr.shape() != f_cnn.shape()) {
        throw DimensionError("fuse: summary ratio " + shape_str(sr.shape()) + " vs streams " + shape_str(f_cnn.shape()));
      }
      return add(mul(sr, f_snn), f_cnn);
  }
  throw ContractError("fuse: unknown mode");
}

}  // namespace ash::fusion
