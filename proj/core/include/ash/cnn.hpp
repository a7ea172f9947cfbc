#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ash/checkpoint.hpp"
#include "ash/rng.hpp"
#include "ash/tensor.hpp"

namespace ash::cnn {

struct ConvStackConfig {
  std::size_t in_channels = 3;
  /// Output channels per block; the last entry is the token width M1. The
  /// first two blocks downsample by 2, later blocks keep resolution.
  std::vector<std::size_t> channels{8, 16, 32};
  /// Side of the square image region summarised by one token.
  std::size_t patch_stride = 8;
};

/// Residual convolutional concrete encoder. Each block computes
///   y = relu(conv3x3(x) + b) + skip(x)
/// where skip is the identity when shapes agree and a strided 1x1 convolution
/// otherwise. The last feature map is average-pooled onto the patch grid.
class ConvStack {
 public:
  ConvStack(const ConvStackConfig& cfg, Rng& rng);

  const ConvStackConfig& config() const noexcept { return cfg_; }
  std::size_t token_dim() const noexcept { return cfg_.channels.back(); }
  std::size_t downsample() const noexcept;
  /// Number of patch tokens N for an h x w input. Throws DimensionError if
  /// the sides are not multiples of the patch stride.
  std::size_t num_patches(std::size_t height, std::size_t width) const;

  /// [b x c x h x w] -> [(b*N) x M1], rows grouped by sample.
  Tensor encode_concrete(const Tensor& images) const;

  std::vector<Tensor> parameters() const;
  std::vector<NamedTensor> named_parameters(const std::string& prefix) const;

 private:
  struct Block {
    Tensor kernel;
    Tensor bias;
    Tensor skip;  // undefined for identity shortcuts
    std::size_t stride = 1;
  };

  ConvStackConfig cfg_;
  std::vector<Block> blocks_;
};

}  // namespace ash::cnn
