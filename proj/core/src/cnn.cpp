#include "ash/cnn.hpp"

#include <cmath>

#include "ash/errors.hpp"
#include "ash/ops.hpp"

namespace ash::cnn {

ConvStack::ConvStack(const ConvStackConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.channels.empty()) throw ParameterError("ConvStack: at least one block is required");
  if (cfg.patch_stride == 0 || cfg.patch_stride % downsample() != 0) {
    throw ParameterError("ConvStack: patch stride " + std::to_string(cfg.patch_stride) +
                         " must be a multiple of the block downsampling " + std::to_string(downsample()));
  }
  std::size_t in = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    const std::size_t out = cfg.channels[i];
    Block b;
    b.stride = i < 2 ? 2 : 1;
    b.kernel = Tensor::randn({out, in, 3, 3}, rng, std::sqrt(2.0 / static_cast<double>(in * 9)));
    b.bias = Tensor({out}, 0.0);
    b.kernel.set_requires_grad(true);
    b.bias.set_requires_grad(true);
    if (in != out || b.stride != 1) {
      b.skip = Tensor::randn({out, in, 1, 1}, rng, std::sqrt(1.0 / static_cast<double>(in)));
      b.skip.set_requires_grad(true);
    }
    blocks_.push_back(std::move(b));
    in = out;
  }
}

std::size_t ConvStack::downsample() const noexcept {
  return cfg_.channels.size() >= 2 ? 4 : (cfg_.channels.empty() ? 1 : 2);
}

std::size_t ConvStack::num_patches(std::size_t height, std::size_t width) const {
  const std::size_t s = cfg_.patch_stride;
  if (height % s != 0 || width % s != 0) {
    throw DimensionError("ConvStack: image " + std::to_string(height) + "x" + std::to_string(width) +
                         " not divisible by patch stride " + std::to_string(s));
  }
  return (height / s) * (width / s);
}

Tensor ConvStack::encode_concrete(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != cfg_.in_channels) {
    throw DimensionError("encode_concrete: expected [b x " + std::to_string(cfg_.in_channels) + " x h x w], got " +
                         shape_str(images.shape()));
  }
  num_patches(images.dim(2), images.dim(3));
  Tensor x = images;
  for (const auto& b : blocks_) {
    Tensor y = relu(add_channel_bias(conv2d(x, b.kernel, {b.stride, 1}), b.bias));
    Tensor shortcut = b.skip.defined() ? conv2d(x, b.skip, {b.stride, 0}) : x;
    x = add(y, shortcut);
  }
  const std::size_t pool = cfg_.patch_stride / downsample();
  if (pool > 1) x = avg_pool2d(x, pool);
  return patch_tokens(x);
}

std::vector<Tensor> ConvStack::parameters() const {
  std::vector<Tensor> out;
  for (const auto& b : blocks_) {
    out.push_back(b.kernel);
    out.push_back(b.bias);
    if (b.skip.defined()) out.push_back(b.skip);
  }
  return out;
}

std::vector<NamedTensor> ConvStack::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = prefix + "block" + std::to_string(i) + ".";
    out.push_back({p + "kernel", blocks_[i].kernel});
    out.push_back({p + "bias", blocks_[i].bias});
    if (blocks_[i].skip.defined()) out.push_back({p + "skip", blocks_[i].skip});
  }
  return out;
}

}  // namespace ash::cnn
