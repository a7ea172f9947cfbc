#include "ash/spike_codec.hpp"

#include <algorithm>
#include <string>

#include "ash/errors.hpp"
#include "ash/rng.hpp"

namespace ash::spike {

SpikeTrain::SpikeTrain(std::size_t num_units, std::size_t steps)
    : units_(num_units), steps_(steps), values_(num_units * steps, 0) {
  if (steps == 0) throw ParameterError("spike train needs at least one time step");
}

SpikeTrain encode_probabilistic(std::span<const double> intensities, std::size_t steps, std::uint64_t seed) {
  if (steps < 1) throw ParameterError("encode_probabilistic: T must be >= 1");
  SpikeTrain train(intensities.size(), steps);
  Rng rng(seed);
  for (std::size_t u = 0; u < intensities.size(); ++u) {
    const double p = std::clamp(intensities[u], 0.0, 1.0);
    for (std::size_t t = 0; t < steps; ++t) train.set(u, t, rng.uniform() < p);
  }
  return train;
}

std::vector<double> spike_rate(const SpikeTrain& train) {
  std::vector<double> rate(train.num_units(), 0.0);
  const auto v = train.values();
  for (std::size_t u = 0; u < train.num_units(); ++u) {
    std::size_t count = 0;
    for (std::size_t t = 0; t < train.steps(); ++t) count += v[u * train.steps() + t];
    rate[u] = static_cast<double>(count) / static_cast<double>(train.steps());
  }
  return rate;
}

std::vector<double> grayscale_patches(std::span<const double> image, std::size_t channels, std::size_t height,
                                      std::size_t width, std::size_t patch) {
  if (image.size() != channels * height * width || channels == 0) {
    throw DimensionError("grayscale_patches: image of " + std::to_string(image.size()) + " values is not " +
                         std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width));
  }
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw DimensionError("grayscale_patches: patch " + std::to_string(patch) + " does not tile " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t gw = width / patch;
  std::vector<double> out(height * width);
  const double inv = 1.0 / static_cast<double>(channels);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double g = 0.0;
      for (std::size_t c = 0; c < channels; ++c) g += image[(c * height + y) * width + x];
      const std::size_t p = (y / patch) * gw + x / patch;
      out[p * patch * patch + (y % patch) * patch + x % patch] = g * inv;
    }
  }
  return out;
}

}  // namespace ash::spike
