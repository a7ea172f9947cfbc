#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ash::spike {

/// Binary spike raster of `num_units` x `steps`, stored unit-major as bytes.
class SpikeTrain {
 public:
  SpikeTrain(std::size_t num_units, std::size_t steps);

  std::size_t num_units() const noexcept { return units_; }
  std::size_t steps() const noexcept { return steps_; }

  std::uint8_t at(std::size_t unit, std::size_t t) const { return values_[unit * steps_ + t]; }
  void set(std::size_t unit, std::size_t t, bool fired) { values_[unit * steps_ + t] = fired ? 1 : 0; }
  std::span<const std::uint8_t> values() const noexcept { return values_; }

  bool operator==(const SpikeTrain&) const = default;

 private:
  std::size_t units_;
  std::size_t steps_;
  std::vector<std::uint8_t> values_;
};

/// Rate coding: unit u fires at each step independently with probability
/// clamp(intensity[u], 0, 1). Deterministic in (intensities, steps, seed).
SpikeTrain encode_probabilistic(std::span<const double> intensities, std::size_t steps, std::uint64_t seed);

/// Fraction of steps in which each unit fired.
std::vector<double> spike_rate(const SpikeTrain& train);

/// Channel-mean grayscale of a c x h x w image, regrouped patch-major: the
/// result has (h/patch)*(w/patch) consecutive blocks of patch*patch values,
/// patches in row-major grid order and pixels row-major within a patch.
std::vector<double> grayscale_patches(std::span<const double> image, std::size_t channels, std::size_t height,
                                      std::size_t width, std::size_t patch);

}  // namespace ash::spike
