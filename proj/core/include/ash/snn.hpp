#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ash/checkpoint.hpp"
#include "ash/optim.hpp"
#include "ash/rng.hpp"
#include "ash/spike_codec.hpp"
#include "ash/tensor.hpp"

namespace ash::snn {

/// Discrete-time LIF parameters.
struct LifConfig {
  double u_rest = 0.0;
  double u_reset = 0.0;
  double threshold = 1.0;
  double leak = 0.5;             // per-step decay, in (0, 1]
  double surrogate_width = 2.0;  // alpha of the tanh surrogate

  /// Throws ParameterError unless 0 < leak <= 1, threshold > u_reset and
  /// surrogate_width > 0.
  void validate() const;
};

struct MembraneState {
  Tensor u;
  std::size_t step = 0;

  static MembraneState at_rest(Shape shape, const LifConfig& cfg);
};

struct LifOutput {
  Tensor spikes;
  MembraneState state;
};

/// Heaviside forward (1 iff membrane >= threshold). Backward uses
/// d spike / d u = (1 - tanh^2((u - threshold) / width)) / width.
Tensor spike_fn(const Tensor& membrane, double threshold, double width);

/// One LIF update:
///   u' = leak * (u - u_rest) + u_rest + input
///   spike = [u' >= threshold]; fired neurons are set to u_reset.
/// The reset path carries gradient only through non-firing neurons; the spike
/// itself is differentiated through the surrogate.
LifOutput lif_step(const LifConfig& cfg, const MembraneState& state, const Tensor& input);

/// Threshold-dependent batch norm over the rows of `pre` (the batch*time
/// population), independently per column:
///   y = threshold * scale * (x - mean) / sqrt(max(var, eps)) + shift
/// with the biased population variance. The variance floor only engages for
/// near-constant columns.
Tensor tdbn(const Tensor& pre, double threshold, const Tensor& scale, const Tensor& shift, double eps = 1e-5);

/// Activation-weighted mix of codebook columns per row:
///   F[r] = (sum_j S[r][j] * C[:, j]) / (sum_j S[r][j])
/// `counts` is [rows x M2], `codebook` is [M1 x M2]; result is [rows x M1].
/// Rows with zero total activation read out as exact zeros.
Tensor collector_readout(const Tensor& counts, const Tensor& codebook);

/// Trainable M1 x M2 codebook; column j is basis semantic j.
class SemanticCollector {
 public:
  SemanticCollector(std::size_t m1, std::size_t m2, Rng& rng);

  std::size_t m1() const { return codebook_.dim(0); }
  std::size_t m2() const { return codebook_.dim(1); }
  Tensor& codebook() noexcept { return codebook_; }
  const Tensor& codebook() const noexcept { return codebook_; }

  Tensor readout(const Tensor& counts) const { return collector_readout(counts, codebook_); }

 private:
  Tensor codebook_;
};

struct SnnEncoderConfig {
  std::size_t patches = 16;     // N
  std::size_t patch_area = 64;  // input units per patch
  std::size_t hidden = 32;      // first spiking layer width
  std::size_t m2 = 16;          // output width per patch
  LifConfig lif;
};

/// Two-layer spiking stack applied per patch with shared weights:
///   spikes -> affine -> tdBN -> LIF -> affine -> tdBN -> LIF.
class SnnEncoder {
 public:
  SnnEncoder(const SnnEncoderConfig& cfg, Rng& rng);

  const SnnEncoderConfig& config() const noexcept { return cfg_; }

  /// Presents the b trains one after another without clearing membranes
  /// between them (unless `reset_between_samples`); state starts at rest for
  /// each call. Returns per-sample output spike counts, [(b*N) x M2], rows
  /// grouped by sample. Each train must have N*patch_area units ordered
  /// patch-major (see spike::grayscale_patches) and a common T.
  Tensor encode_abstract(const std::vector<spike::SpikeTrain>& trains, bool reset_between_samples = false) const;

  std::vector<Tensor> parameters() const;
  std::vector<NamedTensor> named_parameters(const std::string& prefix) const;

 private:
  Tensor run_layer(const Tensor& currents, std::size_t width, std::size_t steps_per_sample, std::size_t samples,
                   bool reset_between_samples, std::vector<Tensor>& spikes_out) const;

  SnnEncoderConfig cfg_;
  Tensor w1_, scale1_, shift1_;
  Tensor w2_, scale2_, shift2_;
};

inline constexpr const char* kSnnGroup = "snn";
inline constexpr const char* kCollectorGroup = "collector";

/// Freezes or releases the spiking weights and collector groups of an
/// optimizer. While frozen their gradients are discarded at step time.
void set_frozen(Optimizer& optimizer, bool frozen);

}  // namespace ash::snn
