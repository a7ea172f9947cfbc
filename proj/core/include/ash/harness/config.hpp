#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ash::harness {

/// Axes of a sweep. Empty axes keep the base value; the sweep runs the
/// Cartesian product of the non-empty ones, once per seed.
struct SweepAxes {
  std::vector<std::size_t> T;
  std::vector<std::size_t> retrieve_count;
  std::vector<std::string> sr_mode;
  std::vector<bool> collector_enabled;
  std::vector<std::uint64_t> seeds;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t dataset_size = 512;
  std::size_t num_clusters = 8;
  std::size_t image_size = 32;
  double holdout_fraction = 0.2;
  std::size_t eval_size = 64;

  std::size_t T = 10;
  std::size_t retrieve_count = 16;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  std::size_t warmup_epochs = 2;
  std::string sr_mode = "trainable";  // trainable | fixed_zero | fixed_one | snn_only
  bool collector_enabled = true;

  std::size_t M1 = 32;
  std::size_t M2 = 16;
  std::size_t snn_hidden = 32;
  std::size_t patch_stride = 8;
  double lif_leak = 0.5;
  double lif_threshold = 1.0;
  double surrogate_width = 2.0;

  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ff_dim = 128;
  std::size_t layers = 3;
  std::size_t max_seq_len = 40;
  std::size_t d_align = 32;
  double temperature = 0.07;
  std::size_t queue_capacity = 0;  // stale detached negatives collapse ITC; opt-in
  double mask_rate = 0.15;

  double lr_transformer = 1e-3;
  double lr_fusion = 1e-3;
  double lr_cnn = 1e-2;
  double lr_snn = 1e-2;
  double lr_collector = 1e-2;
  double momentum = 0.9;
  double weight_decay = 0.01;

  SweepAxes sweep;

  std::size_t num_patches() const { return (image_size / patch_stride) * (image_size / patch_stride); }
  std::size_t holdout_count() const;
  std::size_t train_count() const { return dataset_size - holdout_count(); }

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  /// Pretty-printed JSON of every field.
  std::string to_json() const;
};

/// Starts from defaults, applies the JSON document `text` (may be empty),
/// then each `key=value` override, and validates. Unknown keys, wrong types
/// and malformed JSON are ConfigErrors. Override values are parsed as JSON
/// and fall back to a plain string; "sweep.<axis>" addresses sweep axes.
RunConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace ash::harness
