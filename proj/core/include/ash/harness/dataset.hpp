#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ash::harness {

inline constexpr std::array<std::string_view, 8> kColors{"red",  "green",   "blue",  "yellow",
                                                         "cyan", "magenta", "white", "orange"};
inline constexpr std::array<std::string_view, 6> kShapes{"circle", "square", "triangle", "cross", "ring", "bar"};

struct SceneObject {
  std::size_t color = 0;
  std::size_t shape = 0;
  bool operator==(const SceneObject&) const = default;
};

/// One image-caption pair. The image is channels x size x size in [0, 1].
struct SyntheticPair {
  std::size_t id = 0;
  std::size_t cluster_id = 0;
  std::array<SceneObject, 2> objects{};  // left, right
  std::size_t channels = 3;
  std::size_t size = 32;
  std::vector<double> image;
  std::string caption;
};

/// "a {color} {shape} left of a {color} {shape}".
std::string caption_for(const std::array<SceneObject, 2>& objects);
/// Inverse of caption_for. Throws FormatError on anything off-grammar.
std::array<SceneObject, 2> parse_caption(std::string_view caption);

/// The left object is fixed by the cluster (sample i is in cluster
/// i % num_clusters); the right object, jitter and noise are drawn from a
/// per-sample stream derived from `seed`. Throws ParameterError for n < 2,
/// num_clusters outside [1, 48] or an image size below 16 / not even.
std::vector<SyntheticPair> generate_dataset(std::size_t n, std::uint64_t seed, std::size_t num_clusters = 8,
                                            std::size_t image_size = 32);

}  // namespace ash::harness
