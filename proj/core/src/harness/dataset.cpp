#include "ash/harness/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ash/errors.hpp"
#include "ash/rng.hpp"

namespace ash::harness {

namespace {

constexpr std::array<std::array<double, 3>, 8> kRgb{{{1.0, 0.0, 0.0},
                                                     {0.0, 1.0, 0.0},
                                                     {0.0, 0.0, 1.0},
                                                     {1.0, 1.0, 0.0},
                                                     {0.0, 1.0, 1.0},
                                                     {1.0, 0.0, 1.0},
                                                     {1.0, 1.0, 1.0},
                                                     {1.0, 0.5, 0.0}}};

constexpr std::size_t kCombos = kColors.size() * kShapes.size();

bool covers(std::size_t shape, double dx, double dy, double r) {
  const double dist = std::sqrt(dx * dx + dy * dy);
  switch (shape) {
    case 0: return dist <= r;
    case 1: return std::abs(dx) <= r - 1.0 && std::abs(dy) <= r - 1.0;
    case 2: return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2.0;
    case 3: return (std::abs(dx) <= 1.0 || std::abs(dy) <= 1.0) && std::abs(dx) <= r && std::abs(dy) <= r;
    case 4: return dist <= r && dist >= r - 2.0;
    default: return std::abs(dy) <= 1.5 && std::abs(dx) <= r;
  }
}

void draw(std::vector<double>& img, std::size_t size, const SceneObject& obj, double cx, double cy, double r,
          double brightness) {
  const std::size_t plane = size * size;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      if (!covers(obj.shape, static_cast<double>(x) - cx, static_cast<double>(y) - cy, r)) continue;
      for (std::size_t c = 0; c < 3; ++c) img[c * plane + y * size + x] = brightness * kRgb[obj.color][c];
    }
  }
}

template <std::size_t N>
std::size_t index_of(const std::array<std::string_view, N>& table, std::string_view word, std::string_view what) {
  const auto it = std::find(table.begin(), table.end(), word);
  if (it == table.end()) throw FormatError("caption: unknown " + std::string(what) + " '" + std::string(word) + "'");
  return static_cast<std::size_t>(it - table.begin());
}

}  // namespace

std::string caption_for(const std::array<SceneObject, 2>& objects) {
  std::string out = "a ";
  out += kColors.at(objects[0].color);
  out += ' ';
  out += kShapes.at(objects[0].shape);
  out += " left of a ";
  out += kColors.at(objects[1].color);
  out += ' ';
  out += kShapes.at(objects[1].shape);
  return out;
}

std::array<SceneObject, 2> parse_caption(std::string_view caption) {
  std::istringstream in{std::string(caption)};
  std::vector<std::string> w;
  for (std::string tok; in >> tok;) w.push_back(tok);
  if (w.size() != 8 || w[0] != "a" || w[3] != "left" || w[4] != "of" || w[5] != "a") {
    throw FormatError("caption does not match 'a {color} {shape} left of a {color} {shape}': " +
                      std::string(caption));
  }
  return {SceneObject{index_of(kColors, w[1], "color"), index_of(kShapes, w[2], "shape")},
          SceneObject{index_of(kColors, w[6], "color"), index_of(kShapes, w[7], "shape")}};
}

std::vector<SyntheticPair> generate_dataset(std::size_t n, std::uint64_t seed, std::size_t num_clusters,
                                            std::size_t image_size) {
  if (n < 2) throw ParameterError("dataset needs at least 2 pairs, got " + std::to_string(n));
  if (num_clusters < 1 || num_clusters > kCombos) {
    throw ParameterError("num_clusters must lie in [1, 48], got " + std::to_string(num_clusters));
  }
  if (image_size < 16 || image_size % 2 != 0) {
    throw ParameterError("image size must be even and at least 16, got " + std::to_string(image_size));
  }
  std::vector<SyntheticPair> out(n);
  const double half = static_cast<double>(image_size) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    SyntheticPair& p = out[i];
    p.id = i;
    p.cluster_id = i % num_clusters;
    p.size = image_size;
    // Stride 7 is coprime with 48, so clusters get distinct left objects.
    const std::size_t combo = (p.cluster_id * 7) % kCombos;
    p.objects[0] = {combo % kColors.size(), combo / kColors.size()};
    const auto right = static_cast<std::size_t>(rng.below(kCombos));
    p.objects[1] = {right % kColors.size(), right / kColors.size()};
    p.caption = caption_for(p.objects);

    p.image.resize(3 * image_size * image_size);
    for (auto& v : p.image) v = 0.08 * rng.uniform();
    const double r = half * 0.3 + rng.uniform(0.0, 1.0);
    for (std::size_t k = 0; k < 2; ++k) {
      const double cx = half * (k == 0 ? 0.5 : 1.5) + rng.uniform(-1.5, 1.5) - 0.5;
      const double cy = half + rng.uniform(-2.0, 2.0) - 0.5;
      draw(p.image, image_size, p.objects[k], cx, cy, r, rng.uniform(0.8, 1.0));
    }
  }
  return out;
}

}  // namespace ash::harness
