#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace ash::harness {

/// Planar channels x height x width intensities in [0, 1].
struct Image {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;
};

/// Parses binary P5 (grey) or P6 (RGB) with maxval 255. Grey input is
/// replicated into three channels. Errors are FormatErrors naming the byte
/// offset where parsing stopped.
Image decode_pnm(std::span<const unsigned char> bytes);
Image load_image_pgm_ppm(const std::filesystem::path& path);

/// Writes P6 for three channels and P5 for one; values are clamped to [0, 1]
/// and rounded to 8 bits.
std::vector<unsigned char> encode_pnm(const Image& image);
void save_image_pgm_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace ash::harness
