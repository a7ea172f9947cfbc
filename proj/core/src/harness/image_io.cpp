#include "ash/harness/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "ash/errors.hpp"

namespace ash::harness {

namespace {

[[noreturn]] void fail(std::size_t offset, const std::string& what) {
  throw FormatError("PNM byte " + std::to_string(offset) + ": " + what);
}

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::size_t pos() const noexcept { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (std::size_t{1} << 24)) fail(start, std::string(what) + " is implausibly large");
      ++pos_;
    }
    if (pos_ == start) fail(start, std::string("expected ") + what);
    return value;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail(pos_, "expected whitespace before pixel data");
    ++pos_;
  }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 2;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Image decode_pnm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    fail(0, "bad magic, expected P5 or P6");
  }
  const bool rgb = bytes[1] == '6';
  HeaderReader h(bytes);
  const std::size_t width = h.number("width");
  const std::size_t height = h.number("height");
  h.skip_space_and_comments();
  const std::size_t maxval_at = h.pos();
  const std::size_t maxval = h.number("maxval");
  if (width == 0 || height == 0) fail(maxval_at, "zero image dimension");
  if (maxval != 255) fail(maxval_at, "maxval must be 255, got " + std::to_string(maxval));
  h.single_whitespace();

  const std::size_t src_channels = rgb ? 3 : 1;
  const std::size_t need = width * height * src_channels;
  if (bytes.size() - h.pos() < need) {
    fail(bytes.size(), "truncated payload, expected " + std::to_string(need) + " bytes from offset " +
                           std::to_string(h.pos()));
  }
  Image img{3, height, width, std::vector<double>(3 * width * height)};
  const std::size_t plane = width * height;
  const unsigned char* px = bytes.data() + h.pos();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      img.data[c * plane + i] = static_cast<double>(px[i * src_channels + (rgb ? c : 0)]) / 255.0;
    }
  }
  return img;
}

Image load_image_pgm_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_pnm(bytes);
}

std::vector<unsigned char> encode_pnm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ParameterError("PNM output needs 1 or 3 channels, got " + std::to_string(image.channels));
  }
  const std::size_t plane = image.height * image.width;
  if (image.data.size() != plane * image.channels) throw DimensionError("image data does not match its dimensions");
  const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(image.width) +
                             " " + std::to_string(image.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + plane * image.channels);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < image.channels; ++c) {
      const double v = std::clamp(image.data[c * plane + i], 0.0, 1.0);
      out.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  }
  return out;
}

void save_image_pgm_ppm(const std::filesystem::path& path, const Image& image) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ash::harness
