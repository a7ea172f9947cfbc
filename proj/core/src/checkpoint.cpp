#include "ash/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <json.hpp>

#include "ash/errors.hpp"

namespace ash {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'A', 'S', 'H', 'C', 'K', 'P', 'T', '1'};

std::size_t align8(std::size_t n) { return (n + 7) & ~std::size_t{7}; }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  nlohmann::json entries = nlohmann::json::array();
  // Offsets depend on the header length, which depends on the offsets; the
  // header is padded to a fixed width per iteration until it stabilises.
  std::size_t header_len = 0;
  std::string header;
  for (int pass = 0; pass < 4; ++pass) {
    entries = nlohmann::json::array();
    std::size_t offset = align8(16 + header_len);
    for (const auto& t : tensors) {
      const std::size_t nbytes = t.tensor.numel() * sizeof(double);
      entries.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", offset}, {"nbytes", nbytes}});
      offset += align8(nbytes);
    }
    header = nlohmann::json{{"format", "ashnet-checkpoint"}, {"version", 1}, {"tensors", entries}}.dump();
    if (header.size() == header_len) break;
    header_len = header.size();
  }
  if (header.size() != header_len) throw ContractError("checkpoint header did not converge");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kMagic, 8);
  std::uint64_t len = header_len;
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::size_t pos = 16 + header.size();
  const char zeros[8] = {};
  out.write(zeros, static_cast<std::streamsize>(align8(pos) - pos));
  for (const auto& t : tensors) {
    const auto d = t.tensor.data();
    const std::size_t nbytes = d.size() * sizeof(double);
    out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(nbytes));
    out.write(zeros, static_cast<std::streamsize>(align8(nbytes) - nbytes));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw FormatError("checkpoint truncated at byte offset " + std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("bad checkpoint magic at byte offset 0");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, 8);
  if (16 + header_len > bytes.size()) throw FormatError("checkpoint header truncated at byte offset " + std::to_string(bytes.size()));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON at byte offset 16: ") + e.what());
  }
  std::vector<NamedTensor> result;
  try {
    for (const auto& e : header.at("tensors")) {
      const Shape shape = e.at("shape").get<Shape>();
      const std::size_t offset = e.at("offset").get<std::size_t>();
      const std::size_t nbytes = e.at("nbytes").get<std::size_t>();
      if (nbytes != shape_numel(shape) * sizeof(double) || offset % 8 != 0) {
        throw FormatError("inconsistent entry for '" + e.at("name").get<std::string>() + "' at byte offset " +
                          std::to_string(offset));
      }
      if (offset + nbytes > bytes.size()) {
        throw FormatError("payload for '" + e.at("name").get<std::string>() + "' truncated at byte offset " +
                          std::to_string(bytes.size()));
      }
      std::vector<double> values(shape_numel(shape));
      std::memcpy(values.data(), bytes.data() + offset, nbytes);
      result.push_back({e.at("name").get<std::string>(), Tensor(shape, std::move(values))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header at byte offset 16: ") + e.what());
  }
  return result;
}

void restore_checkpoint(const std::filesystem::path& path, std::vector<NamedTensor>& targets) {
  std::map<std::string, Tensor> stored;
  for (auto& t : load_checkpoint(path)) stored.emplace(t.name, t.tensor);
  for (auto& t : targets) {
    auto it = stored.find(t.name);
    if (it == stored.end()) throw FormatError("checkpoint " + path.string() + " lacks tensor '" + t.name + "'");
    if (it->second.shape() != t.tensor.shape()) {
      throw DimensionError("checkpoint tensor '" + t.name + "' has shape " + shape_str(it->second.shape()) +
                           ", expected " + shape_str(t.tensor.shape()));
    }
    const auto src = it->second.data();
    auto dst = t.tensor.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace ash
