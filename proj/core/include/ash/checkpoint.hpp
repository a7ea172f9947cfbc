#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ash/tensor.hpp"

namespace ash {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Container layout:
//   bytes [0, 8)    magic "ASHCKPT1"
//   bytes [8, 16)   header length H, little-endian u64
//   bytes [16, 16+H) JSON header:
//       {"format": "ashnet-checkpoint", "version": 1,
//        "tensors": [{"name", "shape", "offset", "nbytes"}, ...]}
//   zero padding to an 8-byte boundary, then the payloads. Each payload is
//   the tensor's values as little-endian IEEE-754 doubles, starting at its
//   absolute file `offset` (a multiple of 8).

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);

/// Reads every tensor in file order. Throws FormatError on malformed input.
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Copies stored values into `targets` by name. Every target must be present
/// with an identical shape.
void restore_checkpoint(const std::filesystem::path& path, std::vector<NamedTensor>& targets);

}  // namespace ash
