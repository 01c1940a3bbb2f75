#pragma once

// RFSW weight checkpoints: "RFSW" followed by records of
//   u32 name_length, name bytes, u32 rank, u32 dims[rank], float32 payload
// (little-endian) until end of file.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "robofi/autodiff.hpp"

namespace robofi {

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<float> values;

  bool operator==(const NamedTensor&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace robofi
