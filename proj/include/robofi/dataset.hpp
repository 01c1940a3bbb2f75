#pragma once

// Canonical on-disk sample container.
//
//   <dataset>/manifest.json          {"schema_version": 1, "samples": ["<rel>", ...]}
//   <dataset>/<rel>/meta.json        label, velocity, location, source, rate_hz, schema_version
//   <dataset>/<rel>/s1.bin, s2.bin   "RFSA", u32 rows, u32 cols, rows*cols float32 (LE, row-major)

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "robofi/core_types.hpp"

namespace robofi {

inline constexpr int kContainerSchemaVersion = 1;

struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

std::vector<std::uint8_t> encode_amplitude(const AmplitudeWindow& w);
/// rate_hz is not part of the binary; callers take it from meta.json.
AmplitudeWindow decode_amplitude(std::span<const std::uint8_t> bytes, int rate_hz);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

std::string encode_meta(const SampleMeta& meta, int rate_hz);

void write_sample(const std::filesystem::path& dir, const Sample& s);
Sample read_sample(const std::filesystem::path& dir);

/// Writes samples as sample_00000 ... plus manifest.json. Every sample is
/// validated first (InvalidSample on any violation).
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

/// Relative sample paths from manifest.json, or sorted subdirectories holding
/// meta.json when no manifest exists.
std::vector<std::string> list_sample_dirs(const std::filesystem::path& dir);

struct SampleFilter {
  std::optional<Velocity> velocity;
  std::optional<Location> location;
  std::optional<ActivityLabel> label;

  bool matches(const SampleMeta& m) const {
    return (!velocity || m.velocity == *velocity) && (!location || m.location == *location) &&
           (!label || m.label == *label);
  }
};

Dataset select(const Dataset& ds, const SampleFilter& filter);

/// Per-class sample counts in canonical class order.
std::array<std::size_t, kNumClasses> class_counts(const Dataset& ds);

}  // namespace robofi
