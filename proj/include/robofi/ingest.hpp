#pragma once

// Raw two-sniffer capture ingestion.
//
// RFSC capture stream:
//   "RFSC"  u8 version (=1)  u16 subcarriers_per_packet (=256)
//   then records, packed, little-endian:
//     u8 sniffer_id  f64 local_timestamp_s  subcarriers x (f32 re, f32 im)

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robofi/core_types.hpp"
#include "robofi/dataset.hpp"

namespace robofi::ingest {

inline constexpr std::uint8_t kCaptureVersion = 1;
inline constexpr std::size_t kCaptureHeaderBytes = 7;
inline constexpr std::size_t kRecordHeaderBytes = 9;
inline constexpr std::size_t kRecordBytes = kRecordHeaderBytes + kRawSubcarriers * 8;

struct RawPacket {
  SnifferId sniffer = SnifferId::S1;
  double timestamp = 0.0;
  std::vector<ComplexValue> subcarriers;  // exactly 256
};

std::vector<RawPacket> parse_capture(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_capture(std::span<const RawPacket> packets);

struct AlignOptions {
  int rate_hz = kBaseRateHz;
  double window_s = kWindowSeconds;
  /// Negative means half the sampling period.
  double max_skew_s = -1.0;
};

struct AlignedPair {
  std::vector<double> grid_timestamps;
  CsiMatrix m1;
  CsiMatrix m2;
  /// Index into the deduplicated input stream chosen for every tick.
  std::vector<std::size_t> picks1;
  std::vector<std::size_t> picks2;
};

/// Nearest-packet merge of two sniffer streams onto a fixed grid
/// t_k = t0 + k/rate, t0 = max(first timestamps) rounded up to the grid.
/// Ties go to the earlier packet; duplicate timestamps keep the first packet.
AlignedPair align_streams(std::span<const RawPacket> a, std::span<const RawPacket> b, const AlignOptions& opt = {});

/// Index of the packet nearest to `tick` (earlier wins ties), or npos when
/// none lies within max_skew. `timestamps` must be sorted.
std::size_t nearest_within(std::span<const double> timestamps, double tick, double max_skew);

struct ImportFailure {
  std::string path;
  std::string reason;
};

struct ImportResult {
  Dataset dataset;
  std::vector<ImportFailure> failures;
  /// Source directory per imported sample (parallel to dataset.samples).
  std::vector<std::filesystem::path> sources;
};

struct ImportOptions {
  /// Subcarriers kept from raw captures; the standard 236-column mask when unset.
  std::optional<std::vector<std::size_t>> mask;
};

using Adapter = std::function<ImportResult(const std::filesystem::path&, const ImportOptions&)>;

void register_adapter(const std::string& name, Adapter adapter);
std::vector<std::string> adapter_names();

/// Converts a foreign layout into canonical Samples using a named adapter.
/// Built-in adapters:
///   identity  canonical container directories (manifest or sample subdirs)
///   rfsc      one subdirectory per sample with meta.json, s1.rfsc, s2.rfsc
ImportResult import_external(const std::filesystem::path& dir, const std::string& adapter,
                             const ImportOptions& options = {});

}  // namespace robofi::ingest
