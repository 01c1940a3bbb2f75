#pragma once

// CSI -> model input: subcarrier pruning, amplitude, decimation,
// per-subcarrier normalization and P x P patch tiling.

#include <string>
#include <vector>

#include "robofi/core_types.hpp"
#include "robofi/dataset.hpp"

namespace robofi::preprocess {

struct SubcarrierMask {
  std::vector<std::size_t> keep;  // sorted, unique, < 256

  std::size_t size() const { return keep.size(); }

  /// 802.11ac 80 MHz tone plan on centered indices -128..127 (column =
  /// index + 128): drops pilots +-11, +-39, +-75, +-103 and the nulls
  /// -128..-124, -1, 0, +1, +124..+127, leaving 236 columns.
  static SubcarrierMask standard();
  static SubcarrierMask all(std::size_t n = kRawSubcarriers);
  static SubcarrierMask from_json(const std::string& text);
  std::string to_json() const;
};

/// Throws MaskOutOfRange when any kept index is >= m.cols, or the mask is
/// unsorted or has duplicates.
CsiMatrix prune_subcarriers(const CsiMatrix& m, const SubcarrierMask& mask);

AmplitudeWindow amplitude(const CsiMatrix& m, int rate_hz = kBaseRateHz);

/// Output row k is input row floor(k * rate / target); round(T * target / rate) rows.
AmplitudeWindow downsample(const AmplitudeWindow& w, int target_hz);
std::vector<std::size_t> downsample_indices(std::size_t rows, int rate_hz, int target_hz);
/// Both sniffers of every sample decimated to target_hz.
Dataset downsample(Dataset ds, int target_hz);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;  // column is flat; it normalizes to 0

  std::size_t size() const { return mean.size(); }
  bool operator==(const NormStats&) const = default;
};

inline constexpr double kConstantColumnStd = 1e-12;

NormStats compute_stats(std::span<const AmplitudeWindow* const> windows);
NormStats compute_stats(const AmplitudeWindow& w);
NormStats identity_stats(std::size_t cols);

/// (in - mean) / std per column; constant columns map to 0. Output values may
/// be negative; rate_hz passes through.
AmplitudeWindow normalize(const AmplitudeWindow& w, const NormStats& stats);

/// Separate statistics per sniffer, fitted on one dataset (the training split).
struct SnifferStats {
  NormStats s1;
  NormStats s2;

  bool operator==(const SnifferStats&) const = default;
};

SnifferStats compute_sniffer_stats(const Dataset& ds, std::span<const std::size_t> indices);
std::string stats_to_json(const SnifferStats& s);
SnifferStats stats_from_json(const std::string& text);

struct PatchSet {
  std::size_t count = 0;  // N
  std::size_t patch = 0;  // P
  std::size_t pad_rows = 0;
  std::size_t pad_cols = 0;
  std::size_t origin_rows = 0;
  std::size_t origin_cols = 0;
  int rate_hz = kBaseRateHz;
  std::vector<float> values;  // N x P x P, patch-major then row-major

  std::size_t tile_rows() const { return patch == 0 ? 0 : (origin_rows + pad_rows) / patch; }
  std::size_t tile_cols() const { return patch == 0 ? 0 : (origin_cols + pad_cols) / patch; }
  std::size_t patch_area() const { return patch * patch; }
};

std::size_t patch_count(std::size_t rows, std::size_t cols, std::size_t patch);

/// Zero-pads to multiples of P and tiles P x P patches in row-major tile order.
PatchSet patchify(const AmplitudeWindow& w, std::size_t patch);
AmplitudeWindow unpatchify(const PatchSet& p);

}  // namespace robofi::preprocess
