#include "robofi/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

namespace robofi::preprocess {

using nlohmann::json;

SubcarrierMask SubcarrierMask::standard() {
  static const std::set<int> dropped = {-128, -127, -126, -125, -124, -103, -75, -39, -11, -1, 0,
                                        1,    11,   39,   75,   103,  124,  125, 126, 127};
  SubcarrierMask m;
  for (int centered = -128; centered < 128; ++centered) {
    if (!dropped.contains(centered)) m.keep.push_back(static_cast<std::size_t>(centered + 128));
  }
  return m;
}

SubcarrierMask SubcarrierMask::all(std::size_t n) {
  SubcarrierMask m;
  for (std::size_t i = 0; i < n; ++i) m.keep.push_back(i);
  return m;
}

SubcarrierMask SubcarrierMask::from_json(const std::string& text) {
  SubcarrierMask m;
  try {
    const json j = json::parse(text);
    const json& list = j.is_object() ? j.at("keep") : j;
    for (const auto& v : list) m.keep.push_back(v.get<std::size_t>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("subcarrier mask: ") + e.what());
  }
  return m;
}

std::string SubcarrierMask::to_json() const { return json(keep).dump() + "\n"; }

CsiMatrix prune_subcarriers(const CsiMatrix& m, const SubcarrierMask& mask) {
  for (std::size_t i = 0; i < mask.keep.size(); ++i) {
    if (mask.keep[i] >= m.cols) {
      throw Error(ErrorCode::MaskOutOfRange,
                  "index " + std::to_string(mask.keep[i]) + " >= " + std::to_string(m.cols) + " columns");
    }
    if (i > 0 && mask.keep[i] <= mask.keep[i - 1]) {
      throw Error(ErrorCode::MaskOutOfRange, "mask indices must be sorted and unique");
    }
  }
  CsiMatrix out(m.rows, mask.keep.size(), m.sniffer);
  out.timestamps = m.timestamps;
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < mask.keep.size(); ++c) out.at(r, c) = m.at(r, mask.keep[c]);
  }
  return out;
}

AmplitudeWindow amplitude(const CsiMatrix& m, int rate_hz) {
  AmplitudeWindow w(m.rows, m.cols, rate_hz);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    w.data[i] = static_cast<float>(std::hypot(m.data[i].real(), m.data[i].imag()));
  }
  return w;
}

std::vector<std::size_t> downsample_indices(std::size_t rows, int rate_hz, int target_hz) {
  if (!is_supported_rate(target_hz) || !is_supported_rate(rate_hz) || target_hz > rate_hz) {
    throw Error(ErrorCode::UnsupportedRate,
                std::to_string(rate_hz) + " Hz -> " + std::to_string(target_hz) + " Hz is not a supported decimation");
  }
  // Integer arithmetic keeps the map exact: round(T * target / rate) rows.
  const auto r = static_cast<std::uint64_t>(rate_hz);
  const auto t = static_cast<std::uint64_t>(target_hz);
  const std::size_t out_rows = static_cast<std::size_t>((2 * rows * t + r) / (2 * r));
  std::vector<std::size_t> idx(out_rows);
  for (std::size_t k = 0; k < out_rows; ++k) {
    idx[k] = std::min<std::size_t>(static_cast<std::size_t>(k * r / t), rows - 1);
  }
  return idx;
}

AmplitudeWindow downsample(const AmplitudeWindow& w, int target_hz) {
  if (target_hz == w.rate_hz && is_supported_rate(target_hz)) return w;
  const auto idx = downsample_indices(w.rows, w.rate_hz, target_hz);
  AmplitudeWindow out(idx.size(), w.cols, target_hz);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(w.data.begin() + static_cast<std::ptrdiff_t>(idx[k] * w.cols), w.cols,
                out.data.begin() + static_cast<std::ptrdiff_t>(k * w.cols));
  }
  return out;
}

Dataset downsample(Dataset ds, int target_hz) {
  for (Sample& s : ds.samples) {
    s.sniffer1 = downsample(s.sniffer1, target_hz);
    s.sniffer2 = downsample(s.sniffer2, target_hz);
  }
  return ds;
}

NormStats compute_stats(std::span<const AmplitudeWindow* const> windows) {
  if (windows.empty()) throw Error(ErrorCode::EmptySplit, "cannot compute normalization statistics of nothing");
  const std::size_t cols = windows.front()->cols;
  std::vector<double> sum(cols, 0.0);
  std::size_t n = 0;
  for (const AmplitudeWindow* w : windows) {
    if (w->cols != cols) throw Error(ErrorCode::StatsShapeMismatch, "windows differ in column count");
    for (std::size_t r = 0; r < w->rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) sum[c] += w->at(r, c);
    }
    n += w->rows;
  }
  NormStats s;
  s.mean.resize(cols);
  for (std::size_t c = 0; c < cols; ++c) s.mean[c] = sum[c] / static_cast<double>(n);
  std::vector<double> sq(cols, 0.0);
  for (const AmplitudeWindow* w : windows) {
    for (std::size_t r = 0; r < w->rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = w->at(r, c) - s.mean[c];
        sq[c] += d * d;
      }
    }
  }
  s.stddev.resize(cols);
  s.constant.resize(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    s.stddev[c] = std::sqrt(sq[c] / static_cast<double>(n));
    s.constant[c] = s.stddev[c] < kConstantColumnStd;
  }
  return s;
}

NormStats compute_stats(const AmplitudeWindow& w) {
  const AmplitudeWindow* p = &w;
  return compute_stats(std::span<const AmplitudeWindow* const>(&p, 1));
}

NormStats identity_stats(std::size_t cols) {
  return {std::vector<double>(cols, 0.0), std::vector<double>(cols, 1.0), std::vector<bool>(cols, false)};
}

AmplitudeWindow normalize(const AmplitudeWindow& w, const NormStats& stats) {
  if (stats.mean.size() != w.cols || stats.stddev.size() != w.cols || stats.constant.size() != w.cols) {
    throw Error(ErrorCode::StatsShapeMismatch,
                "stats cover " + std::to_string(stats.mean.size()) + " columns, window has " + std::to_string(w.cols));
  }
  AmplitudeWindow out = w;
  for (std::size_t r = 0; r < w.rows; ++r) {
    for (std::size_t c = 0; c < w.cols; ++c) {
      if (stats.constant[c] || !(stats.stddev[c] > 0.0)) {
        out.at(r, c) = 0.0f;
      } else {
        out.at(r, c) = static_cast<float>((w.at(r, c) - stats.mean[c]) / stats.stddev[c]);
      }
    }
  }
  return out;
}

SnifferStats compute_sniffer_stats(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<const AmplitudeWindow*> a, b;
  for (std::size_t i : indices) {
    a.push_back(&ds.samples.at(i).sniffer1);
    b.push_back(&ds.samples.at(i).sniffer2);
  }
  return {compute_stats(a), compute_stats(b)};
}

namespace {

json stats_json(const NormStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"constant", s.constant}};
}

NormStats stats_from(const json& j) {
  NormStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("std").get<std::vector<double>>();
  s.constant = j.at("constant").get<std::vector<bool>>();
  if (s.stddev.size() != s.mean.size() || s.constant.size() != s.mean.size()) {
    throw Error(ErrorCode::StatsShapeMismatch, "normalization statistics vectors differ in length");
  }
  return s;
}

}  // namespace

std::string stats_to_json(const SnifferStats& s) {
  return json{{"sniffer1", stats_json(s.s1)}, {"sniffer2", stats_json(s.s2)}}.dump() + "\n";
}

SnifferStats stats_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    return {stats_from(j.at("sniffer1")), stats_from(j.at("sniffer2"))};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("normalization statistics: ") + e.what());
  }
}

std::size_t patch_count(std::size_t rows, std::size_t cols, std::size_t patch) {
  return ((rows + patch - 1) / patch) * ((cols + patch - 1) / patch);
}

PatchSet patchify(const AmplitudeWindow& w, std::size_t patch) {
  if (patch == 0) throw Error(ErrorCode::InvalidConfig, "patch size must be >= 1");
  PatchSet p;
  p.patch = patch;
  p.origin_rows = w.rows;
  p.origin_cols = w.cols;
  p.rate_hz = w.rate_hz;
  const std::size_t tr = (w.rows + patch - 1) / patch;
  const std::size_t tc = (w.cols + patch - 1) / patch;
  p.pad_rows = tr * patch - w.rows;
  p.pad_cols = tc * patch - w.cols;
  p.count = tr * tc;
  p.values.assign(p.count * patch * patch, 0.0f);
  for (std::size_t i = 0; i < tr; ++i) {
    for (std::size_t j = 0; j < tc; ++j) {
      float* dst = p.values.data() + (i * tc + j) * patch * patch;
      for (std::size_t r = 0; r < patch; ++r) {
        const std::size_t src_r = i * patch + r;
        if (src_r >= w.rows) break;
        for (std::size_t c = 0; c < patch; ++c) {
          const std::size_t src_c = j * patch + c;
          if (src_c >= w.cols) break;
          dst[r * patch + c] = w.at(src_r, src_c);
        }
      }
    }
  }
  return p;
}

AmplitudeWindow unpatchify(const PatchSet& p) {
  const std::size_t P = p.patch;
  if (P == 0 || (p.origin_rows + p.pad_rows) % P != 0 || (p.origin_cols + p.pad_cols) % P != 0 ||
      p.pad_rows >= P || p.pad_cols >= P || p.tile_rows() * p.tile_cols() != p.count ||
      p.values.size() != p.count * P * P) {
    throw Error(ErrorCode::InconsistentMetadata, "patch set metadata does not describe its payload");
  }
  AmplitudeWindow w(p.origin_rows, p.origin_cols, p.rate_hz);
  const std::size_t tc = p.tile_cols();
  for (std::size_t r = 0; r < w.rows; ++r) {
    for (std::size_t c = 0; c < w.cols; ++c) {
      const std::size_t tile = (r / P) * tc + (c / P);
      w.at(r, c) = p.values[tile * P * P + (r % P) * P + (c % P)];
    }
  }
  return w;
}

}  // namespace robofi::preprocess
