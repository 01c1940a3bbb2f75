#include "robofi/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>

#include "bytes.hpp"
#include "json.hpp"
#include "robofi/preprocess.hpp"

namespace robofi::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<RawPacket> parse_capture(std::span<const std::uint8_t> data) {
  bytes::Reader in(data, ErrorCode::TruncatedPacket);
  if (data.size() < 4 || in.str(4) != "RFSC") throw Error(ErrorCode::BadMagic, "capture does not start with RFSC");
  const std::uint8_t version = in.u8();
  if (version != kCaptureVersion) {
    throw Error(ErrorCode::Format, "unsupported capture version " + std::to_string(version));
  }
  const std::size_t count = in.u16();
  if (count != kRawSubcarriers) {
    throw Error(ErrorCode::BadSubcarrierCount,
                "capture declares " + std::to_string(count) + " subcarriers per packet, expected 256");
  }
  std::vector<RawPacket> packets;
  packets.reserve(in.remaining() / kRecordBytes);
  while (!in.done()) {
    if (in.remaining() < kRecordBytes) {
      throw Error(ErrorCode::TruncatedPacket, "record " + std::to_string(packets.size()) + " has only " +
                                                  std::to_string(in.remaining()) + " of " +
                                                  std::to_string(kRecordBytes) + " bytes");
    }
    RawPacket p;
    const std::uint8_t id = in.u8();
    if (id != 1 && id != 2) throw Error(ErrorCode::Format, "sniffer id " + std::to_string(id) + " is not 1 or 2");
    p.sniffer = static_cast<SnifferId>(id);
    p.timestamp = in.f64();
    p.subcarriers.resize(count);
    for (auto& c : p.subcarriers) {
      const float re = in.f32();
      const float im = in.f32();
      c = {re, im};
    }
    packets.push_back(std::move(p));
  }
  return packets;
}

std::vector<std::uint8_t> encode_capture(std::span<const RawPacket> packets) {
  std::vector<std::uint8_t> out;
  out.reserve(kCaptureHeaderBytes + packets.size() * kRecordBytes);
  bytes::put_tag(out, "RFSC");
  bytes::put_u8(out, kCaptureVersion);
  bytes::put_u16(out, static_cast<std::uint16_t>(kRawSubcarriers));
  for (const auto& p : packets) {
    if (p.subcarriers.size() != kRawSubcarriers) {
      throw Error(ErrorCode::BadSubcarrierCount, "packet has " + std::to_string(p.subcarriers.size()) + " subcarriers");
    }
    bytes::put_u8(out, static_cast<std::uint8_t>(p.sniffer));
    bytes::put_f64(out, p.timestamp);
    for (const auto& c : p.subcarriers) {
      bytes::put_f32(out, static_cast<float>(c.real()));
      bytes::put_f32(out, static_cast<float>(c.imag()));
    }
  }
  return out;
}

std::size_t nearest_within(std::span<const double> ts, double tick, double max_skew) {
  constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  if (ts.empty()) return npos;
  const auto it = std::lower_bound(ts.begin(), ts.end(), tick);
  std::size_t best = npos;
  double best_d = std::numeric_limits<double>::infinity();
  if (it != ts.begin()) {
    best = static_cast<std::size_t>(it - ts.begin()) - 1;
    best_d = tick - ts[best];
  }
  if (it != ts.end()) {
    const double d = *it - tick;
    if (d < best_d) {
      best = static_cast<std::size_t>(it - ts.begin());
      best_d = d;
    }
  }
  return best_d <= max_skew ? best : npos;
}

namespace {

struct Stream {
  std::vector<double> timestamps;
  std::vector<const RawPacket*> packets;
};

Stream dedup(std::span<const RawPacket> in, char which) {
  if (in.empty()) throw Error(ErrorCode::InsufficientDuration, std::string("stream ") + which + " is empty");
  Stream s;
  for (const auto& p : in) {
    if (!s.timestamps.empty()) {
      if (p.timestamp < s.timestamps.back()) {
        throw Error(ErrorCode::Format, std::string("stream ") + which + " timestamps are not sorted");
      }
      if (p.timestamp == s.timestamps.back()) continue;
    }
    if (p.subcarriers.size() != kRawSubcarriers) {
      throw Error(ErrorCode::BadSubcarrierCount, std::string("stream ") + which + " packet has " +
                                                     std::to_string(p.subcarriers.size()) + " subcarriers");
    }
    s.timestamps.push_back(p.timestamp);
    s.packets.push_back(&p);
  }
  return s;
}

}  // namespace

AlignedPair align_streams(std::span<const RawPacket> a, std::span<const RawPacket> b, const AlignOptions& opt) {
  if (opt.rate_hz <= 0 || opt.window_s <= 0.0) throw Error(ErrorCode::InvalidConfig, "rate and window must be positive");
  const double ticks_real = opt.rate_hz * opt.window_s;
  const auto n = static_cast<std::size_t>(std::llround(ticks_real));
  if (std::abs(ticks_real - static_cast<double>(n)) > 1e-9 || n == 0) {
    throw Error(ErrorCode::InvalidConfig, "rate_hz * window_s must be a positive integer");
  }
  const double period = 1.0 / opt.rate_hz;
  const double max_skew = opt.max_skew_s < 0.0 ? period / 2.0 : opt.max_skew_s;

  const Stream sa = dedup(a, 'a');
  const Stream sb = dedup(b, 'b');

  const double first = std::max(sa.timestamps.front(), sb.timestamps.front());
  const double t0 = std::ceil(first * opt.rate_hz - 1e-9) / opt.rate_hz;
  const double last_tick = t0 + static_cast<double>(n - 1) / opt.rate_hz;

  AlignedPair out;
  out.grid_timestamps.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.grid_timestamps[k] = t0 + static_cast<double>(k) / opt.rate_hz;

  const Stream* streams[] = {&sa, &sb};
  CsiMatrix* mats[] = {&out.m1, &out.m2};
  std::vector<std::size_t>* picks[] = {&out.picks1, &out.picks2};
  for (int w = 0; w < 2; ++w) {
    const Stream& s = *streams[w];
    const char* name = w == 0 ? "sniffer 1" : "sniffer 2";
    if (s.timestamps.back() < last_tick - max_skew) {
      throw Error(ErrorCode::InsufficientDuration,
                  std::string(name) + " stream ends at " + std::to_string(s.timestamps.back()) +
                      " s, window needs coverage until " + std::to_string(last_tick) + " s");
    }
    CsiMatrix& m = *mats[w];
    m = CsiMatrix(n, kRawSubcarriers, w == 0 ? SnifferId::S1 : SnifferId::S2);
    m.timestamps = out.grid_timestamps;
    picks[w]->resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t idx = nearest_within(s.timestamps, out.grid_timestamps[k], max_skew);
      if (idx == std::numeric_limits<std::size_t>::max()) {
        throw Error(ErrorCode::GapTooLarge,
                    "tick " + std::to_string(k) + " (" + name + "): no packet within " + std::to_string(max_skew) + " s");
      }
      (*picks[w])[k] = idx;
      std::copy(s.packets[idx]->subcarriers.begin(), s.packets[idx]->subcarriers.end(),
                m.data.begin() + static_cast<std::ptrdiff_t>(k * kRawSubcarriers));
    }
  }
  return out;
}

namespace {

std::map<std::string, Adapter>& registry() {
  static std::map<std::string, Adapter> r;
  return r;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

ImportResult identity_adapter(const fs::path& dir, const ImportOptions&) {
  ImportResult r;
  for (const auto& rel : list_sample_dirs(dir)) {
    const fs::path p = dir / rel;
    try {
      Sample s = read_sample(p);
      const auto v = validate_sample(s);
      if (!v.empty()) throw Error(ErrorCode::InvalidSample, std::string(violation_name(v.front())));
      r.dataset.samples.push_back(std::move(s));
      r.sources.push_back(p);
    } catch (const std::exception& e) {
      r.failures.push_back({p.string(), e.what()});
    }
  }
  return r;
}

SampleMeta meta_from_json(const json& j) {
  SampleMeta m;
  m.label = label_from_name(j.at("label").get<std::string>());
  m.velocity = velocity_from_name(j.value("velocity", std::string("V1")));
  m.location = location_from_name(j.value("location", std::string("L1")));
  m.source = source_from_name(j.value("source", std::string("Real")));
  return m;
}

ImportResult rfsc_adapter(const fs::path& dir, const ImportOptions& options) {
  ImportResult r;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  const auto mask =
      options.mask ? preprocess::SubcarrierMask{*options.mask} : preprocess::SubcarrierMask::standard();
  for (const auto& p : dirs) {
    try {
      const json meta = json::parse(read_text(p / "meta.json"));
      AlignOptions opt;
      opt.rate_hz = meta.value("rate_hz", kBaseRateHz);
      opt.window_s = meta.value("window_s", kWindowSeconds);
      opt.max_skew_s = meta.value("max_skew_s", -1.0);
      const auto a = parse_capture(read_file(p / "s1.rfsc"));
      const auto b = parse_capture(read_file(p / "s2.rfsc"));
      const AlignedPair pair = align_streams(a, b, opt);
      Sample s;
      s.meta = meta_from_json(meta);
      s.sniffer1 = preprocess::amplitude(preprocess::prune_subcarriers(pair.m1, mask), opt.rate_hz);
      s.sniffer2 = preprocess::amplitude(preprocess::prune_subcarriers(pair.m2, mask), opt.rate_hz);
      const auto v = validate_sample(s);
      if (!v.empty()) throw Error(ErrorCode::InvalidSample, std::string(violation_name(v.front())));
      r.dataset.samples.push_back(std::move(s));
      r.sources.push_back(p);
    } catch (const std::exception& e) {
      r.failures.push_back({p.string(), e.what()});
    }
  }
  return r;
}

void ensure_builtin_adapters() {
  static std::once_flag once;
  std::call_once(once, [] {
    std::lock_guard lock(registry_mutex());
    registry().emplace("identity", identity_adapter);
    registry().emplace("rfsc", rfsc_adapter);
  });
}

}  // namespace

void register_adapter(const std::string& name, Adapter adapter) {
  ensure_builtin_adapters();
  std::lock_guard lock(registry_mutex());
  registry()[name] = std::move(adapter);
}

std::vector<std::string> adapter_names() {
  ensure_builtin_adapters();
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

ImportResult import_external(const fs::path& dir, const std::string& adapter, const ImportOptions& options) {
  ensure_builtin_adapters();
  Adapter fn;
  {
    std::lock_guard lock(registry_mutex());
    const auto it = registry().find(adapter);
    if (it == registry().end()) throw Error(ErrorCode::UnknownAdapter, "no import adapter named '" + adapter + "'");
    fn = it->second;
  }
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a readable directory");
  return fn(dir, options);
}

}  // namespace robofi::ingest
