#include "robofi/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "bytes.hpp"
#include "json.hpp"

namespace robofi {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint8_t> encode_amplitude(const AmplitudeWindow& w) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * w.data.size());
  bytes::put_tag(out, "RFSA");
  bytes::put_u32(out, static_cast<std::uint32_t>(w.rows));
  bytes::put_u32(out, static_cast<std::uint32_t>(w.cols));
  for (float x : w.data) bytes::put_f32(out, x);
  return out;
}

AmplitudeWindow decode_amplitude(std::span<const std::uint8_t> data, int rate_hz) {
  bytes::Reader in(data, ErrorCode::Format);
  if (in.str(4) != "RFSA") throw Error(ErrorCode::BadMagic, "amplitude file does not start with RFSA");
  const std::size_t rows = in.u32();
  const std::size_t cols = in.u32();
  if (in.remaining() != rows * cols * 4) {
    throw Error(ErrorCode::Format, "amplitude payload holds " + std::to_string(in.remaining()) + " bytes, header says " +
                                       std::to_string(rows) + "x" + std::to_string(cols));
  }
  AmplitudeWindow w(rows, cols, rate_hz);
  for (float& x : w.data) x = in.f32();
  return w;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!f) throw Error(ErrorCode::Io, "short write to " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const fs::path& path) {
  auto b = read_file(path);
  return {b.begin(), b.end()};
}

std::string encode_meta(const SampleMeta& meta, int rate_hz) {
  json j;
  j["label"] = label_name(meta.label);
  j["velocity"] = velocity_name(meta.velocity);
  j["location"] = location_name(meta.location);
  j["source"] = source_name(meta.source);
  j["rate_hz"] = rate_hz;
  j["schema_version"] = kContainerSchemaVersion;
  return j.dump(2) + "\n";
}

void write_sample(const fs::path& dir, const Sample& s) {
  const auto violations = validate_sample(s);
  if (!violations.empty()) {
    std::string msg = dir.string() + ":";
    for (Violation v : violations) msg += " " + std::string(violation_name(v));
    throw Error(ErrorCode::InvalidSample, msg);
  }
  fs::create_directories(dir);
  write_text(dir / "meta.json", encode_meta(s.meta, s.sniffer1.rate_hz));
  write_file(dir / "s1.bin", encode_amplitude(s.sniffer1));
  write_file(dir / "s2.bin", encode_amplitude(s.sniffer2));
}

Sample read_sample(const fs::path& dir) {
  json meta;
  try {
    meta = json::parse(read_text(dir / "meta.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, (dir / "meta.json").string() + ": " + e.what());
  }
  Sample s;
  try {
    const int version = meta.at("schema_version").get<int>();
    if (version != kContainerSchemaVersion) {
      throw Error(ErrorCode::Format, "unsupported schema_version " + std::to_string(version));
    }
    s.meta.label = label_from_name(meta.at("label").get<std::string>());
    s.meta.velocity = velocity_from_name(meta.at("velocity").get<std::string>());
    s.meta.location = location_from_name(meta.at("location").get<std::string>());
    s.meta.source = source_from_name(meta.at("source").get<std::string>());
    const int rate = meta.at("rate_hz").get<int>();
    s.sniffer1 = decode_amplitude(read_file(dir / "s1.bin"), rate);
    s.sniffer2 = decode_amplitude(read_file(dir / "s2.bin"), rate);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, (dir / "meta.json").string() + ": " + e.what());
  }
  return s;
}

std::vector<std::string> list_sample_dirs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a directory");
  std::vector<std::string> out;
  const fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    try {
      const json j = json::parse(read_text(manifest));
      for (const auto& p : j.at("samples")) out.push_back(p.get<std::string>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Format, manifest.string() + ": " + e.what());
    }
    return out;
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  json manifest;
  manifest["schema_version"] = kContainerSchemaVersion;
  manifest["samples"] = json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu", i);
    write_sample(dir / name, ds.samples[i]);
    manifest["samples"].push_back(name);
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  Dataset ds;
  for (const auto& rel : list_sample_dirs(dir)) ds.samples.push_back(read_sample(dir / rel));
  return ds;
}

Dataset select(const Dataset& ds, const SampleFilter& filter) {
  Dataset out;
  for (const auto& s : ds.samples) {
    if (filter.matches(s.meta)) out.samples.push_back(s);
  }
  return out;
}

std::array<std::size_t, kNumClasses> class_counts(const Dataset& ds) {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& s : ds.samples) ++counts[label_index(s.meta.label)];
  return counts;
}

}  // namespace robofi
