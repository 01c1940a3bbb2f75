#pragma once

// Domain vocabulary shared by every module: activity labels, metadata tags,
// complex CSI matrices and the amplitude windows the models consume.

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robofi/error.hpp"

namespace robofi {

inline constexpr std::size_t kNumClasses = 8;
inline constexpr std::size_t kRawSubcarriers = 256;
inline constexpr int kBaseRateHz = 30;
inline constexpr double kWindowSeconds = 12.0;
inline constexpr std::size_t kWindowRows = 360;
inline constexpr std::size_t kPrunedSubcarriers = 236;
inline constexpr std::array<int, 5> kSupportedRates = {30, 25, 20, 15, 10};

/// Canonical class order (index 0..7).
enum class ActivityLabel : std::uint8_t {
  Arc = 0,
  Elbow,
  Rectangle,
  Silence,
  SLFW,
  SLRL,
  SLUD,
  Triangle,
};

enum class Velocity : std::uint8_t { V1 = 0, V2, V3 };
enum class Location : std::uint8_t { L1 = 0, L2, L3, L4 };
enum class SampleSource : std::uint8_t { Real = 0, Synthetic };
enum class SnifferId : std::uint8_t { S1 = 1, S2 = 2 };

inline constexpr std::array<ActivityLabel, kNumClasses> kAllLabels = {
    ActivityLabel::Arc,  ActivityLabel::Elbow, ActivityLabel::Rectangle, ActivityLabel::Silence,
    ActivityLabel::SLFW, ActivityLabel::SLRL,  ActivityLabel::SLUD,      ActivityLabel::Triangle};
inline constexpr std::array<Velocity, 3> kAllVelocities = {Velocity::V1, Velocity::V2, Velocity::V3};
inline constexpr std::array<Location, 4> kAllLocations = {Location::L1, Location::L2, Location::L3,
                                                          Location::L4};

constexpr std::size_t label_index(ActivityLabel l) { return static_cast<std::size_t>(l); }
ActivityLabel label_from_index(std::size_t index);
std::string_view label_name(ActivityLabel l);

/// Case-insensitive lookup over canonical names and aliases ("SL-Forward",
/// "Straight Line - Up Down", ...). Throws UnknownLabel.
ActivityLabel label_from_name(std::string_view name);

std::string_view velocity_name(Velocity v);
Velocity velocity_from_name(std::string_view name);
std::string_view location_name(Location l);
Location location_from_name(std::string_view name);
std::string_view source_name(SampleSource s);
SampleSource source_from_name(std::string_view name);

bool is_supported_rate(int rate_hz);

using ComplexValue = std::complex<double>;

/// Complex channel matrix H for one sniffer: rows are packets in time order,
/// columns are subcarriers.
struct CsiMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<ComplexValue> data;  // row-major
  std::vector<double> timestamps;  // one per row, sorted
  SnifferId sniffer = SnifferId::S1;

  CsiMatrix() = default;
  CsiMatrix(std::size_t r, std::size_t c, SnifferId id)
      : rows(r), cols(c), data(r * c), timestamps(r, 0.0), sniffer(id) {}

  ComplexValue& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const ComplexValue& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Amplitude matrix A (rows = packets, cols = kept subcarriers) stored as float32.
struct AmplitudeWindow {
  std::size_t rows = 0;
  std::size_t cols = 0;
  int rate_hz = kBaseRateHz;
  std::vector<float> data;  // row-major

  AmplitudeWindow() = default;
  AmplitudeWindow(std::size_t r, std::size_t c, int rate) : rows(r), cols(c), rate_hz(rate), data(r * c, 0.0f) {}

  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const AmplitudeWindow&) const = default;
};

struct SampleMeta {
  ActivityLabel label = ActivityLabel::Silence;
  Velocity velocity = Velocity::V1;
  Location location = Location::L1;
  SampleSource source = SampleSource::Synthetic;

  bool operator==(const SampleMeta&) const = default;
};

struct Sample {
  AmplitudeWindow sniffer1;
  AmplitudeWindow sniffer2;
  SampleMeta meta;

  bool operator==(const Sample&) const = default;
};

enum class Violation {
  ShapeMismatch,    // sniffer windows differ in shape, or data size inconsistent
  RateMismatch,     // sniffer windows differ in rate_hz
  UnsupportedRate,  // rate_hz not one of the sweep rates
  NonFiniteValue,
  NegativeAmplitude,
  EmptyWindow,
};

std::string_view violation_name(Violation v);

/// Empty iff every invariant of Sample and its windows holds.
std::vector<Violation> validate_sample(const Sample& s);

}  // namespace robofi
