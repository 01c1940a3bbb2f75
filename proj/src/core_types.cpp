#include "robofi/core_types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <utility>

namespace robofi {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::InvalidSample: return "InvalidSample";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedPacket: return "TruncatedPacket";
    case ErrorCode::BadSubcarrierCount: return "BadSubcarrierCount";
    case ErrorCode::GapTooLarge: return "GapTooLarge";
    case ErrorCode::InsufficientDuration: return "InsufficientDuration";
    case ErrorCode::UnknownAdapter: return "UnknownAdapter";
    case ErrorCode::MaskOutOfRange: return "MaskOutOfRange";
    case ErrorCode::UnsupportedRate: return "UnsupportedRate";
    case ErrorCode::StatsShapeMismatch: return "StatsShapeMismatch";
    case ErrorCode::InconsistentMetadata: return "InconsistentMetadata";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ProbabilityOutOfRange: return "ProbabilityOutOfRange";
    case ErrorCode::GraphConsumed: return "GraphConsumed";
    case ErrorCode::NonScalarOutput: return "NonScalarOutput";
    case ErrorCode::HeadDivisibility: return "HeadDivisibility";
    case ErrorCode::TooManyPatches: return "TooManyPatches";
    case ErrorCode::NonFiniteLogits: return "NonFiniteLogits";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::MissingVelocity: return "MissingVelocity";
    case ErrorCode::MissingLocation: return "MissingLocation";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InvalidGeometry: return "InvalidGeometry";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Format: return "Format";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::DivergedLoss:
    case ErrorCode::Io:
    case ErrorCode::GraphConsumed:
      return false;
    default:
      return true;
  }
}

namespace {

std::string normalized(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

constexpr std::array<std::string_view, kNumClasses> kLabelNames = {
    "Arc", "Elbow", "Rectangle", "Silence", "SLFW", "SLRL", "SLUD", "Triangle"};

// Aliases compared after normalization (lowercase, alphanumerics only).
constexpr std::array<std::pair<std::string_view, ActivityLabel>, 9> kLabelAliases = {{
    {"slforward", ActivityLabel::SLFW},
    {"straightlineforward", ActivityLabel::SLFW},
    {"slrightleft", ActivityLabel::SLRL},
    {"straightlinerightleft", ActivityLabel::SLRL},
    {"slupdown", ActivityLabel::SLUD},
    {"straightlineupdown", ActivityLabel::SLUD},
    {"rect", ActivityLabel::Rectangle},
    {"idle", ActivityLabel::Silence},
    {"tri", ActivityLabel::Triangle},
}};

}  // namespace

ActivityLabel label_from_index(std::size_t index) {
  if (index >= kNumClasses) {
    throw Error(ErrorCode::UnknownLabel, "class index " + std::to_string(index) + " out of range");
  }
  return static_cast<ActivityLabel>(index);
}

std::string_view label_name(ActivityLabel l) { return kLabelNames[label_index(l)]; }

ActivityLabel label_from_name(std::string_view name) {
  const std::string key = normalized(name);
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (key == normalized(kLabelNames[i])) return static_cast<ActivityLabel>(i);
  }
  for (const auto& [alias, label] : kLabelAliases) {
    if (key == alias) return label;
  }
  throw Error(ErrorCode::UnknownLabel, "'" + std::string(name) + "' is not one of the eight activity classes");
}

std::string_view velocity_name(Velocity v) {
  static constexpr std::array<std::string_view, 3> names = {"V1", "V2", "V3"};
  return names[static_cast<std::size_t>(v)];
}

Velocity velocity_from_name(std::string_view name) {
  const std::string key = normalized(name);
  for (Velocity v : kAllVelocities) {
    if (key == normalized(velocity_name(v))) return v;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown velocity '" + std::string(name) + "'");
}

std::string_view location_name(Location l) {
  static constexpr std::array<std::string_view, 4> names = {"L1", "L2", "L3", "L4"};
  return names[static_cast<std::size_t>(l)];
}

Location location_from_name(std::string_view name) {
  const std::string key = normalized(name);
  for (Location l : kAllLocations) {
    if (key == normalized(location_name(l))) return l;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown location '" + std::string(name) + "'");
}

std::string_view source_name(SampleSource s) { return s == SampleSource::Real ? "Real" : "Synthetic"; }

SampleSource source_from_name(std::string_view name) {
  const std::string key = normalized(name);
  if (key == "real") return SampleSource::Real;
  if (key == "synthetic") return SampleSource::Synthetic;
  throw Error(ErrorCode::InvalidConfig, "unknown sample source '" + std::string(name) + "'");
}

bool is_supported_rate(int rate_hz) {
  return std::find(kSupportedRates.begin(), kSupportedRates.end(), rate_hz) != kSupportedRates.end();
}

std::string_view violation_name(Violation v) {
  switch (v) {
    case Violation::ShapeMismatch: return "ShapeMismatch";
    case Violation::RateMismatch: return "RateMismatch";
    case Violation::UnsupportedRate: return "UnsupportedRate";
    case Violation::NonFiniteValue: return "NonFiniteValue";
    case Violation::NegativeAmplitude: return "NegativeAmplitude";
    case Violation::EmptyWindow: return "EmptyWindow";
  }
  return "Unknown";
}

std::vector<Violation> validate_sample(const Sample& s) {
  std::vector<Violation> out;
  auto add = [&out](Violation v) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  };
  const AmplitudeWindow* windows[] = {&s.sniffer1, &s.sniffer2};
  for (const AmplitudeWindow* w : windows) {
    if (w->rows == 0 || w->cols == 0) add(Violation::EmptyWindow);
    if (w->data.size() != w->rows * w->cols) add(Violation::ShapeMismatch);
    if (!is_supported_rate(w->rate_hz)) add(Violation::UnsupportedRate);
    for (float x : w->data) {
      if (!std::isfinite(x)) {
        add(Violation::NonFiniteValue);
      } else if (x < 0.0f) {
        add(Violation::NegativeAmplitude);
      }
    }
  }
  if (s.sniffer1.rows != s.sniffer2.rows || s.sniffer1.cols != s.sniffer2.cols) add(Violation::ShapeMismatch);
  if (s.sniffer1.rate_hz != s.sniffer2.rate_hz) add(Violation::RateMismatch);
  return out;
}

}  // namespace robofi
