#include "robofi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"
#include "parallel.hpp"
#include "robofi/preprocess.hpp"

namespace robofi::synth {

using nlohmann::json;

double distance(const Vec3& a, const Vec3& b) { return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z); }

double velocity_scale(Velocity v) {
  switch (v) {
    case Velocity::V1: return 1.0;
    case Velocity::V2: return 1.1;
    case Velocity::V3: return 1.2;
  }
  return 1.0;
}

double default_duration(ActivityLabel label) {
  switch (label) {
    case ActivityLabel::Arc: return 3.0;
    case ActivityLabel::Elbow: return 2.5;
    case ActivityLabel::Rectangle: return 4.0;
    case ActivityLabel::Silence: return 2.0;
    case ActivityLabel::SLFW:
    case ActivityLabel::SLRL:
    case ActivityLabel::SLUD: return 2.0;
    case ActivityLabel::Triangle: return 3.5;
  }
  return 2.0;
}

void TrajectorySpec::validate(double window_s) const {
  const bool finite = std::isfinite(duration_s) && std::isfinite(velocity_scale) && std::isfinite(start_offset_s) &&
                      std::isfinite(size) && std::isfinite(rotation);
  if (!finite || duration_s <= 0.0 || velocity_scale <= 0.0 || start_offset_s < 0.0 || size < 0.0) {
    throw Error(ErrorCode::InvalidGeometry, "trajectory parameters must be finite with positive duration and scale");
  }
  if (start_offset_s + moving_seconds() > window_s + 1e-9) {
    throw Error(ErrorCode::InvalidGeometry, "motion ends after the window (start " + std::to_string(start_offset_s) +
                                                " s + " + std::to_string(moving_seconds()) + " s)");
  }
}

std::vector<Vec3> shape_polyline(ActivityLabel label) {
  switch (label) {
    case ActivityLabel::Arc: {
      std::vector<Vec3> pts;
      for (int i = 0; i <= 24; ++i) {
        const double th = std::numbers::pi * i / 24.0;
        pts.push_back({0.5 - 0.5 * std::cos(th), 0.5 * std::sin(th), 0.0});
      }
      return pts;
    }
    case ActivityLabel::Elbow: return {{0, 0, 0}, {0, 0, 0.6}, {0.6, 0, 0.6}};
    case ActivityLabel::Rectangle: return {{0, 0, 0}, {1, 0, 0}, {1, 0.6, 0}, {0, 0.6, 0}, {0, 0, 0}};
    case ActivityLabel::Silence: return {{0, 0, 0}};
    case ActivityLabel::SLFW: return {{0, 0, 0}, {1, 0, 0}, {0, 0, 0}};
    case ActivityLabel::SLRL: return {{0, 0, 0}, {0, -1, 0}, {0, 0, 0}};
    case ActivityLabel::SLUD: return {{0, 0, 0}, {0, 0, 1}, {0, 0, 0}};
    case ActivityLabel::Triangle: return {{0, 0, 0}, {0, 1, 0}, {0, 0.5, 0.8}, {0, 0, 0}};
  }
  return {{0, 0, 0}};
}

std::pair<std::size_t, std::size_t> motion_ticks(const TrajectorySpec& spec, int rate_hz, std::size_t rows) {
  const auto begin = static_cast<std::size_t>(std::ceil(spec.start_offset_s * rate_hz - 1e-9));
  const auto count = static_cast<std::size_t>(std::llround(spec.moving_seconds() * rate_hz));
  return {std::min(begin, rows), std::min(begin + count, rows)};
}

std::vector<Vec3> gen_trajectory(const TrajectorySpec& spec, int rate_hz, std::size_t rows) {
  spec.validate(static_cast<double>(rows) / rate_hz);
  const auto local = shape_polyline(spec.label);
  const double c = std::cos(spec.rotation);
  const double s = std::sin(spec.rotation);
  std::vector<Vec3> pts;
  for (const Vec3& p : local) {
    pts.push_back({spec.home.x + spec.size * (c * p.x - s * p.y), spec.home.y + spec.size * (s * p.x + c * p.y),
                   spec.home.z + spec.size * p.z});
  }
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + distance(pts[i - 1], pts[i]);
  const double total = cum.back();

  auto at_length = [&](double len) {
    if (pts.size() == 1 || total == 0.0) return pts.front();
    const auto it = std::upper_bound(cum.begin(), cum.end(), len);
    std::size_t i = it == cum.begin() ? 0 : static_cast<std::size_t>(it - cum.begin()) - 1;
    if (i >= pts.size() - 1) return pts.back();
    const double seg = cum[i + 1] - cum[i];
    const double f = seg > 0.0 ? (len - cum[i]) / seg : 0.0;
    return Vec3{pts[i].x + f * (pts[i + 1].x - pts[i].x), pts[i].y + f * (pts[i + 1].y - pts[i].y),
                pts[i].z + f * (pts[i + 1].z - pts[i].z)};
  };

  const auto [k0, k1] = motion_ticks(spec, rate_hz, rows);
  std::vector<Vec3> out(rows);
  for (std::size_t k = 0; k < rows; ++k) {
    if (k < k0) {
      out[k] = pts.front();
    } else if (k >= k1) {
      out[k] = pts.back();
    } else {
      const double u = k1 - k0 > 1 ? static_cast<double>(k - k0) / static_cast<double>(k1 - k0 - 1) : 1.0;
      out[k] = at_length(u * total);
    }
  }
  return out;
}

void SceneGeometry::validate() const {
  if (cell1 == cell2) throw Error(ErrorCode::InvalidGeometry, "both sniffers occupy the same grid cell");
  if (cell1 == robot_cell || cell2 == robot_cell) {
    throw Error(ErrorCode::InvalidGeometry, "a sniffer occupies the robot's grid cell");
  }
  if (distance(tx, sniffer1) == 0.0 || distance(tx, sniffer2) == 0.0) {
    throw Error(ErrorCode::InvalidGeometry, "transmitter coincides with a sniffer");
  }
}

Vec3 cell_center(GridCell c, double height) {
  return {(c.col + 0.5) * kCellSize, (c.row + 0.5) * kCellSize, height};
}

SceneGeometry placement(Location loc) {
  static constexpr std::array<std::array<GridCell, 2>, 4> cells = {{
      {{{0, 0}, {2, 2}}},
      {{{0, 2}, {2, 0}}},
      {{{0, 1}, {2, 1}}},
      {{{1, 0}, {1, 2}}},
  }};
  const auto& pair = cells[static_cast<std::size_t>(loc)];
  SceneGeometry g;
  g.tx = {-1.2, 3.6, 2.0};
  g.cell1 = pair[0];
  g.cell2 = pair[1];
  // Different mounting heights so vertical arm motion changes both paths.
  g.sniffer1 = cell_center(g.cell1, 0.6);
  g.sniffer2 = cell_center(g.cell2, 1.6);
  g.robot_base = cell_center(g.robot_cell, 0.0);
  return g;
}

namespace {

const Vec3& sniffer_position(const SceneGeometry& g, SnifferId id) {
  return id == SnifferId::S1 ? g.sniffer1 : g.sniffer2;
}

}  // namespace

std::vector<ComplexValue> static_channel(const ChannelParams& params, ad::Rng& rng) {
  struct Path {
    double gain, phase, excess_m;
  };
  std::vector<Path> paths{{1.0, 0.0, 0.0}};
  for (std::size_t k = 1; k < params.static_paths; ++k) {
    const double gain = rng.uniform(0.05, 0.15);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double excess = rng.uniform(1.0, 10.0);
    paths.push_back({gain, phase, excess});
  }
  std::vector<ComplexValue> h0(params.subcarriers);
  for (std::size_t s = 0; s < params.subcarriers; ++s) {
    const double f = params.frequency(s);
    ComplexValue h{0.0, 0.0};
    for (const Path& p : paths) h += std::polar(p.gain, p.phase - 2.0 * std::numbers::pi * f * p.excess_m / kSpeedOfLight);
    h0[s] = h;
  }
  return h0;
}

CsiMatrix simulate_csi(std::span<const Vec3> positions, const SceneGeometry& geom, SnifferId sniffer,
                       std::span<const ComplexValue> h0, double noise_std, ad::Rng& rng, const ChannelParams& params,
                       int rate_hz) {
  if (h0.size() != params.subcarriers) {
    throw Error(ErrorCode::ShapeMismatch, "static channel has " + std::to_string(h0.size()) + " subcarriers");
  }
  const Vec3& rx = sniffer_position(geom, sniffer);
  const double direct = distance(geom.tx, rx);
  const double sigma = noise_std / std::numbers::sqrt2;
  CsiMatrix m(positions.size(), params.subcarriers, sniffer);
  for (std::size_t t = 0; t < positions.size(); ++t) {
    m.timestamps[t] = static_cast<double>(t) / rate_hz;
    // Delays are measured relative to the line-of-sight arrival the receiver locks to.
    const double excess = distance(geom.tx, positions[t]) + distance(positions[t], rx) - direct;
    const double tau = excess / kSpeedOfLight;
    for (std::size_t s = 0; s < params.subcarriers; ++s) {
      ComplexValue h = h0[s] + std::polar(params.dynamic_amplitude, -2.0 * std::numbers::pi * params.frequency(s) * tau);
      if (noise_std > 0.0) h += ComplexValue(sigma * rng.normal(), sigma * rng.normal());
      m.at(t, s) = h;
    }
  }
  return m;
}

SceneGeometry projection_scene() {
  constexpr double R = 10.0;
  const double k = R / std::numbers::sqrt2;
  SceneGeometry g;
  g.robot_base = {0.0, 0.0, 0.0};
  g.tx = {k, 0.0, k};
  g.sniffer1 = {k, 0.0, -k};
  g.sniffer2 = {-k, 0.0, k};
  g.cell1 = {0, 0};
  g.cell2 = {2, 2};
  return g;
}

std::array<double, 2> projection_profile(ActivityLabel label, double u, double a) {
  auto bump = [u](double k) { return std::pow(std::sin(std::numbers::pi * k * u), 2.0); };
  const double Z = 0.0;
  const double B1 = a * bump(1), B2 = 2 * a * bump(1), B3 = 3 * a * bump(1);
  const double D = a * bump(2), T = a * bump(3);
  switch (label) {
    case ActivityLabel::Silence: return {Z, Z};
    case ActivityLabel::Arc: return {Z, B1};
    case ActivityLabel::Elbow: return {B1, B2};
    case ActivityLabel::Rectangle: return {B1, D};
    case ActivityLabel::SLFW: return {B2, T};
    case ActivityLabel::SLRL: return {D, T};
    case ActivityLabel::SLUD: return {T, B3};
    case ActivityLabel::Triangle: return {B3, B3};
  }
  return {Z, Z};
}

void SynthSpec::validate() const {
  if (scene != "room" && scene != "projection") throw Error(ErrorCode::InvalidConfig, "unknown scene '" + scene + "'");
  if (per_class == 0) throw Error(ErrorCode::InvalidConfig, "per_class must be positive");
  if (velocities.empty() || locations.empty()) throw Error(ErrorCode::InvalidConfig, "need a velocity and a location");
  if (!(motion_size > 0.0) || !(projection_amplitude > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "motion_size and projection_amplitude must be positive");
  }
  if (!(noise_std >= 0.0) || !(dynamic_amplitude >= 0.0) || !(size_jitter >= 0.0 && size_jitter < 1.0) ||
      !(position_jitter >= 0.0) || !(rotation_jitter >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "noise_std, dynamic_amplitude and size_jitter out of range");
  }
  if (!is_supported_rate(rate_hz)) throw Error(ErrorCode::UnsupportedRate, std::to_string(rate_hz) + " Hz");
}

std::string SynthSpec::to_json() const {
  json j;
  j["scene"] = scene;
  j["per_class"] = per_class;
  json v = json::array();
  for (Velocity x : velocities) v.push_back(velocity_name(x));
  j["velocities"] = v;
  json l = json::array();
  for (Location x : locations) l.push_back(location_name(x));
  j["locations"] = l;
  j["noise_std"] = noise_std;
  j["dynamic_amplitude"] = dynamic_amplitude;
  j["motion_size"] = motion_size;
  j["size_jitter"] = size_jitter;
  j["position_jitter"] = position_jitter;
  j["rotation_jitter"] = rotation_jitter;
  j["projection_amplitude"] = projection_amplitude;
  j["rate_hz"] = rate_hz;
  j["seed"] = seed;
  j["scene_seed"] = scene_seed;
  return j.dump(2) + "\n";
}

SynthSpec SynthSpec::from_json(const std::string& text) {
  SynthSpec s;
  try {
    const json j = json::parse(text);
    s.scene = j.value("scene", s.scene);
    s.per_class = j.value("per_class", s.per_class);
    if (j.contains("velocities")) {
      s.velocities.clear();
      for (const auto& v : j.at("velocities")) s.velocities.push_back(velocity_from_name(v.get<std::string>()));
    }
    if (j.contains("locations")) {
      s.locations.clear();
      for (const auto& v : j.at("locations")) s.locations.push_back(location_from_name(v.get<std::string>()));
    }
    s.noise_std = j.value("noise_std", s.noise_std);
    s.dynamic_amplitude = j.value("dynamic_amplitude", s.dynamic_amplitude);
    s.motion_size = j.value("motion_size", s.motion_size);
    s.size_jitter = j.value("size_jitter", s.size_jitter);
    s.position_jitter = j.value("position_jitter", s.position_jitter);
    s.rotation_jitter = j.value("rotation_jitter", s.rotation_jitter);
    s.projection_amplitude = j.value("projection_amplitude", s.projection_amplitude);
    s.rate_hz = j.value("rate_hz", s.rate_hz);
    s.seed = j.value("seed", s.seed);
    s.scene_seed = j.value("scene_seed", s.scene_seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("synth spec: ") + e.what());
  }
  return s;
}

namespace {

std::vector<Vec3> projection_positions(const SynthSpec& spec, ActivityLabel label, Velocity v, ad::Rng& rng) {
  const double moving = 3.0 / velocity_scale(v);
  const double offset = rng.uniform(0.0, std::min(8.0, kWindowSeconds - moving));
  const double amp = spec.projection_amplitude * (1.0 + spec.size_jitter * rng.uniform(-1.0, 1.0));
  const std::size_t k0 = static_cast<std::size_t>(std::ceil(offset * kBaseRateHz - 1e-9));
  const std::size_t n = static_cast<std::size_t>(std::llround(moving * kBaseRateHz));
  std::vector<Vec3> out(kWindowRows);
  for (std::size_t k = 0; k < kWindowRows; ++k) {
    double u = 0.0;
    if (k >= k0 && k < k0 + n) u = static_cast<double>(k - k0) / static_cast<double>(n - 1);
    const auto d = projection_profile(label, u, amp);
    out[k] = {d[0], 0.0, d[1]};
  }
  return out;
}

AmplitudeWindow to_window(const CsiMatrix& m, int rate_hz) {
  AmplitudeWindow w = preprocess::amplitude(preprocess::prune_subcarriers(m, preprocess::SubcarrierMask::standard()));
  return rate_hz == kBaseRateHz ? w : preprocess::downsample(w, rate_hz);
}

}  // namespace

Sample gen_sample(const SynthSpec& spec, ActivityLabel label, Velocity v, Location loc, std::uint64_t sample_seed) {
  ad::Rng rng(sample_seed);
  ChannelParams params;
  params.dynamic_amplitude = spec.dynamic_amplitude;
  const bool projection = spec.scene == "projection";
  const SceneGeometry geom = projection ? projection_scene() : placement(loc);
  geom.validate();

  std::vector<Vec3> positions;
  if (projection) {
    positions = projection_positions(spec, label, v, rng);
  } else {
    TrajectorySpec t;
    t.label = label;
    t.duration_s = default_duration(label);
    t.velocity_scale = velocity_scale(v);
    t.start_offset_s = rng.uniform(0.0, std::min(8.0, kWindowSeconds - t.moving_seconds()));
    t.size = spec.motion_size * (1.0 + spec.size_jitter * rng.uniform(-1.0, 1.0));
    t.rotation = spec.rotation_jitter * rng.uniform(-1.0, 1.0);
    const double pj = spec.position_jitter;
    t.home = {geom.robot_base.x + pj * rng.uniform(-1.0, 1.0), geom.robot_base.y + pj * rng.uniform(-1.0, 1.0),
              1.0 + pj * rng.uniform(-1.0, 1.0)};
    positions = gen_trajectory(t);
  }

  Sample s;
  s.meta = {label, v, loc, SampleSource::Synthetic};
  for (SnifferId id : {SnifferId::S1, SnifferId::S2}) {
    const std::uint64_t stream = static_cast<std::uint64_t>(loc) * 2 + (id == SnifferId::S1 ? 0 : 1);
    ad::Rng scene_rng(ad::mix_seed(spec.scene_seed, stream));
    const auto h0 = static_channel(params, scene_rng);
    const CsiMatrix m = simulate_csi(positions, geom, id, h0, spec.noise_std, rng, params);
    (id == SnifferId::S1 ? s.sniffer1 : s.sniffer2) = to_window(m, spec.rate_hz);
  }
  return s;
}

Dataset gen_dataset(const SynthSpec& spec, std::size_t workers) {
  spec.validate();
  struct Item {
    ActivityLabel label;
    Velocity v;
    Location loc;
  };
  std::vector<Item> items;
  for (Velocity v : spec.velocities)
    for (Location loc : spec.locations)
      for (ActivityLabel l : kAllLabels)
        for (std::size_t r = 0; r < spec.per_class; ++r) items.push_back({l, v, loc});

  Dataset ds;
  ds.samples.resize(items.size());
  detail::parallel_for(items.size(), workers, [&](std::size_t i) {
    ds.samples[i] = gen_sample(spec, items[i].label, items[i].v, items[i].loc, ad::mix_seed(spec.seed, i));
  });
  return ds;
}

}  // namespace robofi::synth
