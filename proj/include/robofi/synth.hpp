#pragma once

// Synthetic dual-sniffer CSI. An end-effector trajectory (one per activity
// class) moves a single reflector through a room with frozen static
// multipath; each sniffer sees
//   h_s[t] = h0(s) + a1 * exp(-j 2 pi f_s tau(t)) + noise
// with tau(t) the transmitter -> reflector -> sniffer path delay.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "robofi/autodiff.hpp"
#include "robofi/core_types.hpp"
#include "robofi/dataset.hpp"

namespace robofi::synth {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
  bool operator==(const Vec3&) const = default;
};

double distance(const Vec3& a, const Vec3& b);

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kCellSize = 1.5;  // m, side of one floor-grid cell

/// Time scale of a velocity tier (v1 = 1.0, each tier 10% faster).
double velocity_scale(Velocity v);
/// Motion duration at v1, seconds.
double default_duration(ActivityLabel label);

struct TrajectorySpec {
  ActivityLabel label = ActivityLabel::Silence;
  double duration_s = 2.0;
  double velocity_scale = 1.0;
  double start_offset_s = 0.0;
  Vec3 home{2.25, 2.25, 1.0};
  double size = 0.3;      // m, characteristic extent of the shape
  double rotation = 0.0;  // rad about the vertical axis

  double moving_seconds() const { return duration_s / velocity_scale; }
  /// Throws InvalidGeometry.
  void validate(double window_s = kWindowSeconds) const;
};

/// Vertices of the class's polyline at unit scale (before size/rotation/home).
std::vector<Vec3> shape_polyline(ActivityLabel label);

/// One position per tick. Stationary at the path start before the motion,
/// constant speed along arc length during it, and stationary at the path end
/// after it.
std::vector<Vec3> gen_trajectory(const TrajectorySpec& spec, int rate_hz = kBaseRateHz,
                                 std::size_t rows = kWindowRows);

/// Ticks covered by the motion interval.
std::pair<std::size_t, std::size_t> motion_ticks(const TrajectorySpec& spec, int rate_hz = kBaseRateHz,
                                                 std::size_t rows = kWindowRows);

struct GridCell {
  int col = 0, row = 0;
  bool operator==(const GridCell&) const = default;
};

struct SceneGeometry {
  Vec3 tx;
  Vec3 sniffer1;
  Vec3 sniffer2;
  Vec3 robot_base;
  GridCell cell1, cell2, robot_cell{1, 1};

  /// Throws InvalidGeometry when sniffers share a cell or sit on the robot.
  void validate() const;
};

Vec3 cell_center(GridCell c, double height = 1.0);
/// The four sniffer placements on the 3x3 grid around the robot cell.
SceneGeometry placement(Location loc);

struct ChannelParams {
  double center_hz = 5.21e9;
  double spacing_hz = 312.5e3;
  std::size_t subcarriers = kRawSubcarriers;
  double dynamic_amplitude = 0.3;
  std::size_t static_paths = 4;  // including line of sight

  double frequency(std::size_t s) const {
    return center_hz + (static_cast<double>(s) - static_cast<double>(subcarriers / 2)) * spacing_hz;
  }
};

/// Static channel h0 per subcarrier: unit line of sight (the delay
/// reference) plus weak scatterers with random gain, phase and excess delay.
/// Line of sight stays dominant so the amplitude has no deep fades.
std::vector<ComplexValue> static_channel(const ChannelParams& params, ad::Rng& rng);

CsiMatrix simulate_csi(std::span<const Vec3> positions, const SceneGeometry& geom, SnifferId sniffer,
                       std::span<const ComplexValue> h0, double noise_std, ad::Rng& rng, const ChannelParams& params,
                       int rate_hz = kBaseRateHz);

/// Far-field scene in which sniffer 1 sees only x displacement and sniffer 2
/// only z displacement. Class motions are chosen so that two pairs of classes
/// look alike to each sniffer, with different pairs per sniffer.
SceneGeometry projection_scene();
/// Per-class (x, z) displacement profile in metres at phase u in [0, 1].
std::array<double, 2> projection_profile(ActivityLabel label, double u, double amplitude);

struct SynthSpec {
  std::string scene = "room";  // "room" or "projection"
  std::size_t per_class = 25;
  std::vector<Velocity> velocities{Velocity::V2};
  std::vector<Location> locations{Location::L1};
  double noise_std = 0.05;
  double dynamic_amplitude = 0.5;
  double motion_size = 0.08;  // m, shape scale in the room scene
  double size_jitter = 0.1;        // relative
  double position_jitter = 0.002;  // m, start point of the motion
  double rotation_jitter = 0.1;   // rad
  double projection_amplitude = 0.05;  // m
  int rate_hz = kBaseRateHz;
  std::uint64_t seed = 0;
  // Static multipath is a property of the room, shared by every sample of a
  // location regardless of `seed`.
  std::uint64_t scene_seed = 1;

  void validate() const;
  std::string to_json() const;
  static SynthSpec from_json(const std::string& text);
};

Sample gen_sample(const SynthSpec& spec, ActivityLabel label, Velocity v, Location loc, std::uint64_t sample_seed);

/// Ordered by velocity, location, class, then repetition. Uses up to `workers`
/// threads; the result does not depend on the count.
Dataset gen_dataset(const SynthSpec& spec, std::size_t workers = 1);

}  // namespace robofi::synth
