#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "ctsgan/volume.hpp"

namespace ctsgan {

enum class Region { background, body, lung, airway_lumen, airway_wall, vessel };

struct IntensityBand {
  float low = 0.0f;
  float high = 0.0f;
};

// Per-plane anatomical class used to train the evaluation feature extractor.
enum class PlaneClass : int { body = 0, airway = 1, lung = 2 };
inline constexpr int kPlaneClassCount = 3;

// Scanner texture signature. Two corpora with different signatures stand in
// for two acquisition sites.
struct DeviceNoise {
  double sigma = 0.01;             // i.i.d. Gaussian noise inside the body
  double stripe_amplitude = 0.0;   // in-plane sinusoidal banding
  double stripe_period = 6.0;      // voxels
};

// Procedural lung phantom parameters. Geometric quantities are fractions of
// the cube edge so one parameter set works at every resolution.
struct PhantomParams {
  std::int64_t size = 32;
  std::array<double, 2> body_axes{0.42, 0.46};       // (y, x) semi-axes of the torso section
  std::array<double, 3> lung_axes{0.30, 0.25, 0.14};  // (z, y, x) semi-axes of each lung
  double lung_offset = 0.2;                           // lateral lung center offset
  double lung_center_z = 0.55;
  int lung_count = 2;
  double airway_tube_radius = 0.045;
  double carina_z = 0.3;
  std::pair<int, int> vessel_filament_count{3, 6};  // per lung, inclusive
  std::map<Region, IntensityBand> intensity_bands = default_bands();
  DeviceNoise noise;
  double shape_jitter = 0.06;  // relative per-phantom variation of the axes
  std::uint64_t seed = 0;

  static std::map<Region, IntensityBand> default_bands();
};

struct Phantom {
  Volume volume;
  std::vector<std::uint8_t> lung_mask;  // 1 inside a lung cavity, C order like the volume
  std::vector<PlaneClass> plane_labels;
};

// Throws ArgumentError when the geometry leaves the cube or bands leave [0, 1].
void validate(const PhantomParams& params);

Phantom generate_phantom(const PhantomParams& params);

// Dark, body-enclosed voxels: a lung mask estimate for volumes that carry no
// ground-truth mask (generated volumes).
std::vector<std::uint8_t> estimate_lung_mask(const Volume& v, float threshold = 0.3f);

}  // namespace ctsgan
