#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctsgan/phantom.hpp"
#include "ctsgan/rng.hpp"
#include "ctsgan/volume.hpp"

namespace ctsgan {

using Index3 = std::array<std::int64_t, 3>;  // (z, y, x)

// Cubic sub-volume of edge E taken from `origin` in its source volume.
struct Voi {
  std::int64_t edge = 0;
  Index3 origin{0, 0, 0};
  std::vector<float> cube;  // [E][E][E]

  std::int64_t index(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return (z * edge + y) * edge + x;
  }
  float at(std::int64_t z, std::int64_t y, std::int64_t x) const { return cube[static_cast<std::size_t>(index(z, y, x))]; }
};

// A nodule sphere. The center is a voxel index; the VOI around it places the
// center at local index (E/2, E/2, E/2).
struct NoduleSpec {
  Index3 center{0, 0, 0};
  double radius_vox = 3.0;
  float intensity = 0.62f;
};

void to_json(nlohmann::json& j, const NoduleSpec& s);
void from_json(const nlohmann::json& j, NoduleSpec& s);

// VOI of edge E whose local center (E/2, E/2, E/2) sits at `center`.
// E must be even and >= 6; throws IndexError when the VOI leaves the volume.
Voi extract_voi(const Volume& v, const Index3& center, std::int64_t edge);
// Copy of `v` with the VOI footprint overwritten.
Volume paste_back(const Volume& v, const Voi& voi);

// Voxels strictly closer than `radius` to the VOI center are set to 0.
// Requires 0 <= radius < E/2.
Voi mask_center(const Voi& voi, double radius);
// 1 inside the same sphere mask_center() clears, 0 elsewhere.
std::vector<float> center_sphere(std::int64_t edge, double radius);

// Radius of the region handed to the injector/eraser for a nodule.
double mask_radius(const NoduleSpec& spec, std::int64_t edge);

// Procedural ground-truth nodule: a sphere of `intensity` with a one-voxel
// smooth falloff, zero influence at distance >= radius.
Volume render_nodule(const Volume& v, const NoduleSpec& spec);

// Categorical distribution over nodule counts.
struct CountDistribution {
  std::vector<std::pair<int, double>> probabilities{{1, 0.3}, {2, 0.4}, {3, 0.2}, {4, 0.1}};

  int sample(Rng& rng) const;
};

// Log-normal radius clipped to [min, max]; `fixed` > 0 overrides sampling.
struct RadiusDistribution {
  double log_mean = 1.3;
  double log_sigma = 0.35;
  double min = 2.0;
  double max = 8.0;
  double fixed = 0.0;

  double sample(Rng& rng) const;
};

void to_json(nlohmann::json& j, const CountDistribution& d);
void from_json(const nlohmann::json& j, CountDistribution& d);
void to_json(nlohmann::json& j, const RadiusDistribution& d);
void from_json(const nlohmann::json& j, RadiusDistribution& d);

// `all`: every sampled nodule must fit. `at_least_one`: nodules that cannot
// be placed are dropped, as long as one fits.
enum class PlacementPolicy { all, at_least_one };

// Rejection-samples non-overlapping nodules whose centers lie in the lung
// mask and whose VOIs fit in the volume. Throws PlacementError after
// `max_attempts` failed draws for one nodule (the first one under
// `at_least_one`).
std::vector<NoduleSpec> sample_nodule_plan(Rng& rng, const CountDistribution& counts,
                                           const RadiusDistribution& radii,
                                           std::span<const std::uint8_t> lung_mask, const Shape3& shape,
                                           std::int64_t voi_edge, int max_attempts = 100,
                                           PlacementPolicy policy = PlacementPolicy::all);

bool inside_mask(std::span<const std::uint8_t> mask, const Shape3& shape, const Index3& p);

// Phantom with procedurally rendered nodules; the clean volume is kept for
// building training pairs. Nodules that do not fit are dropped
// (PlacementPolicy::at_least_one).
struct NodulePhantom {
  Phantom clean;
  Volume with_nodules;
  std::vector<NoduleSpec> nodules;
};

NodulePhantom make_nodule_phantom(const PhantomParams& params, const CountDistribution& counts,
                                  const RadiusDistribution& radii, std::int64_t voi_edge, Rng& rng);

}  // namespace ctsgan
