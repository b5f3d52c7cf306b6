#include "ctsgan/nodule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctsgan/error.hpp"

namespace ctsgan {
namespace {

void check_edge(std::int64_t edge) {
  if (edge < 6 || edge % 2 != 0) throw ArgumentError("VOI edge must be even and >= 6");
}

double squared_distance(const Index3& a, const Index3& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double d = static_cast<double>(a[k] - b[k]);
    s += d * d;
  }
  return s;
}

}  // namespace

void to_json(nlohmann::json& j, const NoduleSpec& s) {
  j = {{"center", s.center}, {"radius_vox", s.radius_vox}, {"intensity", s.intensity}};
}

void from_json(const nlohmann::json& j, NoduleSpec& s) {
  s.center = j.at("center").get<Index3>();
  s.radius_vox = j.at("radius_vox").get<double>();
  s.intensity = j.value("intensity", s.intensity);
}

Voi extract_voi(const Volume& v, const Index3& center, std::int64_t edge) {
  check_edge(edge);
  const std::array<std::int64_t, 3> dims{v.depth(), v.height(), v.width()};
  Voi voi;
  voi.edge = edge;
  for (std::size_t k = 0; k < 3; ++k) {
    voi.origin[k] = center[k] - edge / 2;
    if (voi.origin[k] < 0 || voi.origin[k] + edge > dims[k]) {
      throw IndexError("VOI of edge " + std::to_string(edge) + " around (" + std::to_string(center[0]) + "," +
                       std::to_string(center[1]) + "," + std::to_string(center[2]) + ") leaves the volume");
    }
  }
  voi.cube.resize(static_cast<std::size_t>(edge * edge * edge));
  for (std::int64_t z = 0; z < edge; ++z) {
    for (std::int64_t y = 0; y < edge; ++y) {
      for (std::int64_t x = 0; x < edge; ++x) {
        voi.cube[static_cast<std::size_t>(voi.index(z, y, x))] =
            v.at(voi.origin[0] + z, voi.origin[1] + y, voi.origin[2] + x);
      }
    }
  }
  return voi;
}

Volume paste_back(const Volume& v, const Voi& voi) {
  const std::array<std::int64_t, 3> dims{v.depth(), v.height(), v.width()};
  if (static_cast<std::int64_t>(voi.cube.size()) != voi.edge * voi.edge * voi.edge) {
    throw ArgumentError("VOI payload does not match its edge");
  }
  for (std::size_t k = 0; k < 3; ++k) {
    if (voi.origin[k] < 0 || voi.origin[k] + voi.edge > dims[k]) throw IndexError("VOI footprint leaves the volume");
  }
  Volume out = v;
  for (std::int64_t z = 0; z < voi.edge; ++z) {
    for (std::int64_t y = 0; y < voi.edge; ++y) {
      for (std::int64_t x = 0; x < voi.edge; ++x) {
        out.at(voi.origin[0] + z, voi.origin[1] + y, voi.origin[2] + x) = voi.at(z, y, x);
      }
    }
  }
  return out;
}

std::vector<float> center_sphere(std::int64_t edge, double radius) {
  check_edge(edge);
  if (radius < 0.0 || radius >= static_cast<double>(edge) / 2.0) {
    throw ArgumentError("mask radius must lie in [0, E/2)");
  }
  std::vector<float> mask(static_cast<std::size_t>(edge * edge * edge), 0.0f);
  const double c = static_cast<double>(edge / 2);
  const double r2 = radius * radius;
  for (std::int64_t z = 0; z < edge; ++z) {
    for (std::int64_t y = 0; y < edge; ++y) {
      for (std::int64_t x = 0; x < edge; ++x) {
        const double d2 = (z - c) * (z - c) + (y - c) * (y - c) + (x - c) * (x - c);
        if (d2 < r2) mask[static_cast<std::size_t>((z * edge + y) * edge + x)] = 1.0f;
      }
    }
  }
  return mask;
}

Voi mask_center(const Voi& voi, double radius) {
  const auto sphere = center_sphere(voi.edge, radius);
  Voi out = voi;
  for (std::size_t i = 0; i < out.cube.size(); ++i) {
    if (sphere[i] > 0.0f) out.cube[i] = 0.0f;
  }
  return out;
}

double mask_radius(const NoduleSpec& spec, std::int64_t edge) {
  return std::min(spec.radius_vox + 1.0, static_cast<double>(edge) / 2.0 - 1e-3);
}

Volume render_nodule(const Volume& v, const NoduleSpec& spec) {
  if (spec.radius_vox <= 0.0) throw ArgumentError("nodule radius must be positive");
  if (!(spec.intensity > 0.0f && spec.intensity <= 1.0f)) throw ArgumentError("nodule intensity must lie in (0, 1]");
  Volume out = v;
  const auto r = spec.radius_vox;
  const auto reach = static_cast<std::int64_t>(std::ceil(r));
  for (std::int64_t z = spec.center[0] - reach; z <= spec.center[0] + reach; ++z) {
    for (std::int64_t y = spec.center[1] - reach; y <= spec.center[1] + reach; ++y) {
      for (std::int64_t x = spec.center[2] - reach; x <= spec.center[2] + reach; ++x) {
        if (z < 0 || y < 0 || x < 0 || z >= v.depth() || y >= v.height() || x >= v.width()) continue;
        const double d = std::sqrt(squared_distance({z, y, x}, spec.center));
        if (d >= r) continue;
        // 1 in the core, smooth fall to 0 over the outer voxel.
        const double t = std::clamp(r - d, 0.0, 1.0);
        const double alpha = t * t * (3.0 - 2.0 * t);
        auto& voxel = out.at(z, y, x);
        voxel = static_cast<float>(voxel + (spec.intensity - voxel) * alpha);
      }
    }
  }
  return out;
}

int CountDistribution::sample(Rng& rng) const {
  if (probabilities.empty()) throw ConfigError("count distribution is empty");
  double total = 0.0;
  for (const auto& [k, p] : probabilities) {
    if (p < 0.0 || k < 0) throw ConfigError("count distribution has negative entries");
    total += p;
  }
  if (total <= 0.0) throw ConfigError("count distribution has zero mass");
  double u = rng.uniform(0.0, total);
  for (const auto& [k, p] : probabilities) {
    if (u < p) return k;
    u -= p;
  }
  return probabilities.back().first;
}

double RadiusDistribution::sample(Rng& rng) const {
  if (fixed > 0.0) return fixed;
  if (min <= 0.0 || max < min) throw ConfigError("radius distribution bounds are invalid");
  return std::clamp(std::exp(rng.normal(log_mean, log_sigma)), min, max);
}

void to_json(nlohmann::json& j, const CountDistribution& d) {
  j = nlohmann::json::array();
  for (const auto& [k, p] : d.probabilities) j.push_back({k, p});
}

void from_json(const nlohmann::json& j, CountDistribution& d) {
  d.probabilities.clear();
  for (const auto& e : j) d.probabilities.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
}

void to_json(nlohmann::json& j, const RadiusDistribution& d) {
  j = {{"log_mean", d.log_mean}, {"log_sigma", d.log_sigma}, {"min", d.min}, {"max", d.max}, {"fixed", d.fixed}};
}

void from_json(const nlohmann::json& j, RadiusDistribution& d) {
  d.log_mean = j.value("log_mean", d.log_mean);
  d.log_sigma = j.value("log_sigma", d.log_sigma);
  d.min = j.value("min", d.min);
  d.max = j.value("max", d.max);
  d.fixed = j.value("fixed", d.fixed);
}

bool inside_mask(std::span<const std::uint8_t> mask, const Shape3& shape, const Index3& p) {
  if (p[0] < 0 || p[1] < 0 || p[2] < 0 || p[0] >= shape.depth || p[1] >= shape.height || p[2] >= shape.width) {
    return false;
  }
  return mask[static_cast<std::size_t>((p[0] * shape.height + p[1]) * shape.width + p[2])] != 0;
}

std::vector<NoduleSpec> sample_nodule_plan(Rng& rng, const CountDistribution& counts,
                                           const RadiusDistribution& radii,
                                           std::span<const std::uint8_t> lung_mask, const Shape3& shape,
                                           std::int64_t voi_edge, int max_attempts, PlacementPolicy policy) {
  check_edge(voi_edge);
  if (static_cast<std::int64_t>(lung_mask.size()) != shape.numel()) {
    throw ArgumentError("lung mask does not match the volume shape");
  }
  const int count = counts.sample(rng);
  std::vector<NoduleSpec> plan;
  if (count == 0) return plan;

  // Candidate centers: lung voxels whose VOI fits in the volume.
  std::vector<Index3> candidates;
  const auto half = voi_edge / 2;
  for (std::int64_t z = half; z + half <= shape.depth; ++z) {
    for (std::int64_t y = half; y + half <= shape.height; ++y) {
      for (std::int64_t x = half; x + half <= shape.width; ++x) {
        if (inside_mask(lung_mask, shape, {z, y, x})) candidates.push_back({z, y, x});
      }
    }
  }
  for (int n = 0; n < count; ++n) {
    const double radius = std::min(radii.sample(rng), static_cast<double>(half));
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !candidates.empty(); ++attempt) {
      const auto& c = candidates[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))];
      const bool clear = std::all_of(plan.begin(), plan.end(), [&](const NoduleSpec& other) {
        const double gap = radius + other.radius_vox;
        return squared_distance(c, other.center) >= gap * gap;
      });
      if (!clear) continue;
      NoduleSpec spec;
      spec.center = c;
      spec.radius_vox = radius;
      spec.intensity = static_cast<float>(rng.uniform(0.55, 0.7));
      plan.push_back(spec);
      placed = true;
      break;
    }
    if (!placed && policy == PlacementPolicy::at_least_one && !plan.empty()) continue;
    if (!placed) {
      throw PlacementError("could not place nodule " + std::to_string(n + 1) + " of " + std::to_string(count) +
                           " after " + std::to_string(max_attempts) + " attempts");
    }
  }
  return plan;
}

NodulePhantom make_nodule_phantom(const PhantomParams& params, const CountDistribution& counts,
                                  const RadiusDistribution& radii, std::int64_t voi_edge, Rng& rng) {
  NodulePhantom out{generate_phantom(params), Volume::zeros({4, 4, 4}), {}};
  out.nodules = sample_nodule_plan(rng, counts, radii, out.clean.lung_mask, out.clean.volume.shape(), voi_edge, 100,
                                   PlacementPolicy::at_least_one);
  out.with_nodules = out.clean.volume;
  for (const auto& spec : out.nodules) out.with_nodules = render_nodule(out.with_nodules, spec);
  return out;
}

}  // namespace ctsgan
