#include "ctsgan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ctsgan/error.hpp"

namespace ctsgan {
namespace {

struct Vec3 {
  double z, y, x;
};

Vec3 operator-(Vec3 a, Vec3 b) { return {a.z - b.z, a.y - b.y, a.x - b.x}; }
double dot(Vec3 a, Vec3 b) { return a.z * b.z + a.y * b.y + a.x * b.x; }

double segment_distance(Vec3 p, Vec3 a, Vec3 b) {
  const Vec3 ab = b - a;
  const Vec3 ap = p - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0 ? dot(ap, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec3 q{a.z + t * ab.z, a.y + t * ab.y, a.x + t * ab.x};
  const Vec3 d = p - q;
  return std::sqrt(dot(d, d));
}

struct Ellipsoid {
  Vec3 center;
  Vec3 axes;

  double norm_radius(Vec3 p) const {
    const double dz = (p.z - center.z) / axes.z;
    const double dy = (p.y - center.y) / axes.y;
    const double dx = (p.x - center.x) / axes.x;
    return std::sqrt(dz * dz + dy * dy + dx * dx);
  }
  // Approximate signed distance in voxels, negative inside.
  double signed_distance(Vec3 p) const {
    return (norm_radius(p) - 1.0) * std::min({axes.z, axes.y, axes.x});
  }
};

struct Tube {
  Vec3 a, b;
  double radius;
};

// Partial-volume coverage of a voxel given the signed distance of its center.
double coverage(double sd) { return std::clamp(0.5 - sd, 0.0, 1.0); }

float lerp(float from, float to, double alpha) {
  return static_cast<float>(from + (to - from) * alpha);
}

}  // namespace

std::map<Region, IntensityBand> PhantomParams::default_bands() {
  return {
      {Region::background, {0.00f, 0.04f}},  {Region::body, {0.58f, 0.68f}},
      {Region::lung, {0.08f, 0.14f}},        {Region::airway_lumen, {0.00f, 0.04f}},
      {Region::airway_wall, {0.72f, 0.80f}}, {Region::vessel, {0.42f, 0.52f}},
  };
}

void validate(const PhantomParams& p) {
  auto fail = [](const std::string& what) { throw ArgumentError("phantom: " + what); };
  if (p.size < 8 || p.size % 2 != 0) fail("size must be even and >= 8");
  if (p.lung_count < 1 || p.lung_count > 2) fail("lung_count must be 1 or 2");
  if (p.shape_jitter < 0.0 || p.shape_jitter >= 0.5) fail("shape_jitter must lie in [0, 0.5)");
  const double grow = 1.0 + p.shape_jitter;
  for (double a : p.body_axes) {
    if (a <= 0.0 || a * grow > 0.5) fail("body axes exceed the cube");
  }
  for (double a : p.lung_axes) {
    if (a <= 0.0) fail("lung axes must be positive");
  }
  if (p.lung_offset + p.lung_axes[2] * grow > p.body_axes[1]) fail("lungs exceed the body laterally");
  if (p.lung_axes[1] * grow + 0.03 > p.body_axes[0]) fail("lungs exceed the body");
  if (p.lung_center_z - p.lung_axes[0] * grow < 0.0 || p.lung_center_z + p.lung_axes[0] * grow > 1.0) {
    fail("lungs exceed the cube along depth");
  }
  if (p.airway_tube_radius <= 0.0 || p.airway_tube_radius > 0.15) fail("airway radius out of range");
  if (p.carina_z * grow >= p.lung_center_z) fail("carina must lie above the lungs");
  if (p.vessel_filament_count.first < 0 ||
      p.vessel_filament_count.second < p.vessel_filament_count.first) {
    fail("vessel filament count range is invalid");
  }
  for (const auto& [region, band] : p.intensity_bands) {
    if (band.low < 0.0f || band.high > 1.0f || band.low > band.high) fail("intensity band outside [0, 1]");
  }
  for (Region r : {Region::background, Region::body, Region::lung, Region::airway_lumen,
                   Region::airway_wall, Region::vessel}) {
    if (!p.intensity_bands.contains(r)) fail("missing intensity band");
  }
  if (p.noise.sigma < 0.0 || p.noise.stripe_amplitude < 0.0 || p.noise.stripe_period <= 0.0) {
    fail("device noise parameters must be non-negative");
  }
}

Phantom generate_phantom(const PhantomParams& p) {
  validate(p);
  Rng rng(p.seed);
  const double n = static_cast<double>(p.size);
  const double c = (n - 1.0) / 2.0;
  auto jitter = [&] { return 1.0 + p.shape_jitter * rng.uniform(-1.0, 1.0); };
  auto band = [&](Region r) {
    const auto& b = p.intensity_bands.at(r);
    return static_cast<float>(rng.uniform(b.low, b.high));
  };

  const float v_background = band(Region::background);
  const float v_body = band(Region::body);
  const float v_lung = band(Region::lung);
  const float v_lumen = band(Region::airway_lumen);
  const float v_wall = band(Region::airway_wall);
  const float v_vessel = band(Region::vessel);

  const double body_ry = p.body_axes[0] * n * jitter();
  const double body_rx = p.body_axes[1] * n * jitter();
  const double body_cy = c + 0.01 * n * rng.uniform(-1.0, 1.0);

  std::vector<Ellipsoid> lungs;
  const std::array<double, 2> sides{-1.0, 1.0};
  for (int k = 0; k < p.lung_count; ++k) {
    const double side = p.lung_count == 1 ? 0.0 : sides[static_cast<std::size_t>(k)];
    Ellipsoid e;
    e.center = {p.lung_center_z * n * (1.0 + 0.03 * rng.uniform(-1.0, 1.0)), c + 0.03 * n,
                c + side * p.lung_offset * n};
    e.axes = {p.lung_axes[0] * n * jitter(), p.lung_axes[1] * n * jitter(),
              p.lung_axes[2] * n * jitter()};
    lungs.push_back(e);
  }

  const double airway_r = std::max(0.8, p.airway_tube_radius * n);
  const double carina_z = p.carina_z * n * jitter();
  const double trachea_y = c - 0.08 * n;
  std::vector<Tube> airways;
  airways.push_back({{-1.0, trachea_y, c}, {carina_z, trachea_y, c}, airway_r});
  std::vector<Vec3> hila;
  for (const auto& lung : lungs) {
    const double toward_mid = lung.center.x < c ? 1.0 : (lung.center.x > c ? -1.0 : 0.0);
    const Vec3 hilum{lung.center.z - 0.25 * lung.axes.z, lung.center.y - 0.2 * lung.axes.y,
                     lung.center.x + toward_mid * 0.35 * lung.axes.x};
    hila.push_back(hilum);
    airways.push_back({{carina_z, trachea_y, c}, hilum, 0.75 * airway_r});
  }

  std::vector<Tube> vessels;
  const double vessel_scale = std::max(1.0, n / 32.0);
  for (std::size_t k = 0; k < lungs.size(); ++k) {
    const auto count = rng.uniform_int(p.vessel_filament_count.first, p.vessel_filament_count.second);
    for (std::int64_t i = 0; i < count; ++i) {
      // Random endpoint inside 85% of the lung ellipsoid.
      Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
      const double len = std::sqrt(dot(dir, dir)) + 1e-12;
      const double r = 0.85 * std::cbrt(rng.uniform());
      const auto& e = lungs[k].axes;
      const Vec3 end{lungs[k].center.z + r * e.z * dir.z / len, lungs[k].center.y + r * e.y * dir.y / len,
                     lungs[k].center.x + r * e.x * dir.x / len};
      vessels.push_back({hila[k], end, rng.uniform(0.5, 0.9) * vessel_scale});
    }
  }
  const double stripe_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  const Shape3 shape{p.size, p.size, p.size};
  std::vector<float> vox(static_cast<std::size_t>(shape.numel()));
  std::vector<std::uint8_t> lung_mask(vox.size(), 0);
  std::vector<std::int64_t> lung_area(static_cast<std::size_t>(p.size), 0);
  std::vector<std::int64_t> airway_area(static_cast<std::size_t>(p.size), 0);
  std::vector<std::int64_t> body_area(static_cast<std::size_t>(p.size), 0);

  for (std::int64_t z = 0; z < p.size; ++z) {
    const double t = (static_cast<double>(z) - c) / (n / 2.0);
    const double taper = 1.0 - 0.12 * t * t;
    const Ellipsoid body_section{{static_cast<double>(z), body_cy, c},
                                 {1.0, body_ry * taper, body_rx * taper}};
    for (std::int64_t y = 0; y < p.size; ++y) {
      for (std::int64_t x = 0; x < p.size; ++x) {
        const Vec3 pt{static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
        const std::size_t idx = static_cast<std::size_t>((z * p.size + y) * p.size + x);

        // In-plane ellipse: ignore the depth term by evaluating at the section center.
        const double body_sd = body_section.signed_distance({body_section.center.z, pt.y, pt.x});
        const double a_body = coverage(body_sd);
        float v = lerp(v_background, v_body, a_body);
        if (body_sd < 0.0) ++body_area[static_cast<std::size_t>(z)];

        double a_lung = 0.0;
        for (const auto& lung : lungs) {
          const double sd = lung.signed_distance(pt);
          a_lung = std::max(a_lung, coverage(sd));
          if (lung.norm_radius(pt) < 1.0) lung_mask[idx] = 1;
        }
        a_lung *= a_body;
        v = lerp(v, v_lung, a_lung);
        if (lung_mask[idx]) ++lung_area[static_cast<std::size_t>(z)];

        double a_vessel = 0.0;
        for (const auto& tube : vessels) {
          a_vessel = std::max(a_vessel, coverage(segment_distance(pt, tube.a, tube.b) - tube.radius));
        }
        v = lerp(v, v_vessel, a_vessel * a_lung);

        double a_wall = 0.0;
        double a_lumen = 0.0;
        for (const auto& tube : airways) {
          const double d = segment_distance(pt, tube.a, tube.b);
          a_wall = std::max(a_wall, coverage(d - tube.radius - 0.8));
          a_lumen = std::max(a_lumen, coverage(d - tube.radius));
        }
        v = lerp(v, v_wall, a_wall * a_body);
        v = lerp(v, v_lumen, a_lumen * a_body);
        if (a_lumen * a_body > 0.5) ++airway_area[static_cast<std::size_t>(z)];

        if (a_body > 0.5) {
          v += static_cast<float>(p.noise.sigma * rng.normal());
          v += static_cast<float>(p.noise.stripe_amplitude *
                                  std::sin(2.0 * std::numbers::pi * static_cast<double>(x) /
                                               p.noise.stripe_period +
                                           stripe_phase));
        }
        vox[idx] = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }

  std::vector<PlaneClass> labels(static_cast<std::size_t>(p.size));
  for (std::size_t z = 0; z < labels.size(); ++z) {
    if (body_area[z] > 0 && static_cast<double>(lung_area[z]) >= 0.08 * static_cast<double>(body_area[z])) {
      labels[z] = PlaneClass::lung;
    } else if (airway_area[z] > 0) {
      labels[z] = PlaneClass::airway;
    } else {
      labels[z] = PlaneClass::body;
    }
  }

  Volume volume(shape, std::move(vox), {1.0, 1.0, 1.0}, Provenance::real_phantom,
                "phantom-" + std::to_string(p.seed));
  return Phantom{std::move(volume), std::move(lung_mask), std::move(labels)};
}

std::vector<std::uint8_t> estimate_lung_mask(const Volume& v, float threshold) {
  const auto H = v.height();
  const auto W = v.width();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(v.shape().numel()), 0);
  std::vector<std::uint8_t> outside(static_cast<std::size_t>(H * W));
  std::vector<std::int64_t> stack;
  for (std::int64_t d = 0; d < v.depth(); ++d) {
    const auto plane = v.plane(d);
    std::fill(outside.begin(), outside.end(), 0);
    stack.clear();
    auto push = [&](std::int64_t h, std::int64_t w) {
      const auto i = h * W + w;
      if (!outside[static_cast<std::size_t>(i)] && plane[static_cast<std::size_t>(i)] < threshold) {
        outside[static_cast<std::size_t>(i)] = 1;
        stack.push_back(i);
      }
    };
    for (std::int64_t h = 0; h < H; ++h) {
      push(h, 0);
      push(h, W - 1);
    }
    for (std::int64_t w = 0; w < W; ++w) {
      push(0, w);
      push(H - 1, w);
    }
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      const auto h = i / W;
      const auto w = i % W;
      if (h > 0) push(h - 1, w);
      if (h + 1 < H) push(h + 1, w);
      if (w > 0) push(h, w - 1);
      if (w + 1 < W) push(h, w + 1);
    }
    for (std::int64_t i = 0; i < H * W; ++i) {
      const auto u = static_cast<std::size_t>(i);
      if (plane[u] < threshold && !outside[u]) {
        mask[static_cast<std::size_t>(d * H * W) + u] = 1;
      }
    }
  }
  return mask;
}

}  // namespace ctsgan
