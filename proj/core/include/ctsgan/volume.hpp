#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctsgan/rng.hpp"

namespace ctsgan {

enum class Provenance { real_phantom, synthetic, injected, erased };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct Shape3 {
  std::int64_t depth = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;

  std::int64_t plane_size() const { return height * width; }
  std::int64_t numel() const { return depth * height * width; }
  bool operator==(const Shape3&) const = default;
};

using Spacing = std::array<double, 3>;

// A 3D scalar grid indexed [depth][height][width], C order.
//
// Every edge is at least 4 and even so that strided up/down-sampling stacks
// divide it cleanly.
class Volume {
 public:
  Volume(Shape3 shape, std::vector<float> voxels, Spacing spacing_mm = {1.0, 1.0, 1.0},
         Provenance provenance = Provenance::real_phantom, std::string id = {});

  static Volume zeros(Shape3 shape, Provenance provenance = Provenance::real_phantom,
                      std::string id = {});

  const Shape3& shape() const { return shape_; }
  std::int64_t depth() const { return shape_.depth; }
  std::int64_t height() const { return shape_.height; }
  std::int64_t width() const { return shape_.width; }

  std::span<const float> voxels() const { return voxels_; }
  std::span<float> mutable_voxels() { return voxels_; }

  std::int64_t index(std::int64_t d, std::int64_t h, std::int64_t w) const {
    return (d * shape_.height + h) * shape_.width + w;
  }
  float at(std::int64_t d, std::int64_t h, std::int64_t w) const { return voxels_[index(d, h, w)]; }
  float& at(std::int64_t d, std::int64_t h, std::int64_t w) { return voxels_[index(d, h, w)]; }

  std::span<const float> plane(std::int64_t d) const;

  const Spacing& spacing_mm() const { return spacing_; }
  Provenance provenance() const { return provenance_; }
  const std::string& id() const { return id_; }

  void set_id(std::string id) { id_ = std::move(id); }

  // Copy with a new provenance. Only real-phantom -> {injected, erased} and
  // synthetic -> injected are legal; anything else throws ArgumentError.
  Volume with_provenance(Provenance next) const;
  Volume with_id(std::string id) const;

  bool operator==(const Volume& other) const;

 private:
  Shape3 shape_;
  std::vector<float> voxels_;
  Spacing spacing_;
  Provenance provenance_;
  std::string id_;
};

// Three consecutive depth planes; the generator's atomic output.
struct Slice3 {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t center_index = 0;
  std::vector<float> planes;  // [3][height][width]

  std::span<const float> plane(int k) const {
    const auto n = static_cast<std::size_t>(height * width);
    return std::span<const float>(planes).subspan(static_cast<std::size_t>(k) * n, n);
  }
};

// A contiguous run of T depth planes starting at start_index.
struct Slab {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t start_index = 0;
  std::int64_t length = 0;
  std::vector<float> planes;  // [length][height][width]
};

// Sidecar JSON + raw little-endian float32 payload. `base` is the path
// without extension; `<base>.json` and `<base>.raw` are written.
void save_volume(const Volume& v, const std::filesystem::path& base);
Volume load_volume(const std::filesystem::path& base);

// Min-max normalization into [0, 1]. Constant volumes map to zeros.
Volume normalize(const Volume& v);

// Valid centers are 1..depth-2.
std::int64_t slice_count(std::int64_t depth);
Slice3 extract_slice3(const Volume& v, std::int64_t center);
Slab extract_slab(const Volume& v, std::int64_t start, std::int64_t length);

// Uniform draws (with replacement) of Slice3 centers from the slab interior,
// i.e. centers whose three planes all lie inside the slab.
std::vector<std::int64_t> sample_slab_centers(const Slab& slab, std::int64_t depth,
                                              std::int64_t count, Rng& rng);
std::vector<Slice3> sample_slab_slices(const Volume& v, const Slab& slab, std::int64_t count,
                                       Rng& rng);

// Mean Pearson correlation between adjacent depth planes, skipping pairs in
// which either plane is constant.
double mean_adjacent_plane_correlation(const Volume& v);

}  // namespace ctsgan
