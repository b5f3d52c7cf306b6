#include "ctsgan/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "ctsgan/error.hpp"

namespace ctsgan {
namespace {

using nlohmann::json;

void check_shape(const Shape3& s) {
  for (auto edge : {s.depth, s.height, s.width}) {
    if (edge < 4 || edge % 2 != 0) {
      throw ArgumentError("volume edges must be even and >= 4, got [" + std::to_string(s.depth) +
                          "," + std::to_string(s.height) + "," + std::to_string(s.width) + "]");
    }
  }
}

std::filesystem::path with_suffix(const std::filesystem::path& base, const char* ext) {
  auto p = base;
  p += ext;
  return p;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::real_phantom: return "real-phantom";
    case Provenance::synthetic: return "synthetic";
    case Provenance::injected: return "injected";
    case Provenance::erased: return "erased";
  }
  return "unknown";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "real-phantom") return Provenance::real_phantom;
  if (s == "synthetic") return Provenance::synthetic;
  if (s == "injected") return Provenance::injected;
  if (s == "erased") return Provenance::erased;
  throw FormatError("unknown provenance '" + std::string(s) + "'");
}

Volume::Volume(Shape3 shape, std::vector<float> voxels, Spacing spacing_mm, Provenance provenance,
               std::string id)
    : shape_(shape),
      voxels_(std::move(voxels)),
      spacing_(spacing_mm),
      provenance_(provenance),
      id_(std::move(id)) {
  check_shape(shape_);
  if (static_cast<std::int64_t>(voxels_.size()) != shape_.numel()) {
    throw ArgumentError("voxel count " + std::to_string(voxels_.size()) +
                        " does not match shape volume " + std::to_string(shape_.numel()));
  }
  for (double s : spacing_) {
    if (!(s > 0.0)) throw ArgumentError("spacing must be positive");
  }
}

Volume Volume::zeros(Shape3 shape, Provenance provenance, std::string id) {
  check_shape(shape);
  return Volume(shape, std::vector<float>(static_cast<std::size_t>(shape.numel()), 0.0f),
                {1.0, 1.0, 1.0}, provenance, std::move(id));
}

std::span<const float> Volume::plane(std::int64_t d) const {
  if (d < 0 || d >= shape_.depth) throw IndexError("plane index out of range");
  const auto n = static_cast<std::size_t>(shape_.plane_size());
  return std::span<const float>(voxels_).subspan(static_cast<std::size_t>(d) * n, n);
}

Volume Volume::with_provenance(Provenance next) const {
  const bool ok = (provenance_ == Provenance::real_phantom &&
                   (next == Provenance::injected || next == Provenance::erased)) ||
                  (provenance_ == Provenance::synthetic && next == Provenance::injected);
  if (!ok) {
    throw ArgumentError("illegal provenance transition " + std::string(to_string(provenance_)) +
                        " -> " + std::string(to_string(next)));
  }
  Volume out = *this;
  out.provenance_ = next;
  return out;
}

Volume Volume::with_id(std::string id) const {
  Volume out = *this;
  out.id_ = std::move(id);
  return out;
}

bool Volume::operator==(const Volume& other) const {
  return shape_ == other.shape_ && spacing_ == other.spacing_ &&
         provenance_ == other.provenance_ && id_ == other.id_ &&
         std::memcmp(voxels_.data(), other.voxels_.data(), voxels_.size() * sizeof(float)) == 0;
}

void save_volume(const Volume& v, const std::filesystem::path& base) {
  static_assert(std::endian::native == std::endian::little, "raw payload is little-endian");
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());

  json sidecar = {
      {"shape", {v.depth(), v.height(), v.width()}},
      {"dtype", "f32le"},
      {"order", "C"},
      {"spacing_mm", v.spacing_mm()},
      {"provenance", to_string(v.provenance())},
      {"id", v.id()},
  };
  std::ofstream js(with_suffix(base, ".json"));
  if (!js) throw FormatError("cannot write " + with_suffix(base, ".json").string());
  js << sidecar.dump(2) << '\n';

  std::ofstream raw(with_suffix(base, ".raw"), std::ios::binary);
  if (!raw) throw FormatError("cannot write " + with_suffix(base, ".raw").string());
  raw.write(reinterpret_cast<const char*>(v.voxels().data()),
            static_cast<std::streamsize>(v.voxels().size_bytes()));
}

Volume load_volume(const std::filesystem::path& base) {
  const auto json_path = with_suffix(base, ".json");
  std::ifstream js(json_path);
  if (!js) throw FormatError("missing sidecar " + json_path.string());

  json sidecar;
  Shape3 shape;
  Spacing spacing{1.0, 1.0, 1.0};
  Provenance provenance = Provenance::real_phantom;
  std::string id;
  try {
    js >> sidecar;
    const auto dims = sidecar.at("shape").get<std::vector<std::int64_t>>();
    if (dims.size() != 3) throw FormatError("shape must have three entries");
    shape = {dims[0], dims[1], dims[2]};
    if (sidecar.at("dtype").get<std::string>() != "f32le") throw FormatError("dtype must be f32le");
    if (sidecar.at("order").get<std::string>() != "C") throw FormatError("order must be C");
    if (sidecar.contains("spacing_mm")) spacing = sidecar["spacing_mm"].get<Spacing>();
    if (sidecar.contains("provenance")) {
      provenance = provenance_from_string(sidecar["provenance"].get<std::string>());
    }
    if (sidecar.contains("id")) id = sidecar["id"].get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError("malformed sidecar " + json_path.string() + ": " + e.what());
  }

  const auto raw_path = with_suffix(base, ".raw");
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw FormatError("missing payload " + raw_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());
  if (static_cast<std::int64_t>(bytes.size()) != shape.numel() * 4) {
    throw CorruptFileError("payload " + raw_path.string() + " holds " +
                           std::to_string(bytes.size()) + " bytes, expected " +
                           std::to_string(shape.numel() * 4));
  }
  std::vector<float> voxels(static_cast<std::size_t>(shape.numel()));
  std::memcpy(voxels.data(), bytes.data(), bytes.size());
  return Volume(shape, std::move(voxels), spacing, provenance, std::move(id));
}

Volume normalize(const Volume& v) {
  const auto vox = v.voxels();
  const auto [lo_it, hi_it] = std::minmax_element(vox.begin(), vox.end());
  const float lo = *lo_it;
  const float hi = *hi_it;
  std::vector<float> out(vox.size(), 0.0f);
  if (hi > lo) {
    const double range = static_cast<double>(hi) - lo;
    for (std::size_t i = 0; i < vox.size(); ++i) {
      const double x = (static_cast<double>(vox[i]) - lo) / range;
      out[i] = static_cast<float>(std::clamp(x, 0.0, 1.0));
    }
  }
  return Volume(v.shape(), std::move(out), v.spacing_mm(), v.provenance(), v.id());
}

std::int64_t slice_count(std::int64_t depth) { return depth >= 3 ? depth - 2 : 0; }

Slice3 extract_slice3(const Volume& v, std::int64_t center) {
  if (center < 1 || center > v.depth() - 2) {
    throw IndexError("slice center " + std::to_string(center) + " outside 1.." +
                     std::to_string(v.depth() - 2));
  }
  Slice3 s;
  s.height = v.height();
  s.width = v.width();
  s.center_index = center;
  const auto n = static_cast<std::size_t>(v.shape().plane_size());
  const auto first = v.voxels().begin() + static_cast<std::ptrdiff_t>((center - 1) * n);
  s.planes.assign(first, first + static_cast<std::ptrdiff_t>(3 * n));
  return s;
}

Slab extract_slab(const Volume& v, std::int64_t start, std::int64_t length) {
  if (start < 0 || length < 1 || start + length > v.depth()) {
    throw IndexError("slab [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside depth " + std::to_string(v.depth()));
  }
  Slab slab;
  slab.height = v.height();
  slab.width = v.width();
  slab.start_index = start;
  slab.length = length;
  const auto n = static_cast<std::size_t>(v.shape().plane_size());
  const auto first = v.voxels().begin() + static_cast<std::ptrdiff_t>(start * n);
  slab.planes.assign(first, first + static_cast<std::ptrdiff_t>(length * n));
  return slab;
}

std::vector<std::int64_t> sample_slab_centers(const Slab& slab, std::int64_t depth,
                                              std::int64_t count, Rng& rng) {
  if (count <= 0) throw ArgumentError("slice count must be positive");
  const std::int64_t lo = std::max<std::int64_t>(slab.start_index + 1, 1);
  const std::int64_t hi = std::min<std::int64_t>(slab.start_index + slab.length - 2, depth - 2);
  if (hi < lo) {
    throw ArgumentError("slab of length " + std::to_string(slab.length) +
                        " has no interior slice center");
  }
  std::vector<std::int64_t> centers(static_cast<std::size_t>(count));
  for (auto& c : centers) c = rng.uniform_int(lo, hi);
  return centers;
}

std::vector<Slice3> sample_slab_slices(const Volume& v, const Slab& slab, std::int64_t count,
                                       Rng& rng) {
  if (slab.start_index < 0 || slab.start_index + slab.length > v.depth()) {
    throw IndexError("slab does not lie inside the volume");
  }
  std::vector<Slice3> out;
  for (auto c : sample_slab_centers(slab, v.depth(), count, rng)) {
    out.push_back(extract_slice3(v, c));
  }
  return out;
}

double mean_adjacent_plane_correlation(const Volume& v) {
  double total = 0.0;
  int pairs = 0;
  const auto n = static_cast<std::size_t>(v.shape().plane_size());
  for (std::int64_t d = 0; d + 1 < v.depth(); ++d) {
    const auto a = v.plane(d);
    const auto b = v.plane(d + 1);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double da = a[i] - ma;
      const double db = b[i] - mb;
      sab += da * db;
      saa += da * da;
      sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) continue;
    total += sab / std::sqrt(saa * sbb);
    ++pairs;
  }
  return pairs > 0 ? total / pairs : 0.0;
}

}  // namespace ctsgan
