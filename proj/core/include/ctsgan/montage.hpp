#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ctsgan/volume.hpp"

namespace ctsgan {

// 8-bit grayscale image, row-major.
struct GrayImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::int64_t y, std::int64_t x) const { return pixels[static_cast<std::size_t>(y * width + x)]; }
};

// Evenly spaced indices strictly inside [0, extent): (k + 1) * extent / (tiles + 1).
std::vector<std::int64_t> montage_indices(std::int64_t extent, std::int64_t tiles);

// Three rows of `tiles` tiles: axial (depth planes), coronal (fixed height
// index) and sagittal (fixed width index). Voxels are clamped to [0, 1].
GrayImage montage(const Volume& v, std::int64_t tiles);

void write_png(const GrayImage& image, const std::filesystem::path& file);

}  // namespace ctsgan
