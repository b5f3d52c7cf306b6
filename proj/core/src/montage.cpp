#include "ctsgan/montage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "ctsgan/error.hpp"

namespace ctsgan {
namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0));
}

}  // namespace

std::vector<std::int64_t> montage_indices(std::int64_t extent, std::int64_t tiles) {
  if (tiles < 1) throw ArgumentError("montage needs at least one tile per row");
  if (extent < 1) throw ArgumentError("montage axis is empty");
  std::vector<std::int64_t> out;
  for (std::int64_t k = 0; k < tiles; ++k) out.push_back((k + 1) * extent / (tiles + 1));
  return out;
}

GrayImage montage(const Volume& v, std::int64_t tiles) {
  const auto D = v.depth(), H = v.height(), W = v.width();
  // Tile shapes per row: axial H x W, coronal D x W, sagittal D x H.
  const std::int64_t tile_w = std::max(W, H);
  const std::int64_t tile_h = std::max(H, D);
  GrayImage img;
  img.width = tiles * tile_w;
  img.height = 3 * tile_h;
  img.pixels.assign(static_cast<std::size_t>(img.width * img.height), 0);
  const auto put = [&](std::int64_t row, std::int64_t k, std::int64_t y, std::int64_t x, float value) {
    img.pixels[static_cast<std::size_t>((row * tile_h + y) * img.width + k * tile_w + x)] = to_byte(value);
  };

  const auto axial = montage_indices(D, tiles);
  const auto coronal = montage_indices(H, tiles);
  const auto sagittal = montage_indices(W, tiles);
  for (std::int64_t k = 0; k < tiles; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x) put(0, k, y, x, v.at(axial[ks], y, x));
    }
    // Superior planes at the top of the coronal and sagittal tiles.
    for (std::int64_t z = 0; z < D; ++z) {
      for (std::int64_t x = 0; x < W; ++x) put(1, k, z, x, v.at(z, coronal[ks], x));
      for (std::int64_t y = 0; y < H; ++y) put(2, k, z, y, v.at(z, y, sagittal[ks]));
    }
  }
  return img;
}

void write_png(const GrayImage& image, const std::filesystem::path& file) {
  if (image.width < 1 || image.height < 1) throw ArgumentError("cannot write an empty image");
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(file.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw FormatError("cannot write " + file.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw FormatError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("libpng failed while writing " + file.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::int64_t y = 0; y < image.height; ++y) {
    png_write_row(png, image.pixels.data() + y * image.width);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace ctsgan
