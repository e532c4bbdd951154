#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "caipi/image.hpp"

namespace caipi {

/// 8-bit raster as decoded from a file. channels is 1 (gray) or 3 (RGB).
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;
};

/// Reads a whole file, transparently inflating gzip content.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// Decodes PNG or JPEG (detected by magic bytes). `name` is used in error messages.
Raster decode_image(const std::vector<std::uint8_t>& bytes, const std::string& name);
Raster decode_image_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Raster& raster);

/// Gray raster -> [0,1] image; RGB is reduced with Rec.601 luma weights.
Image to_image(const Raster& raster);
/// [0,1] image -> 8-bit gray raster (rounded, clamped).
Raster to_raster(const Image& image);

/// Bilinear resampling with pixel-centre alignment (half-pixel offsets).
Image resize_bilinear(const Image& image, int height, int width);

}  // namespace caipi
