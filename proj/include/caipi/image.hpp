#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace caipi {

using Label = int;
using InstanceId = std::int64_t;

/// Binary H x W grid stored row-major, one byte per pixel (0 or 1).
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int h, int w, bool value = false);

  std::uint8_t& at(int row, int col) { return bits[index(row, col)]; }
  std::uint8_t at(int row, int col) const { return bits[index(row, col)]; }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * width + col;
  }
  std::size_t size() const { return bits.size(); }
  std::size_t count() const;
  bool none() const { return count() == 0; }

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Grayscale image with intensities in [0,1], row-major.
struct Image {
  InstanceId id = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;
  std::optional<Label> source_class;

  Image() = default;
  Image(int h, int w, float fill = 0.0f, InstanceId instance_id = 0);

  float& at(int row, int col) { return pixels[index(row, col)]; }
  float at(int row, int col) const { return pixels[index(row, col)]; }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * width + col;
  }
  std::size_t size() const { return pixels.size(); }
  bool empty() const { return pixels.empty(); }
  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width;
  }
  bool same_shape(const Mask& mask) const {
    return height == mask.height && width == mask.width;
  }
};

struct LabeledImage {
  Image image;
  Label label = 0;
  /// True for generated counterexamples, false for instances drawn from a dataset.
  bool synthetic = false;
};

/// Throws InvalidArgument unless the two grids have equal dimensions.
void require_same_shape(const Image& image, const Mask& mask, const char* what);
void require_same_shape(const Mask& a, const Mask& b, const char* what);

}  // namespace caipi
