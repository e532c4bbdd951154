#include "caipi/image.hpp"

#include <algorithm>
#include <string>

#include "caipi/error.hpp"

namespace caipi {

Mask::Mask(int h, int w, bool value)
    : height(h), width(w), bits(static_cast<std::size_t>(h) * w, value ? 1 : 0) {}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Image::Image(int h, int w, float fill, InstanceId instance_id)
    : id(instance_id), height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

void require_same_shape(const Image& image, const Mask& mask, const char* what) {
  if (!image.same_shape(mask)) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (image " +
                          std::to_string(image.height) + "x" + std::to_string(image.width) +
                          ", mask " + std::to_string(mask.height) + "x" +
                          std::to_string(mask.width) + ")");
  }
}

void require_same_shape(const Mask& a, const Mask& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch");
  }
}

}  // namespace caipi
