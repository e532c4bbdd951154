#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "caipi/classifier.hpp"
#include "caipi/image.hpp"

namespace testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("caipi_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Black box defined by a per-image function returning p1.
class FunctionClassifier final : public caipi::ProbabilisticClassifier {
 public:
  explicit FunctionClassifier(std::function<double(const caipi::Image&)> p1) : p1_(std::move(p1)) {}
  std::vector<caipi::Probabilities> predict_proba(
      std::span<const caipi::Image> images) const override {
    std::vector<caipi::Probabilities> out;
    for (const auto& im : images) {
      const double p = p1_(im);
      out.push_back({1.0 - p, p});
    }
    return out;
  }
  using caipi::ProbabilisticClassifier::predict_proba;

 private:
  std::function<double(const caipi::Image&)> p1_;
};

inline caipi::Image filled(int h, int w, float v, caipi::InstanceId id = 0) {
  return caipi::Image(h, w, v, id);
}

/// Image with a bright axis-aligned rectangle [r0, r1) x [c0, c1).
inline caipi::Image rect_image(int h, int w, int r0, int r1, int c0, int c1, float v = 1.0f,
                               caipi::InstanceId id = 0) {
  caipi::Image im(h, w, 0.0f, id);
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) im.at(r, c) = v;
  }
  return im;
}

inline caipi::Mask rect_mask(int h, int w, int r0, int r1, int c0, int c1) {
  caipi::Mask m(h, w);
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) m.at(r, c) = 1;
  }
  return m;
}

}  // namespace testing
