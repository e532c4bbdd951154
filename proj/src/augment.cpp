#include "caipi/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "caipi/error.hpp"

namespace caipi {
namespace {

constexpr double kSnap = 1e-9;

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < kSnap ? r : v;
}

/// Bilinear lookup at (x = column, y = row); samples outside the grid read `outside`.
template <typename Grid>
double bilinear(const Grid& grid, int height, int width, double x, double y, double outside) {
  x = snap(x);
  y = snap(y);
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double ax = x - fx0;
  const double ay = y - fy0;
  auto at = [&](int r, int c) -> double {
    if (r < 0 || r >= height || c < 0 || c >= width) return outside;
    return static_cast<double>(grid[static_cast<std::size_t>(r) * width + c]);
  };
  double v = (1 - ax) * (1 - ay) * at(y0, x0);
  if (ax > 0) v += ax * (1 - ay) * at(y0, x0 + 1);
  if (ay > 0) v += (1 - ax) * ay * at(y0 + 1, x0);
  if (ax > 0 && ay > 0) v += ax * ay * at(y0 + 1, x0 + 1);
  return v;
}

struct Centroid {
  double x = 0, y = 0;
};

Centroid centroid(const Mask& mask) {
  Centroid c;
  std::size_t n = 0;
  for (int r = 0; r < mask.height; ++r) {
    for (int col = 0; col < mask.width; ++col) {
      if (!mask.at(r, col)) continue;
      c.x += col;
      c.y += r;
      ++n;
    }
  }
  if (n == 0) throw EmptyMaskError();
  c.x /= static_cast<double>(n);
  c.y /= static_cast<double>(n);
  return c;
}

}  // namespace

void validate(const AugmentParams& p) {
  if (!(p.scale_min > 0) || p.scale_max < p.scale_min) {
    throw InvalidArgument("augment: scale range must be positive and non-empty");
  }
  if (p.rotation_max_deg < p.rotation_min_deg) {
    throw InvalidArgument("augment: rotation range must be non-empty");
  }
  if (p.max_attempts < 1) throw InvalidArgument("augment: max_attempts must be >= 1");
}

Image extract_features(const Image& image, const Mask& mask, float fill) {
  require_same_shape(image, mask, "extract_features");
  Image out = image;
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (!mask.bits[p]) out.pixels[p] = fill;
  }
  return out;
}

Extent transformed_extent(const Mask& mask, const TransformSpec& spec, double center_x,
                          double center_y) {
  const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta) * spec.scale;
  const double sn = std::sin(theta) * spec.scale;
  Extent e{INFINITY, -INFINITY, INFINITY, -INFINITY};
  bool any = false;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.at(r, c)) continue;
      any = true;
      for (const double oy : {-0.5, 0.5}) {
        for (const double ox : {-0.5, 0.5}) {
          const double dx = c + ox - center_x;
          const double dy = r + oy - center_y;
          const double x = center_x + cs * dx + sn * dy + spec.translate_x;
          const double y = center_y - sn * dx + cs * dy + spec.translate_y;
          e.min_x = std::min(e.min_x, x);
          e.max_x = std::max(e.max_x, x);
          e.min_y = std::min(e.min_y, y);
          e.max_y = std::max(e.max_y, y);
        }
      }
    }
  }
  if (!any) throw EmptyMaskError();
  return e;
}

TransformedFeatures apply_transform(const Image& features, const Mask& mask,
                                    const TransformSpec& spec, float fill) {
  require_same_shape(features, mask, "apply_transform");
  if (!(spec.scale > 0)) throw InvalidArgument("apply_transform: scale must be > 0");
  const Centroid center = centroid(mask);
  const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta) / spec.scale;
  const double sn = std::sin(theta) / spec.scale;

  TransformedFeatures out;
  out.image = Image(features.height, features.width, fill, features.id);
  out.image.source_class = features.source_class;
  out.region = Mask(features.height, features.width);
  out.record = {spec, center.x, center.y, 1};
  for (int r = 0; r < features.height; ++r) {
    for (int c = 0; c < features.width; ++c) {
      // Inverse map: undo translation, then rotation and scale about the centroid.
      const double ex = c - center.x - spec.translate_x;
      const double ey = r - center.y - spec.translate_y;
      const double x = center.x + cs * ex - sn * ey;
      const double y = center.y + sn * ex + cs * ey;
      if (bilinear(mask.bits, mask.height, mask.width, x, y, 0.0) < 0.5) continue;
      out.region.at(r, c) = 1;
      out.image.at(r, c) = static_cast<float>(
          bilinear(features.pixels, features.height, features.width, x, y, fill));
    }
  }
  return out;
}

TransformedFeatures random_transform(const Image& features, const Mask& mask,
                                     const AugmentParams& params, Rng& rng) {
  validate(params);
  require_same_shape(features, mask, "random_transform");
  const Centroid center = centroid(mask);
  for (int attempt = 1; attempt <= params.max_attempts; ++attempt) {
    TransformSpec spec;
    spec.scale = rng.uniform(params.scale_min, params.scale_max);
    spec.rotation_deg = rng.uniform(params.rotation_min_deg, params.rotation_max_deg);
    const Extent e = transformed_extent(mask, spec, center.x, center.y);
    const double lo_x = -0.5 - e.min_x;
    const double hi_x = features.width - 0.5 - e.max_x;
    const double lo_y = -0.5 - e.min_y;
    const double hi_y = features.height - 0.5 - e.max_y;
    if (lo_x > hi_x || lo_y > hi_y) continue;
    spec.translate_x = rng.uniform(lo_x, hi_x);
    spec.translate_y = rng.uniform(lo_y, hi_y);
    TransformedFeatures out = apply_transform(features, mask, spec, params.fill);
    out.record.attempts = attempt;
    return out;
  }
  throw FrameFitExhausted(params.max_attempts);
}

std::vector<Counterexample> make_counterexamples(const Image& image, const Mask& mask,
                                                 Label label, int count,
                                                 const AugmentParams& params, Rng& rng) {
  if (count < 0) throw InvalidArgument("make_counterexamples: count must be >= 0");
  std::vector<Counterexample> out;
  if (count == 0) return out;
  require_same_shape(image, mask, "make_counterexamples");
  if (mask.none()) throw EmptyMaskError();
  const Image features = extract_features(image, mask, params.fill);
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    TransformedFeatures t = random_transform(features, mask, params, rng);
    t.image.source_class = label;
    out.push_back({std::move(t.image), label, image.id, t.record});
  }
  return out;
}

}  // namespace caipi
