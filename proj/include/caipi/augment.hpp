#pragma once

#include <cstdint>
#include <vector>

#include "caipi/image.hpp"
#include "caipi/rng.hpp"

namespace caipi {

struct AugmentParams {
  double scale_min = 0.7;
  double scale_max = 1.3;
  double rotation_min_deg = -25.0;
  double rotation_max_deg = 25.0;
  float fill = 0.0f;
  int max_attempts = 100;
  std::uint64_t seed = 0;
};

void validate(const AugmentParams& params);

/// Scale, then rotation (both about the feature centroid), then translation, in pixels.
/// Rotation is counter-clockwise on screen for positive angles.
struct TransformSpec {
  double scale = 1.0;
  double rotation_deg = 0.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
};

struct TransformRecord {
  TransformSpec spec;
  double center_x = 0.0;
  double center_y = 0.0;
  /// Draws of (scale, rotation) needed before the feature fit the frame.
  int attempts = 1;
};

struct TransformedFeatures {
  Image image;
  /// Pixels covered by the transformed feature region.
  Mask region;
  TransformRecord record;
};

struct Counterexample {
  Image image;
  Label label = 0;
  InstanceId source_id = 0;
  TransformRecord transform;
};

/// output[p] = image[p] where mask[p] is set, fill elsewhere.
Image extract_features(const Image& image, const Mask& mask, float fill = 0.0f);

/// Bounding box (in pixel-edge coordinates) of the mask after `spec` about `center`.
struct Extent {
  double min_x, max_x, min_y, max_y;
};
Extent transformed_extent(const Mask& mask, const TransformSpec& spec, double center_x,
                          double center_y);

/// Deterministic transform with bilinear resampling; pixels outside the transformed
/// region are `fill`. Throws EmptyMaskError for an empty mask.
TransformedFeatures apply_transform(const Image& features, const Mask& mask,
                                    const TransformSpec& spec, float fill);

/// Uniform scale and rotation (redrawn while the result cannot fit), then a translation
/// drawn uniformly from the range that keeps the whole region inside the frame.
/// Throws EmptyMaskError, or FrameFitExhausted after max_attempts draws.
TransformedFeatures random_transform(const Image& features, const Mask& mask,
                                     const AugmentParams& params, Rng& rng);

/// `count` independent draws of extract_features followed by random_transform, all
/// carrying `label` and the source id of `image`.
std::vector<Counterexample> make_counterexamples(const Image& image, const Mask& mask,
                                                 Label label, int count,
                                                 const AugmentParams& params, Rng& rng);

}  // namespace caipi
