#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "caipi/image.hpp"

namespace caipi {

/// Partition of an image into superpixels with contiguous ids 0..n_segments-1.
struct SuperpixelMap {
  int height = 0;
  int width = 0;
  int n_segments = 0;
  std::vector<int> assignment;

  int at(int row, int col) const { return assignment[static_cast<std::size_t>(row) * width + col]; }
  std::vector<std::size_t> segment_sizes() const;
};

/// Quick Shift parameters. Pixels are embedded as
///   ((1 - ratio) * row, (1 - ratio) * col, ratio * kIntensityScale * intensity)
/// and all distances below are measured in that feature space.
struct QuickShiftParams {
  /// Gaussian bandwidth of the Parzen density estimate.
  double kernel_size = 4.0;
  /// Longest allowed link to a higher-density pixel.
  double max_dist = 8.0;
  /// Weight of intensity against spatial position, in [0, 1).
  double ratio = 0.2;
  /// Seeds the sub-resolution jitter that breaks exact density ties in flat regions.
  std::uint64_t seed = 0;
};

/// Intensities in [0,1] are stretched to a lightness-like [0,100] range before weighting.
inline constexpr double kIntensityScale = 100.0;
/// Amplitude of the tie-breaking density jitter.
inline constexpr double kDensityJitter = 1e-6;

void validate(const QuickShiftParams& params);

/// Density window half-width in pixels: the Gaussian is truncated at 3 bandwidths.
int density_radius(const QuickShiftParams& params);
/// Spatial half-width that contains every pixel within max_dist in feature space.
int link_radius(const QuickShiftParams& params);

struct QuickShiftTrace {
  std::vector<double> density;
  /// Scanline index of the linked pixel, or -1 for roots.
  std::vector<int> parent;
  SuperpixelMap map;
};

SuperpixelMap quick_shift(const Image& image, const QuickShiftParams& params);
/// Same computation, also exposing per-pixel densities and links.
QuickShiftTrace quick_shift_traced(const Image& image, const QuickShiftParams& params);

/// mask[p] = 1 iff assignment[p] is in `ids`. Throws InvalidArgument for ids out of range.
Mask mask_from_segments(const SuperpixelMap& map, std::span<const int> ids);

/// Ids of segments that intersect `mask` and whose covered fraction is >= min_overlap,
/// ascending.
std::vector<int> segments_touching_mask(const SuperpixelMap& map, const Mask& mask,
                                        double min_overlap);

}  // namespace caipi
