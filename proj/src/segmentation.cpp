#include "caipi/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "caipi/error.hpp"
#include "caipi/rng.hpp"

namespace caipi {

std::vector<std::size_t> SuperpixelMap::segment_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(n_segments), 0);
  for (int id : assignment) ++sizes[static_cast<std::size_t>(id)];
  return sizes;
}

void validate(const QuickShiftParams& params) {
  if (!(params.kernel_size > 0)) throw InvalidArgument("quick_shift: kernel_size must be > 0");
  if (!(params.max_dist > 0)) throw InvalidArgument("quick_shift: max_dist must be > 0");
  if (!(params.ratio >= 0 && params.ratio < 1)) {
    throw InvalidArgument("quick_shift: ratio must lie in [0, 1)");
  }
}

int density_radius(const QuickShiftParams& params) {
  return static_cast<int>(std::ceil(3.0 * params.kernel_size / (1.0 - params.ratio)));
}

int link_radius(const QuickShiftParams& params) {
  return static_cast<int>(std::floor(params.max_dist / (1.0 - params.ratio)));
}

QuickShiftTrace quick_shift_traced(const Image& image, const QuickShiftParams& params) {
  validate(params);
  if (image.empty()) throw InvalidArgument("quick_shift: empty image");
  const int h = image.height;
  const int w = image.width;
  const std::size_t n = image.size();
  const double spatial = 1.0 - params.ratio;
  const double tone = params.ratio * kIntensityScale;

  std::vector<double> value(n);
  for (std::size_t i = 0; i < n; ++i) value[i] = tone * image.pixels[i];

  // Parzen density; the spatial factor of the Gaussian is tabulated per offset.
  const int rd = density_radius(params);
  const double inv_two_sigma2 = 1.0 / (2.0 * params.kernel_size * params.kernel_size);
  const int side = 2 * rd + 1;
  std::vector<double> spatial_weight(static_cast<std::size_t>(side) * side);
  for (int dr = -rd; dr <= rd; ++dr) {
    for (int dc = -rd; dc <= rd; ++dc) {
      const double d2 = spatial * spatial * (dr * dr + dc * dc);
      spatial_weight[static_cast<std::size_t>(dr + rd) * side + (dc + rd)] =
          std::exp(-d2 * inv_two_sigma2);
    }
  }

  QuickShiftTrace trace;
  trace.density.assign(n, 0.0);
  Rng jitter(params.seed);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * w + c;
      double sum = 0.0;
      for (int qr = std::max(0, r - rd); qr <= std::min(h - 1, r + rd); ++qr) {
        const double* srow = &spatial_weight[static_cast<std::size_t>(qr - r + rd) * side + rd];
        for (int qc = std::max(0, c - rd); qc <= std::min(w - 1, c + rd); ++qc) {
          const double dv = value[static_cast<std::size_t>(qr) * w + qc] - value[p];
          sum += srow[qc - c] * std::exp(-dv * dv * inv_two_sigma2);
        }
      }
      trace.density[p] = sum + kDensityJitter * jitter.uniform();
    }
  }

  // Link each pixel to its nearest strictly denser neighbour within max_dist.
  const int rl = link_radius(params);
  const double max_d2 = params.max_dist * params.max_dist;
  trace.parent.assign(n, -1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * w + c;
      double best = max_d2;
      int best_index = -1;
      for (int qr = std::max(0, r - rl); qr <= std::min(h - 1, r + rl); ++qr) {
        for (int qc = std::max(0, c - rl); qc <= std::min(w - 1, c + rl); ++qc) {
          const std::size_t q = static_cast<std::size_t>(qr) * w + qc;
          if (!(trace.density[q] > trace.density[p])) continue;
          const double dv = value[q] - value[p];
          const double d2 =
              spatial * spatial * ((qr - r) * (qr - r) + (qc - c) * (qc - c)) + dv * dv;
          // Scanline iteration order makes the lower index win on equal distance.
          if (d2 < best || (d2 == best && best_index < 0)) {
            best = d2;
            best_index = static_cast<int>(q);
          }
        }
      }
      trace.parent[p] = best_index;
    }
  }

  // Roots are numbered in scanline order; every pixel inherits its root's id.
  SuperpixelMap& map = trace.map;
  map.height = h;
  map.width = w;
  map.assignment.assign(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    if (trace.parent[p] < 0) map.assignment[p] = map.n_segments++;
  }
  std::vector<std::size_t> chain;
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t q = p;
    chain.clear();
    while (map.assignment[q] < 0) {
      chain.push_back(q);
      q = static_cast<std::size_t>(trace.parent[q]);
    }
    for (std::size_t v : chain) map.assignment[v] = map.assignment[q];
  }
  return trace;
}

SuperpixelMap quick_shift(const Image& image, const QuickShiftParams& params) {
  return quick_shift_traced(image, params).map;
}

Mask mask_from_segments(const SuperpixelMap& map, std::span<const int> ids) {
  std::vector<std::uint8_t> wanted(static_cast<std::size_t>(map.n_segments), 0);
  for (int id : ids) {
    if (id < 0 || id >= map.n_segments) {
      throw InvalidArgument("mask_from_segments: segment id " + std::to_string(id) +
                            " out of range [0, " + std::to_string(map.n_segments) + ")");
    }
    wanted[static_cast<std::size_t>(id)] = 1;
  }
  Mask mask(map.height, map.width);
  for (std::size_t p = 0; p < map.assignment.size(); ++p) {
    mask.bits[p] = wanted[static_cast<std::size_t>(map.assignment[p])];
  }
  return mask;
}

std::vector<int> segments_touching_mask(const SuperpixelMap& map, const Mask& mask,
                                        double min_overlap) {
  if (map.height != mask.height || map.width != mask.width) {
    throw InvalidArgument("segments_touching_mask: dimension mismatch");
  }
  std::vector<std::size_t> covered(static_cast<std::size_t>(map.n_segments), 0);
  for (std::size_t p = 0; p < map.assignment.size(); ++p) {
    if (mask.bits[p]) ++covered[static_cast<std::size_t>(map.assignment[p])];
  }
  const auto sizes = map.segment_sizes();
  std::vector<int> ids;
  for (int id = 0; id < map.n_segments; ++id) {
    const auto k = static_cast<std::size_t>(id);
    if (covered[k] == 0) continue;
    if (static_cast<double>(covered[k]) / static_cast<double>(sizes[k]) >= min_overlap) {
      ids.push_back(id);
    }
  }
  return ids;
}

}  // namespace caipi
