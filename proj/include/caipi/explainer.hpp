#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "caipi/classifier.hpp"
#include "caipi/image.hpp"
#include "caipi/segmentation.hpp"

namespace caipi {

struct ExplainerConfig {
  int n_samples = 200;
  /// Maximum number of superpixels kept by the sparse surrogate.
  int max_features = 5;
  /// Width of the exponential proximity kernel over normalized Hamming distance.
  double kernel_width = 0.25;
  /// Intensity painted over absent superpixels.
  float fill = 0.0f;
  std::uint64_t seed = 0;
};

void validate(const ExplainerConfig& config);

/// Binary presence representation x' of an image over its superpixels.
/// Non-owning: base and segments must outlive the instance.
struct InterpretableInstance {
  std::reference_wrapper<const Image> base;
  std::reference_wrapper<const SuperpixelMap> segments;
  std::vector<std::uint8_t> presence;

  InterpretableInstance(const Image& image, const SuperpixelMap& map);
  int dimension() const { return static_cast<int>(presence.size()); }
};

struct Perturbation {
  std::vector<std::uint8_t> z_prime;
  Image z_image;
  double proximity = 1.0;
};

struct Explanation {
  /// One coefficient per superpixel; zero outside `selected`.
  std::vector<double> weights;
  double intercept = 0.0;
  /// Retained superpixel ids in selection order.
  std::vector<int> selected;
  Label target_label = 0;
  /// Proximity-weighted squared error of the fitted surrogate.
  double fidelity = 0.0;
  std::vector<std::string> warnings;
};

/// exp(-D^2 / sigma^2) with D the fraction of absent superpixels.
double proximity(std::span<const std::uint8_t> z_prime, double kernel_width);

/// Renders the image with absent superpixels painted `fill`.
Image render_perturbation(const InterpretableInstance& instance,
                          std::span<const std::uint8_t> z_prime, float fill);

/// n_samples perturbations: sample 0 is all-ones, the rest draw each bit Bernoulli(0.5).
std::vector<Perturbation> sample_perturbations(const InterpretableInstance& instance,
                                               const ExplainerConfig& config);

/// Sparse linear surrogate: forward stepwise selection of up to max_features columns on
/// the proximity-weighted least-squares objective, then the exact weighted least-squares
/// fit on the selected columns plus an intercept. Candidates collinear with the current
/// design are skipped and reported in `warnings`.
Explanation fit_surrogate(std::span<const Perturbation> perturbations,
                          std::span<const double> f_outputs, int max_features);

/// Same, from raw binary rows (n x d, row-major) and proximity weights.
Explanation fit_surrogate(std::span<const std::uint8_t> z_primes, int dimension,
                          std::span<const double> weights, std::span<const double> f_outputs,
                          int max_features);

struct ExplainResult {
  Explanation explanation;
  SuperpixelMap segments;
  Label predicted = 0;
  double confidence = 0.5;
};

/// Segments, perturbs, queries the model in one batch and fits the surrogate for the
/// predicted class (surrogate target: that class's probability).
ExplainResult explain(const ProbabilisticClassifier& model, const Image& image,
                      const ExplainerConfig& config, const QuickShiftParams& segmentation);
/// Variant reusing a precomputed segmentation.
ExplainResult explain(const ProbabilisticClassifier& model, const Image& image,
                      const SuperpixelMap& segments, const ExplainerConfig& config);

/// Union of the segments of the top_k selected features with strictly positive weight.
Mask explanation_mask(const Explanation& explanation, const SuperpixelMap& segments, int top_k);

}  // namespace caipi
