#include "caipi/explainer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "caipi/error.hpp"
#include "caipi/rng.hpp"

namespace caipi {

void validate(const ExplainerConfig& config) {
  if (config.max_features < 1) throw InvalidArgument("explainer: max_features must be >= 1");
  if (config.n_samples <= config.max_features) {
    throw InvalidArgument("explainer: n_samples must exceed max_features");
  }
  if (!(config.kernel_width > 0)) throw InvalidArgument("explainer: kernel_width must be > 0");
}

InterpretableInstance::InterpretableInstance(const Image& image, const SuperpixelMap& map)
    : base(image), segments(map), presence(static_cast<std::size_t>(map.n_segments), 1) {
  if (image.height != map.height || image.width != map.width) {
    throw InvalidArgument("interpretable instance: segment map does not match image");
  }
  if (map.n_segments < 1) throw InvalidArgument("interpretable instance: no superpixels");
}

double proximity(std::span<const std::uint8_t> z_prime, double kernel_width) {
  if (z_prime.empty()) throw InvalidArgument("proximity: empty representation");
  const auto absent = std::count(z_prime.begin(), z_prime.end(), std::uint8_t{0});
  const double distance = static_cast<double>(absent) / static_cast<double>(z_prime.size());
  return std::exp(-(distance * distance) / (kernel_width * kernel_width));
}

Image render_perturbation(const InterpretableInstance& instance,
                          std::span<const std::uint8_t> z_prime, float fill) {
  const Image& base = instance.base.get();
  const SuperpixelMap& map = instance.segments.get();
  Image out = base;
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (!z_prime[static_cast<std::size_t>(map.assignment[p])]) out.pixels[p] = fill;
  }
  return out;
}

std::vector<Perturbation> sample_perturbations(const InterpretableInstance& instance,
                                               const ExplainerConfig& config) {
  if (config.n_samples < 1) throw InvalidArgument("sample_perturbations: n_samples >= 1");
  if (!(config.kernel_width > 0)) throw InvalidArgument("sample_perturbations: kernel_width");
  const int d = instance.dimension();
  Rng rng(config.seed);
  std::vector<Perturbation> samples;
  samples.reserve(static_cast<std::size_t>(config.n_samples));
  for (int s = 0; s < config.n_samples; ++s) {
    Perturbation z;
    z.z_prime.assign(static_cast<std::size_t>(d), 1);
    if (s > 0) {
      for (auto& bit : z.z_prime) bit = rng.bernoulli(0.5) ? 1 : 0;
    }
    z.z_image = render_perturbation(instance, z.z_prime, config.fill);
    z.proximity = proximity(z.z_prime, config.kernel_width);
    samples.push_back(std::move(z));
  }
  return samples;
}

namespace {

struct WlsFit {
  bool full_rank = false;
  Eigen::VectorXd coef;  // intercept first
  double loss = 0.0;
};

/// Weighted least squares on [1, z_S] via column-pivoted QR of the sqrt(w)-scaled system.
WlsFit solve_wls(const Eigen::MatrixXd& z, const Eigen::VectorXd& sqrt_w,
                 const Eigen::VectorXd& f, const std::vector<int>& columns) {
  const Eigen::Index n = z.rows();
  Eigen::MatrixXd design(n, static_cast<Eigen::Index>(columns.size()) + 1);
  design.col(0) = sqrt_w;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    design.col(static_cast<Eigen::Index>(j) + 1) = z.col(columns[j]).cwiseProduct(sqrt_w);
  }
  const Eigen::VectorXd target = f.cwiseProduct(sqrt_w);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  WlsFit fit;
  fit.full_rank = qr.rank() == design.cols();
  if (!fit.full_rank) return fit;
  fit.coef = qr.solve(target);
  fit.loss = (design * fit.coef - target).squaredNorm();
  return fit;
}

}  // namespace

Explanation fit_surrogate(std::span<const std::uint8_t> z_primes, int dimension,
                          std::span<const double> weights, std::span<const double> f_outputs,
                          int max_features) {
  if (dimension < 1) throw InvalidArgument("fit_surrogate: dimension must be >= 1");
  if (max_features < 1) throw InvalidArgument("fit_surrogate: max_features must be >= 1");
  const std::size_t n = f_outputs.size();
  if (weights.size() != n || z_primes.size() != n * static_cast<std::size_t>(dimension)) {
    throw InvalidArgument("fit_surrogate: inconsistent sample counts");
  }
  if (n < static_cast<std::size_t>(max_features) + 1) {
    throw InvalidArgument("fit_surrogate: need at least max_features + 1 samples");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(f_outputs[i])) throw InvalidArgument("fit_surrogate: non-finite output");
    if (!(weights[i] > 0)) throw InvalidArgument("fit_surrogate: weights must be positive");
  }

  const auto rows = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd z(rows, dimension);
  Eigen::VectorXd sqrt_w(rows), f(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (int j = 0; j < dimension; ++j) {
      z(i, j) = z_primes[static_cast<std::size_t>(i) * dimension + j];
    }
    sqrt_w(i) = std::sqrt(weights[static_cast<std::size_t>(i)]);
    f(i) = f_outputs[static_cast<std::size_t>(i)];
  }

  Explanation result;
  std::vector<int> selected;
  std::vector<std::uint8_t> excluded(static_cast<std::size_t>(dimension), 0);
  WlsFit current = solve_wls(z, sqrt_w, f, selected);
  const int target_size = std::min(max_features, dimension);
  while (static_cast<int>(selected.size()) < target_size) {
    int best = -1;
    WlsFit best_fit;
    for (int j = 0; j < dimension; ++j) {
      if (excluded[static_cast<std::size_t>(j)]) continue;
      auto trial = selected;
      trial.push_back(j);
      WlsFit fit = solve_wls(z, sqrt_w, f, trial);
      if (!fit.full_rank) {
        excluded[static_cast<std::size_t>(j)] = 1;
        result.warnings.push_back("superpixel " + std::to_string(j) +
                                  " is collinear with the selected design; dropped");
        continue;
      }
      if (best < 0 || fit.loss < best_fit.loss) {
        best = j;
        best_fit = std::move(fit);
      }
    }
    if (best < 0) break;
    selected.push_back(best);
    excluded[static_cast<std::size_t>(best)] = 1;
    current = std::move(best_fit);
  }

  result.weights.assign(static_cast<std::size_t>(dimension), 0.0);
  result.intercept = current.coef(0);
  for (std::size_t j = 0; j < selected.size(); ++j) {
    result.weights[static_cast<std::size_t>(selected[j])] =
        current.coef(static_cast<Eigen::Index>(j) + 1);
  }
  result.selected = std::move(selected);
  result.fidelity = current.loss;
  return result;
}

Explanation fit_surrogate(std::span<const Perturbation> perturbations,
                          std::span<const double> f_outputs, int max_features) {
  if (perturbations.empty()) throw InvalidArgument("fit_surrogate: no samples");
  const auto d = perturbations.front().z_prime.size();
  std::vector<std::uint8_t> rows;
  std::vector<double> weights;
  rows.reserve(perturbations.size() * d);
  for (const auto& p : perturbations) {
    if (p.z_prime.size() != d) throw InvalidArgument("fit_surrogate: ragged samples");
    rows.insert(rows.end(), p.z_prime.begin(), p.z_prime.end());
    weights.push_back(p.proximity);
  }
  return fit_surrogate(rows, static_cast<int>(d), weights, f_outputs, max_features);
}

ExplainResult explain(const ProbabilisticClassifier& model, const Image& image,
                      const SuperpixelMap& segments, const ExplainerConfig& config) {
  validate(config);
  const InterpretableInstance instance(image, segments);
  const auto samples = sample_perturbations(instance, config);
  std::vector<Image> batch;
  batch.reserve(samples.size());
  for (const auto& s : samples) batch.push_back(s.z_image);
  const auto probs = model.predict_proba(batch);

  ExplainResult result;
  result.segments = segments;
  // Sample 0 is the unperturbed image.
  result.predicted = predicted_label(probs.front());
  result.confidence = prediction_score(probs.front());
  std::vector<double> outputs;
  outputs.reserve(probs.size());
  for (const auto& p : probs) outputs.push_back(p[static_cast<std::size_t>(result.predicted)]);
  result.explanation = fit_surrogate(samples, outputs, config.max_features);
  result.explanation.target_label = result.predicted;
  return result;
}

ExplainResult explain(const ProbabilisticClassifier& model, const Image& image,
                      const ExplainerConfig& config, const QuickShiftParams& segmentation) {
  return explain(model, image, quick_shift(image, segmentation), config);
}

Mask explanation_mask(const Explanation& explanation, const SuperpixelMap& segments, int top_k) {
  if (top_k < 1) throw InvalidArgument("explanation_mask: top_k must be >= 1");
  std::vector<int> positive;
  for (int id : explanation.selected) {
    if (explanation.weights[static_cast<std::size_t>(id)] > 0) positive.push_back(id);
  }
  std::stable_sort(positive.begin(), positive.end(), [&](int a, int b) {
    return explanation.weights[static_cast<std::size_t>(a)] >
           explanation.weights[static_cast<std::size_t>(b)];
  });
  if (positive.size() > static_cast<std::size_t>(top_k)) positive.resize(top_k);
  return mask_from_segments(segments, positive);
}

}  // namespace caipi
