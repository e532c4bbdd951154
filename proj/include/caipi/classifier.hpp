#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "caipi/image.hpp"

namespace caipi {

/// (p0, p1), summing to one.
using Probabilities = std::array<double, 2>;

/// The black box f: anything that maps a batch of images to class probabilities.
/// Implementations must allow concurrent const calls.
class ProbabilisticClassifier {
 public:
  virtual ~ProbabilisticClassifier() = default;
  virtual std::vector<Probabilities> predict_proba(std::span<const Image> images) const = 0;

  Probabilities predict_proba(const Image& image) const;
};

inline Label predicted_label(const Probabilities& p) { return p[1] > p[0] ? 1 : 0; }
/// Confidence of the predicted class, max(p0, p1), in [0.5, 1].
inline double prediction_score(const Probabilities& p) { return p[0] > p[1] ? p[0] : p[1]; }
double prediction_score(const ProbabilisticClassifier& model, const Image& image);

/// Reference CNN: conv(2 filters, 9x9, stride 1) -> ReLU -> max-pool(8x8, stride 8)
/// -> linear(98) -> ReLU -> dropout(0.5) -> linear(16) -> ReLU -> linear(2) -> softmax.
/// Trained with Adam on softmax cross-entropy.
struct ModelConfig {
  int input_size = 64;
  int conv_filters = 2;
  int conv_kernel = 9;
  int conv_stride = 1;
  int pool_kernel = 8;
  int pool_stride = 8;
  int hidden = 98;
  double dropout = 0.5;
  int hidden2 = 16;
  int epochs = 5;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Zero the output layer at initialisation (predictions start at (0.5, 0.5)).
  bool zero_init_output = false;

  int conv_out() const { return (input_size - conv_kernel) / conv_stride + 1; }
  int pool_out() const { return (conv_out() - pool_kernel) / pool_stride + 1; }
  int feature_count() const { return conv_filters * pool_out() * pool_out(); }
};

void validate(const ModelConfig& config);

class ConvNet final : public ProbabilisticClassifier {
 public:
  /// Untrained network with seeded initialisation (uniform +-1/sqrt(fan_in)).
  explicit ConvNet(const ModelConfig& config);

  std::vector<Probabilities> predict_proba(std::span<const Image> images) const override;
  using ProbabilisticClassifier::predict_proba;

  const ModelConfig& config() const { return config_; }
  /// Mean training loss per epoch of the last fit.
  const std::vector<double>& train_log() const { return train_log_; }
  std::size_t parameter_count() const;

  void save(const std::filesystem::path& path) const;
  static ConvNet load(const std::filesystem::path& path);

  friend ConvNet fit(std::span<const LabeledImage> labeled, const ModelConfig& config);

 private:
  struct Layers;
  struct Workspace;
  struct Gradients;

  void forward(const float* input, Workspace& ws, const std::uint8_t* dropout_keep) const;
  void backward(const float* input, const Workspace& ws, const std::uint8_t* dropout_keep,
                Label label, double scale, Gradients& grad) const;

  ModelConfig config_;
  /// All parameters in one buffer, see Layers for the offsets.
  std::vector<float> params_;
  std::vector<double> train_log_;
};

/// Full retraining from a fresh seeded initialisation; shuffling is seeded and dropout
/// is active only during training. Throws InvalidArgument on a single-class pool.
ConvNet fit(std::span<const LabeledImage> labeled, const ModelConfig& config);

/// Checkpoint blob: "CAIPICNN", u32 version, u32 config-json length, config json,
/// u32 parameter count, float32 parameters, u32 epochs, float64 epoch losses.
inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace caipi
