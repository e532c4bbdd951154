#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "caipi/config.hpp"
#include "caipi/dataset.hpp"
#include "caipi/engine.hpp"

namespace caipi {

/// Fraction of correctly classified instances. Throws on an empty set.
double accuracy(const ProbabilisticClassifier& model, std::span<const LabeledImage> test);

/// |a & b| / |a | b|. Throws InvalidArgument on shape mismatch or when both are empty.
double iou(const Mask& a, const Mask& b);

struct ExplanationEvalConfig {
  ExplainerConfig explainer;
  QuickShiftParams segmentation;
  int top_k = 5;
};

struct ExplanationScore {
  /// Mean IoU x 100 over correctly predicted instances with IoU > 0; empty when no
  /// instance qualifies (flagged, distinct from a score of 0).
  std::optional<double> percent;
  std::size_t evaluated = 0;
  std::size_t correct = 0;
  std::size_t nonzero = 0;
};

/// Segmentations of fixed evaluation images, keyed by instance id.
class SegmentationCache {
 public:
  const SuperpixelMap& get(const Image& image, const QuickShiftParams& params);

 private:
  std::unordered_map<InstanceId, SuperpixelMap> maps_;
};

/// Incorrect predictions are excluded, as are correct ones whose IoU is 0.
/// Each instance is explained with a seed derived from its id.
ExplanationScore avg_nonzero_explanation_score(const ProbabilisticClassifier& model,
                                               const ExplanationEvalConfig& config,
                                               std::span<const ExplanationTestItem> items,
                                               SegmentationCache* cache = nullptr);

/// Stand-in for the human: answers from true labels and ground-truth masks.
class SimulatedOracle {
 public:
  struct Truth {
    Label label = 0;
    Mask mask;
  };

  explicit SimulatedOracle(double iou_threshold);

  /// Truth for every image from its source_class and an intensity-threshold mask.
  static SimulatedOracle from_images(std::span<const Image> images, float mask_threshold,
                                     double iou_threshold);

  void add(InstanceId id, Label label, Mask mask);
  double iou_threshold() const { return theta_; }
  std::size_t size() const { return truth_.size(); }

  /// Wrong prediction -> W with true label and truth mask; right with IoU >= threshold
  /// (or an empty truth mask) -> RRR; otherwise RWR with the truth mask.
  Feedback answer(InstanceId id, Label predicted, const Mask& explanation) const;

  Oracle as_oracle() const;

 private:
  double theta_;
  std::unordered_map<InstanceId, Truth> truth_;
};

inline Feedback oracle_answer(const SimulatedOracle& oracle, InstanceId id, Label predicted,
                              const Mask& explanation) {
  return oracle.answer(id, predicted, explanation);
}

struct CellResult {
  Mode mode = Mode::rwr_plus_w;
  int counterexamples = 0;
  /// Maximum over the per-iteration evaluations (baseline only when T = 0).
  double max_accuracy = 0.0;
  std::optional<double> max_explanation_score;
  IterationMetrics baseline;
  std::vector<IterationRecord> trace;
  std::map<std::string, int> outcomes;
  bool exhausted = false;
  std::size_t labeled_size = 0;
  std::size_t base_labeled = 0;
};

struct ExperimentResult {
  std::string dataset;
  std::array<std::string, 2> class_names;
  std::vector<CellResult> cells;
};

struct ExperimentHooks {
  std::function<void(const std::string&)> progress;
  /// Optional per-cell event log sink.
  std::function<std::ostream*(Mode, int)> event_log;
};

/// Runs every (mode, c) cell of the grid on the same seeded pools.
ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& dataset,
                                const ExperimentHooks& hooks = {});
/// Loads the configured dataset, then runs the grid.
ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentHooks& hooks = {});

/// Plain-text tables: maximum accuracy and maximum explanation score per cell.
std::string format_tables(const ExperimentResult& result);
nlohmann::json result_to_json(const ExperimentResult& result);
inline constexpr int kResultsSchemaVersion = 1;

struct BaselineResult {
  double accuracy = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<double> train_log;
};

/// One conventional training run on a balanced n_train / n_test split.
BaselineResult train_baseline(const Dataset& dataset, std::size_t n_train, std::size_t n_test,
                              const ModelConfig& model, std::uint64_t seed);

struct LabelingEffort {
  std::size_t caipi_base_labels = 0;
  std::size_t caipi_counterexamples = 0;
  std::size_t baseline_labels = 0;
  /// 100 * (1 - caipi_base_labels / baseline_labels).
  double label_reduction_percent = 0.0;
  /// Same, counting counterexamples as training instances.
  double instance_reduction_percent = 0.0;
};

LabelingEffort labeling_effort(std::size_t caipi_base_labels, std::size_t caipi_counterexamples,
                               std::size_t baseline_labels);

}  // namespace caipi
