#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "caipi/augment.hpp"
#include "caipi/classifier.hpp"
#include "caipi/explainer.hpp"
#include "caipi/image.hpp"
#include "caipi/segmentation.hpp"

namespace caipi {

/// RWR_ONLY: counterexamples only for right-for-the-wrong-reasons answers.
/// RWR_PLUS_W: wrong predictions also carry an explanation correction and counterexamples.
enum class Mode { rwr_only, rwr_plus_w };
enum class Outcome { rrr, rwr, w };

std::string to_string(Mode mode);
std::string to_string(Outcome outcome);
Mode parse_mode(const std::string& name);
Outcome parse_outcome(const std::string& name);

struct SessionConfig {
  /// Iteration budget T.
  int budget = 100;
  /// Counterexamples generated per correction (c).
  int counterexamples = 1;
  Mode mode = Mode::rwr_plus_w;
  ExplainerConfig explainer;
  QuickShiftParams segmentation;
  ModelConfig model;
  AugmentParams augment;
  /// Superpixels shown as the decisive region of an explanation.
  int explanation_top_k = 5;
  /// Optional "min quality" stop: end once the evaluator's accuracy reaches this value.
  std::optional<double> stop_accuracy;
  std::uint64_t seed = 0;
};

void validate(const SessionConfig& config);

struct Feedback {
  Outcome outcome = Outcome::rrr;
  std::optional<Label> corrected_label;
  std::optional<Mask> corrected_mask;
};

/// Throws InvalidArgument when the fields required by (outcome, mode) are missing.
void validate_feedback(const Feedback& feedback, Mode mode);

struct PendingQuery {
  Image image;
  Label predicted = 0;
  double confidence = 0.5;
  Explanation explanation;
  SuperpixelMap segments;
  Mask explanation_mask;
};

struct IterationMetrics {
  std::optional<double> accuracy;
  /// Average non-zero explanation score in percent; empty when not evaluated or flagged.
  std::optional<double> explanation_score;
};

struct IterationRecord {
  int iteration = 0;
  InstanceId instance_id = 0;
  Outcome outcome = Outcome::rrr;
  Label label = 0;
  Label predicted = 0;
  int counterexamples = 0;
  std::size_t labeled_size = 0;
  std::size_t unlabeled_size = 0;
  IterationMetrics metrics;
  std::vector<TransformRecord> transforms;
};

using ModelFactory =
    std::function<std::unique_ptr<ProbabilisticClassifier>(std::span<const LabeledImage>)>;
using Evaluator = std::function<IterationMetrics(const ProbabilisticClassifier&)>;

/// Factory that fits the reference CNN from scratch.
ModelFactory cnn_factory(const ModelConfig& config);

/// Index into `unlabeled` of the least confident instance; ties go to the lowest id.
std::size_t select_query(const ProbabilisticClassifier& model, std::span<const Image> unlabeled);

/// One interactive optimisation run. Not thread-safe: callers serialise all access.
class Session {
 public:
  /// Fits the initial model on `labeled` and evaluates it (the iteration-0 baseline).
  Session(SessionConfig config, std::vector<LabeledImage> labeled, std::vector<Image> unlabeled,
          ModelFactory factory = {}, Evaluator evaluator = {});

  /// Selects, predicts and explains the next query and stores it as pending.
  /// Throws ProtocolError if a query is pending or the session is complete.
  const PendingQuery& begin_iteration();

  /// Applies the user's answer to the pending query, refits and records the iteration.
  /// On error the session is left unchanged.
  const IterationRecord& submit_feedback(const Feedback& feedback);

  bool complete() const;
  /// Why the session is complete ("budget exhausted", ...) or empty while running.
  std::string completion_reason() const;

  int iteration() const { return iteration_; }
  const SessionConfig& config() const { return config_; }
  const std::optional<PendingQuery>& pending() const { return pending_; }
  const std::vector<LabeledImage>& labeled() const { return labeled_; }
  const std::vector<Image>& unlabeled() const { return unlabeled_; }
  const std::vector<IterationRecord>& history() const { return history_; }
  const IterationMetrics& baseline_metrics() const { return baseline_; }
  const ProbabilisticClassifier& model() const { return *model_; }
  std::unique_ptr<ProbabilisticClassifier> release_model() { return std::move(model_); }
  std::size_t base_labeled_count() const;
  std::size_t counterexample_count() const { return labeled_.size() - base_labeled_count(); }

  /// Line-delimited JSON, one record per submitted feedback. The stream must outlive
  /// the session.
  void set_event_log(std::ostream* log) { event_log_ = log; }

 private:
  SessionConfig config_;
  std::vector<LabeledImage> labeled_;
  std::vector<Image> unlabeled_;
  ModelFactory factory_;
  Evaluator evaluator_;
  std::unique_ptr<ProbabilisticClassifier> model_;
  int iteration_ = 0;
  std::optional<PendingQuery> pending_;
  std::vector<IterationRecord> history_;
  IterationMetrics baseline_;
  bool quality_reached_ = false;
  InstanceId next_synthetic_id_ = -1;
  std::ostream* event_log_ = nullptr;
};

/// Answers a pending query the way a user would.
using Oracle = std::function<Feedback(const PendingQuery&)>;

struct OracleRun {
  std::unique_ptr<ProbabilisticClassifier> model;
  IterationMetrics baseline;
  std::vector<IterationRecord> trace;
  /// True when U ran out before the budget was spent.
  bool exhausted = false;
  std::size_t labeled_size = 0;
  std::size_t base_labeled = 0;
};

/// Drives begin_iteration / submit_feedback until the session completes.
OracleRun run_with_oracle(const SessionConfig& config, std::vector<LabeledImage> labeled,
                          std::vector<Image> unlabeled, const Oracle& oracle,
                          ModelFactory factory = {}, Evaluator evaluator = {},
                          std::ostream* event_log = nullptr);

}  // namespace caipi
