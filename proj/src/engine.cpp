#include "caipi/engine.hpp"

#include <algorithm>

#include "caipi/config.hpp"
#include "caipi/error.hpp"
#include "caipi/rng.hpp"

namespace caipi {
namespace {

// Stream tags keep the per-iteration RNG streams of different components apart.
constexpr std::uint64_t kExplainStream = 0x45585;
constexpr std::uint64_t kAugmentStream = 0x41554;

std::uint64_t iteration_seed(std::uint64_t session_seed, std::uint64_t component_seed,
                             std::uint64_t tag, int iteration) {
  return derive_seed(derive_seed(session_seed, tag) ^ component_seed,
                     static_cast<std::uint64_t>(iteration));
}

}  // namespace

std::string to_string(Mode mode) { return mode == Mode::rwr_only ? "RWR" : "RWR+W"; }

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::rrr: return "RRR";
    case Outcome::rwr: return "RWR";
    case Outcome::w: return "W";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  if (name == "RWR" || name == "RWR_ONLY" || name == "rwr_only") return Mode::rwr_only;
  if (name == "RWR+W" || name == "RWR_PLUS_W" || name == "rwr_plus_w") return Mode::rwr_plus_w;
  throw InvalidArgument("unknown mode: " + name);
}

Outcome parse_outcome(const std::string& name) {
  if (name == "RRR") return Outcome::rrr;
  if (name == "RWR") return Outcome::rwr;
  if (name == "W") return Outcome::w;
  throw InvalidArgument("unknown outcome: " + name);
}

void validate(const SessionConfig& config) {
  if (config.budget < 0) throw InvalidArgument("session: budget must be >= 0");
  if (config.counterexamples < 0) throw InvalidArgument("session: counterexamples must be >= 0");
  if (config.explanation_top_k < 1) throw InvalidArgument("session: explanation_top_k >= 1");
  validate(config.explainer);
  validate(config.segmentation);
  validate(config.model);
  validate(config.augment);
}

void validate_feedback(const Feedback& feedback, Mode mode) {
  switch (feedback.outcome) {
    case Outcome::rrr:
      return;
    case Outcome::rwr:
      if (!feedback.corrected_mask) throw InvalidArgument("RWR feedback requires a corrected mask");
      return;
    case Outcome::w:
      if (!feedback.corrected_label) throw InvalidArgument("W feedback requires a corrected label");
      if (*feedback.corrected_label != 0 && *feedback.corrected_label != 1) {
        throw InvalidArgument("corrected label must be 0 or 1");
      }
      if (mode == Mode::rwr_plus_w && !feedback.corrected_mask) {
        throw InvalidArgument("W feedback in RWR+W mode requires a corrected mask");
      }
      return;
  }
}

ModelFactory cnn_factory(const ModelConfig& config) {
  return [config](std::span<const LabeledImage> labeled) {
    return std::unique_ptr<ProbabilisticClassifier>(
        std::make_unique<ConvNet>(fit(labeled, config)));
  };
}

std::size_t select_query(const ProbabilisticClassifier& model, std::span<const Image> unlabeled) {
  if (unlabeled.empty()) throw InvalidArgument("select_query: unlabeled pool is empty");
  const auto probs = model.predict_proba(unlabeled);
  std::size_t best = 0;
  for (std::size_t i = 1; i < unlabeled.size(); ++i) {
    const double score = prediction_score(probs[i]);
    const double best_score = prediction_score(probs[best]);
    if (score < best_score || (score == best_score && unlabeled[i].id < unlabeled[best].id)) {
      best = i;
    }
  }
  return best;
}

Session::Session(SessionConfig config, std::vector<LabeledImage> labeled,
                 std::vector<Image> unlabeled, ModelFactory factory, Evaluator evaluator)
    : config_(std::move(config)),
      labeled_(std::move(labeled)),
      unlabeled_(std::move(unlabeled)),
      factory_(factory ? std::move(factory) : cnn_factory(config_.model)),
      evaluator_(std::move(evaluator)) {
  validate(config_);
  model_ = factory_(labeled_);
  if (evaluator_) baseline_ = evaluator_(*model_);
}

bool Session::complete() const { return !completion_reason().empty(); }

std::string Session::completion_reason() const {
  if (iteration_ >= config_.budget) return "budget exhausted";
  if (quality_reached_) return "quality reached";
  if (unlabeled_.empty()) return "unlabeled pool exhausted";
  return {};
}

std::size_t Session::base_labeled_count() const {
  return static_cast<std::size_t>(std::count_if(labeled_.begin(), labeled_.end(),
                                                [](const LabeledImage& l) { return !l.synthetic; }));
}

const PendingQuery& Session::begin_iteration() {
  if (pending_) throw ProtocolError("a query is already pending");
  if (complete()) throw ProtocolError(completion_reason());

  const std::size_t index = select_query(*model_, unlabeled_);
  ExplainerConfig explainer = config_.explainer;
  explainer.seed = iteration_seed(config_.seed, config_.explainer.seed, kExplainStream, iteration_);
  const Image& image = unlabeled_[index];
  ExplainResult result = explain(*model_, image, explainer, config_.segmentation);

  PendingQuery query;
  query.image = image;
  query.predicted = result.predicted;
  query.confidence = result.confidence;
  query.explanation_mask =
      explanation_mask(result.explanation, result.segments, config_.explanation_top_k);
  query.explanation = std::move(result.explanation);
  query.segments = std::move(result.segments);
  pending_ = std::move(query);
  return *pending_;
}

const IterationRecord& Session::submit_feedback(const Feedback& feedback) {
  if (!pending_) throw ProtocolError("no pending query");
  validate_feedback(feedback, config_.mode);
  const PendingQuery& query = *pending_;
  if (feedback.corrected_mask) {
    require_same_shape(query.image, *feedback.corrected_mask, "feedback mask");
  }

  Label label = query.predicted;
  bool augment = false;
  switch (feedback.outcome) {
    case Outcome::rrr:
      break;
    case Outcome::rwr:
      augment = true;
      break;
    case Outcome::w:
      label = *feedback.corrected_label;
      // An empty correction on a wrong prediction still relabels, without counterexamples.
      augment = config_.mode == Mode::rwr_plus_w && !feedback.corrected_mask->none();
      break;
  }

  std::vector<Counterexample> generated;
  if (augment && config_.counterexamples > 0) {
    Rng rng(iteration_seed(config_.seed, config_.augment.seed, kAugmentStream, iteration_));
    generated = make_counterexamples(query.image, *feedback.corrected_mask, label,
                                     config_.counterexamples, config_.augment, rng);
  }

  // Build and fit the new pool before touching any state.
  std::vector<LabeledImage> next_labeled = labeled_;
  LabeledImage absorbed{query.image, label, false};
  absorbed.image.source_class = label;
  next_labeled.push_back(std::move(absorbed));
  InstanceId synthetic_id = next_synthetic_id_;
  IterationRecord record;
  for (auto& cx : generated) {
    cx.image.id = synthetic_id--;
    record.transforms.push_back(cx.transform);
    next_labeled.push_back({std::move(cx.image), cx.label, true});
  }
  auto next_model = factory_(next_labeled);

  const auto it = std::find_if(unlabeled_.begin(), unlabeled_.end(),
                               [&](const Image& im) { return im.id == query.image.id; });
  if (it == unlabeled_.end()) throw Error("pending query is no longer in the unlabeled pool");

  record.iteration = iteration_ + 1;
  record.instance_id = query.image.id;
  record.outcome = feedback.outcome;
  record.label = label;
  record.predicted = query.predicted;
  record.counterexamples = static_cast<int>(generated.size());

  unlabeled_.erase(it);
  labeled_ = std::move(next_labeled);
  model_ = std::move(next_model);
  next_synthetic_id_ = synthetic_id;
  ++iteration_;
  pending_.reset();

  record.labeled_size = labeled_.size();
  record.unlabeled_size = unlabeled_.size();
  if (evaluator_) record.metrics = evaluator_(*model_);
  if (config_.stop_accuracy && record.metrics.accuracy &&
      *record.metrics.accuracy >= *config_.stop_accuracy) {
    quality_reached_ = true;
  }
  history_.push_back(std::move(record));
  if (event_log_) {
    *event_log_ << record_to_json(history_.back()).dump() << '\n';
    event_log_->flush();
  }
  return history_.back();
}

OracleRun run_with_oracle(const SessionConfig& config, std::vector<LabeledImage> labeled,
                          std::vector<Image> unlabeled, const Oracle& oracle,
                          ModelFactory factory, Evaluator evaluator, std::ostream* event_log) {
  Session session(config, std::move(labeled), std::move(unlabeled), std::move(factory),
                  std::move(evaluator));
  session.set_event_log(event_log);
  while (!session.complete()) {
    const PendingQuery& query = session.begin_iteration();
    session.submit_feedback(oracle(query));
  }
  OracleRun run;
  run.baseline = session.baseline_metrics();
  run.trace = session.history();
  run.exhausted = session.unlabeled().empty() && session.iteration() < config.budget;
  run.labeled_size = session.labeled().size();
  run.base_labeled = session.base_labeled_count();
  run.model = session.release_model();
  return run;
}

}  // namespace caipi
