#include "caipi/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "caipi/error.hpp"
#include "caipi/rng.hpp"

namespace caipi {

double accuracy(const ProbabilisticClassifier& model, std::span<const LabeledImage> test) {
  if (test.empty()) throw InvalidArgument("accuracy: empty test set");
  std::vector<Image> images;
  images.reserve(test.size());
  for (const auto& t : test) images.push_back(t.image);
  const auto probs = model.predict_proba(images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (predicted_label(probs[i]) == test[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double iou(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t p = 0; p < a.bits.size(); ++p) {
    inter += a.bits[p] && b.bits[p];
    uni += a.bits[p] || b.bits[p];
  }
  if (uni == 0) throw InvalidArgument("iou: both masks are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

const SuperpixelMap& SegmentationCache::get(const Image& image, const QuickShiftParams& params) {
  auto it = maps_.find(image.id);
  if (it == maps_.end()) it = maps_.emplace(image.id, quick_shift(image, params)).first;
  return it->second;
}

ExplanationScore avg_nonzero_explanation_score(const ProbabilisticClassifier& model,
                                               const ExplanationEvalConfig& config,
                                               std::span<const ExplanationTestItem> items,
                                               SegmentationCache* cache) {
  ExplanationScore score;
  double sum = 0.0;
  for (const auto& item : items) {
    ++score.evaluated;
    const Label predicted = predicted_label(model.predict_proba(item.image));
    if (predicted != item.label) continue;
    ++score.correct;
    ExplainerConfig explainer = config.explainer;
    explainer.seed = derive_seed(config.explainer.seed, static_cast<std::uint64_t>(item.image.id));
    SuperpixelMap local;
    const SuperpixelMap* segments = nullptr;
    if (cache) {
      segments = &cache->get(item.image, config.segmentation);
    } else {
      local = quick_shift(item.image, config.segmentation);
      segments = &local;
    }
    const ExplainResult result = explain(model, item.image, *segments, explainer);
    const Mask mask = explanation_mask(result.explanation, result.segments, config.top_k);
    if (mask.none() || item.truth.mask.none()) continue;
    const double value = iou(mask, item.truth.mask);
    if (value <= 0.0) continue;
    ++score.nonzero;
    sum += value;
  }
  if (score.nonzero > 0) score.percent = 100.0 * sum / static_cast<double>(score.nonzero);
  return score;
}

SimulatedOracle::SimulatedOracle(double iou_threshold) : theta_(iou_threshold) {
  if (!(theta_ >= 0.0 && theta_ <= 1.0)) {
    throw InvalidArgument("oracle: iou threshold must lie in [0, 1]");
  }
}

SimulatedOracle SimulatedOracle::from_images(std::span<const Image> images, float mask_threshold,
                                             double iou_threshold) {
  SimulatedOracle oracle(iou_threshold);
  for (const auto& image : images) {
    if (!image.source_class) {
      throw InvalidArgument("oracle: image " + std::to_string(image.id) + " has no true label");
    }
    oracle.add(image.id, *image.source_class,
               derive_ground_truth_mask(image, mask_threshold).mask);
  }
  return oracle;
}

void SimulatedOracle::add(InstanceId id, Label label, Mask mask) {
  truth_[id] = Truth{label, std::move(mask)};
}

Feedback SimulatedOracle::answer(InstanceId id, Label predicted, const Mask& explanation) const {
  const auto it = truth_.find(id);
  if (it == truth_.end()) throw InvalidArgument("oracle: unknown instance " + std::to_string(id));
  const Truth& truth = it->second;
  Feedback fb;
  if (predicted != truth.label) {
    fb.outcome = Outcome::w;
    fb.corrected_label = truth.label;
    fb.corrected_mask = truth.mask;
    return fb;
  }
  if (truth.mask.none()) return fb;
  require_same_shape(explanation, truth.mask, "oracle explanation");
  if (iou(explanation, truth.mask) >= theta_) return fb;
  fb.outcome = Outcome::rwr;
  fb.corrected_mask = truth.mask;
  return fb;
}

Oracle SimulatedOracle::as_oracle() const {
  return [this](const PendingQuery& q) {
    return answer(q.image.id, q.predicted, q.explanation_mask);
  };
}

namespace {

std::string cell_name(Mode mode, int c) { return to_string(mode) + " c=" + std::to_string(c); }

void update_max(std::optional<double>& best, const std::optional<double>& v) {
  if (v && (!best || *v > *best)) best = v;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& dataset,
                                const ExperimentHooks& hooks) {
  auto progress = [&](const std::string& msg) {
    if (hooks.progress) hooks.progress(msg);
  };
  const Pools pools = split_pools(dataset, config.pools);
  progress("pools: L0=" + std::to_string(pools.labeled.size()) +
           " U=" + std::to_string(pools.unlabeled.size()) +
           " test=" + std::to_string(pools.test.size()) +
           " expl_test=" + std::to_string(pools.expl_test.size()));

  const SimulatedOracle oracle = SimulatedOracle::from_images(
      pools.unlabeled, config.pools.mask_threshold, config.oracle_iou_threshold);
  SegmentationCache cache;
  ExplanationEvalConfig eval_config{config.session.explainer, config.session.segmentation,
                                    config.explanation_top_k};

  ExperimentResult result;
  result.dataset = config.dataset.name;
  result.class_names = dataset.class_names;
  for (const Mode mode : config.modes) {
    for (const int c : config.counterexamples) {
      SessionConfig session = config.session;
      session.mode = mode;
      session.counterexamples = c;
      const std::string name = cell_name(mode, c);
      progress(name + ": start");

      int evaluations = 0;
      Evaluator evaluator = [&](const ProbabilisticClassifier& model) {
        IterationMetrics m;
        if (!pools.test.empty()) m.accuracy = accuracy(model, pools.test);
        const bool explain_now = config.explanation_every > 0 && !pools.expl_test.empty() &&
                                 evaluations % config.explanation_every == 0;
        if (explain_now) {
          m.explanation_score =
              avg_nonzero_explanation_score(model, eval_config, pools.expl_test, &cache).percent;
        }
        ++evaluations;
        return m;
      };
      int asked = 0;
      Oracle answer = [&](const PendingQuery& q) {
        if (++asked % 10 == 0) progress(name + ": iteration " + std::to_string(asked));
        return oracle.answer(q.image.id, q.predicted, q.explanation_mask);
      };
      std::ostream* log = hooks.event_log ? hooks.event_log(mode, c) : nullptr;
      OracleRun run = run_with_oracle(session, pools.labeled, pools.unlabeled, answer, {},
                                      evaluator, log);

      CellResult cell;
      cell.mode = mode;
      cell.counterexamples = c;
      cell.baseline = run.baseline;
      std::optional<double> best_acc;
      for (const auto& r : run.trace) {
        update_max(best_acc, r.metrics.accuracy);
        update_max(cell.max_explanation_score, r.metrics.explanation_score);
        ++cell.outcomes[to_string(r.outcome)];
      }
      if (run.trace.empty()) {
        best_acc = run.baseline.accuracy;
        cell.max_explanation_score = run.baseline.explanation_score;
      }
      cell.max_accuracy = best_acc.value_or(0.0);
      cell.trace = std::move(run.trace);
      cell.exhausted = run.exhausted;
      cell.labeled_size = run.labeled_size;
      cell.base_labeled = run.base_labeled;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s: done, max accuracy %.2f%%, labeled %zu (%zu base)",
                    name.c_str(), 100.0 * cell.max_accuracy, cell.labeled_size, cell.base_labeled);
      progress(buf);
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentHooks& hooks) {
  const Dataset dataset = load_dataset(config.dataset);
  return run_experiment(config, dataset, hooks);
}

std::string format_tables(const ExperimentResult& result) {
  std::vector<Mode> modes;
  std::vector<int> cs;
  for (const auto& cell : result.cells) {
    if (std::find(modes.begin(), modes.end(), cell.mode) == modes.end()) modes.push_back(cell.mode);
    if (std::find(cs.begin(), cs.end(), cell.counterexamples) == cs.end()) {
      cs.push_back(cell.counterexamples);
    }
  }
  auto find = [&](Mode m, int c) -> const CellResult* {
    for (const auto& cell : result.cells) {
      if (cell.mode == m && cell.counterexamples == c) return &cell;
    }
    return nullptr;
  };
  std::ostringstream out;
  char buf[64];
  for (const bool accuracy_table : {true, false}) {
    out << result.dataset << " (" << result.class_names[0] << " / " << result.class_names[1]
        << "): " << (accuracy_table ? "max accuracy (%)" : "max avg non-zero explanation score (%)")
        << '\n';
    std::snprintf(buf, sizeof buf, "%-8s", "mode");
    out << buf;
    for (const int c : cs) {
      std::snprintf(buf, sizeof buf, "%10s", ("c=" + std::to_string(c)).c_str());
      out << buf;
    }
    out << '\n';
    for (const Mode m : modes) {
      std::snprintf(buf, sizeof buf, "%-8s", to_string(m).c_str());
      out << buf;
      for (const int c : cs) {
        const CellResult* cell = find(m, c);
        if (!cell) {
          std::snprintf(buf, sizeof buf, "%10s", "-");
        } else if (accuracy_table) {
          std::snprintf(buf, sizeof buf, "%10.2f", 100.0 * cell->max_accuracy);
        } else if (cell->max_explanation_score) {
          std::snprintf(buf, sizeof buf, "%10.2f", *cell->max_explanation_score);
        } else {
          std::snprintf(buf, sizeof buf, "%10s", "n/a");
        }
        out << buf;
      }
      out << '\n';
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::json result_to_json(const ExperimentResult& result) {
  Json cells = Json::array();
  for (const auto& cell : result.cells) {
    Json trace = Json::array();
    for (const auto& r : cell.trace) trace.push_back(record_to_json(r));
    Json j = {{"mode", to_string(cell.mode)},
              {"counterexamples", cell.counterexamples},
              {"max_accuracy", cell.max_accuracy},
              {"max_explanation_score", nullptr},
              {"baseline", metrics_to_json(cell.baseline)},
              {"outcomes", cell.outcomes},
              {"exhausted", cell.exhausted},
              {"labeled_size", cell.labeled_size},
              {"base_labeled", cell.base_labeled},
              {"trace", trace}};
    if (cell.max_explanation_score) j["max_explanation_score"] = *cell.max_explanation_score;
    cells.push_back(std::move(j));
  }
  return {{"schema_version", kResultsSchemaVersion},
          {"dataset", result.dataset},
          {"class_names", result.class_names},
          {"cells", cells}};
}

BaselineResult train_baseline(const Dataset& dataset, std::size_t n_train, std::size_t n_test,
                              const ModelConfig& model, std::uint64_t seed) {
  SplitOptions split;
  split.seed = seed;
  split.l0_size = n_train;
  split.test_size = n_test;
  const Pools pools = split_pools(dataset, split);
  const ConvNet net = fit(pools.labeled, model);
  BaselineResult r;
  r.accuracy = accuracy(net, pools.test);
  r.n_train = pools.labeled.size();
  r.n_test = pools.test.size();
  r.train_log = net.train_log();
  return r;
}

LabelingEffort labeling_effort(std::size_t caipi_base_labels, std::size_t caipi_counterexamples,
                               std::size_t baseline_labels) {
  if (baseline_labels == 0) throw InvalidArgument("labeling_effort: baseline_labels must be > 0");
  LabelingEffort e;
  e.caipi_base_labels = caipi_base_labels;
  e.caipi_counterexamples = caipi_counterexamples;
  e.baseline_labels = baseline_labels;
  const double b = static_cast<double>(baseline_labels);
  e.label_reduction_percent = 100.0 * (1.0 - static_cast<double>(caipi_base_labels) / b);
  e.instance_reduction_percent =
      100.0 * (1.0 - static_cast<double>(caipi_base_labels + caipi_counterexamples) / b);
  return e;
}

}  // namespace caipi
