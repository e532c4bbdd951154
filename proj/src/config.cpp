#include "caipi/config.hpp"

#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>

#include "caipi/error.hpp"

namespace caipi {
namespace {

/// Reads optional fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidArgument(where_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    T value{};
    seen_.insert(key);
    if (!j_.contains(key) || j_[key].is_null()) return;
    get(key, value);
    out = value;
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InvalidArgument(where_ + "." + key + ": wrong type");
    }
  }

  const Json* object(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw InvalidArgument(where_ + ": unknown key \"" + key + "\"");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  Fields f(j, "model");
  f.get("input_size", c.input_size);
  f.get("conv_filters", c.conv_filters);
  f.get("conv_kernel", c.conv_kernel);
  f.get("conv_stride", c.conv_stride);
  f.get("pool_kernel", c.pool_kernel);
  f.get("pool_stride", c.pool_stride);
  f.get("hidden", c.hidden);
  f.get("dropout", c.dropout);
  f.get("hidden2", c.hidden2);
  f.get("epochs", c.epochs);
  f.get("batch_size", c.batch_size);
  f.get("learning_rate", c.learning_rate);
  f.get("beta1", c.beta1);
  f.get("beta2", c.beta2);
  f.get("epsilon", c.epsilon);
  f.get("seed", c.seed);
  f.get("zero_init_output", c.zero_init_output);
  f.finish();
  return c;
}

Json config_to_json(const ModelConfig& c) {
  return {{"input_size", c.input_size},   {"conv_filters", c.conv_filters},
          {"conv_kernel", c.conv_kernel}, {"conv_stride", c.conv_stride},
          {"pool_kernel", c.pool_kernel}, {"pool_stride", c.pool_stride},
          {"hidden", c.hidden},           {"dropout", c.dropout},
          {"hidden2", c.hidden2},         {"epochs", c.epochs},
          {"batch_size", c.batch_size},   {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},             {"beta2", c.beta2},
          {"epsilon", c.epsilon},         {"seed", c.seed},
          {"zero_init_output", c.zero_init_output}};
}

ExplainerConfig explainer_config_from_json(const Json& j) {
  ExplainerConfig c;
  Fields f(j, "explainer");
  f.get("n_samples", c.n_samples);
  f.get("max_features", c.max_features);
  f.get("kernel_width", c.kernel_width);
  f.get("fill", c.fill);
  f.get("seed", c.seed);
  f.finish();
  return c;
}

Json config_to_json(const ExplainerConfig& c) {
  return {{"n_samples", c.n_samples},
          {"max_features", c.max_features},
          {"kernel_width", c.kernel_width},
          {"fill", c.fill},
          {"seed", c.seed}};
}

QuickShiftParams quick_shift_params_from_json(const Json& j) {
  QuickShiftParams c;
  Fields f(j, "segmentation");
  f.get("kernel_size", c.kernel_size);
  f.get("max_dist", c.max_dist);
  f.get("ratio", c.ratio);
  f.get("seed", c.seed);
  f.finish();
  return c;
}

Json config_to_json(const QuickShiftParams& c) {
  return {{"kernel_size", c.kernel_size},
          {"max_dist", c.max_dist},
          {"ratio", c.ratio},
          {"seed", c.seed}};
}

AugmentParams augment_params_from_json(const Json& j) {
  AugmentParams c;
  Fields f(j, "augment");
  f.get("scale_min", c.scale_min);
  f.get("scale_max", c.scale_max);
  f.get("rotation_min_deg", c.rotation_min_deg);
  f.get("rotation_max_deg", c.rotation_max_deg);
  f.get("fill", c.fill);
  f.get("max_attempts", c.max_attempts);
  f.get("seed", c.seed);
  f.finish();
  return c;
}

Json config_to_json(const AugmentParams& c) {
  return {{"scale_min", c.scale_min},
          {"scale_max", c.scale_max},
          {"rotation_min_deg", c.rotation_min_deg},
          {"rotation_max_deg", c.rotation_max_deg},
          {"fill", c.fill},
          {"max_attempts", c.max_attempts},
          {"seed", c.seed}};
}

SplitOptions split_options_from_json(const Json& j) {
  SplitOptions c;
  Fields f(j, "pools");
  f.get("seed", c.seed);
  f.get("l0_size", c.l0_size);
  f.get("test_size", c.test_size);
  f.get("expl_test_size", c.expl_test_size);
  f.get("balance", c.balance);
  f.get("mask_threshold", c.mask_threshold);
  f.finish();
  return c;
}

Json config_to_json(const SplitOptions& c) {
  return {{"seed", c.seed},
          {"l0_size", c.l0_size},
          {"test_size", c.test_size},
          {"expl_test_size", c.expl_test_size},
          {"balance", c.balance},
          {"mask_threshold", c.mask_threshold}};
}

DatasetSource dataset_source_from_json(const Json& j) {
  DatasetSource c;
  Fields f(j, "dataset");
  std::string path;
  std::vector<std::string> classes;
  f.get("name", c.name);
  f.get("format", c.format);
  f.get("path", path);
  f.get("classes", classes);
  f.get("canonical_size", c.canonical_size);
  f.get("synthetic_per_class", c.synthetic_per_class);
  f.get("synthetic_seed", c.synthetic_seed);
  f.finish();
  if (!path.empty()) c.path = path;
  if (!classes.empty()) {
    if (classes.size() != 2) throw InvalidArgument("dataset.classes: expected two class names");
    c.classes = {classes[0], classes[1]};
  }
  if (c.format != "synthetic") parse_dataset_format(c.format);
  return c;
}

Json config_to_json(const DatasetSource& c) {
  Json j = {{"name", c.name},
            {"format", c.format},
            {"path", c.path.string()},
            {"classes", {c.classes.first, c.classes.second}},
            {"canonical_size", c.canonical_size}};
  if (c.format == "synthetic") {
    j["synthetic_per_class"] = c.synthetic_per_class;
    j["synthetic_seed"] = c.synthetic_seed;
  }
  return j;
}

SessionConfig session_config_from_json(const Json& j) {
  SessionConfig c;
  Fields f(j, "session");
  std::string mode;
  f.get("budget", c.budget);
  f.get("counterexamples", c.counterexamples);
  f.get("mode", mode);
  f.get("explanation_top_k", c.explanation_top_k);
  f.get("stop_accuracy", c.stop_accuracy);
  f.get("seed", c.seed);
  if (const Json* e = f.object("explainer")) c.explainer = explainer_config_from_json(*e);
  if (const Json* s = f.object("segmentation")) c.segmentation = quick_shift_params_from_json(*s);
  if (const Json* m = f.object("model")) c.model = model_config_from_json(*m);
  if (const Json* a = f.object("augment")) c.augment = augment_params_from_json(*a);
  f.finish();
  if (!mode.empty()) c.mode = parse_mode(mode);
  validate(c);
  return c;
}

Json config_to_json(const SessionConfig& c) {
  Json j = {{"budget", c.budget},
            {"counterexamples", c.counterexamples},
            {"mode", to_string(c.mode)},
            {"explanation_top_k", c.explanation_top_k},
            {"stop_accuracy", nullptr},
            {"seed", c.seed},
            {"explainer", config_to_json(c.explainer)},
            {"segmentation", config_to_json(c.segmentation)},
            {"model", config_to_json(c.model)},
            {"augment", config_to_json(c.augment)}};
  if (c.stop_accuracy) j["stop_accuracy"] = *c.stop_accuracy;
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig c;
  Fields f(j, "experiment");
  if (const Json* d = f.object("dataset")) c.dataset = dataset_source_from_json(*d);
  if (const Json* p = f.object("pools")) c.pools = split_options_from_json(*p);
  if (const Json* g = f.object("grid")) {
    Fields gf(*g, "grid");
    std::vector<std::string> modes;
    gf.get("modes", modes);
    gf.get("counterexamples", c.counterexamples);
    gf.finish();
    if (!modes.empty()) {
      c.modes.clear();
      for (const auto& m : modes) c.modes.push_back(parse_mode(m));
    }
  }
  // Session keys plus the component sections, which may also sit at the top level.
  Json session = Json::object();
  if (const Json* s = f.object("session")) session = *s;
  for (const char* key : {"explainer", "segmentation", "model", "augment"}) {
    if (const Json* o = f.object(key)) {
      if (session.contains(key)) {
        throw InvalidArgument(std::string("experiment: ") + key + " given twice");
      }
      session[key] = *o;
    }
  }
  c.session = session_config_from_json(session);
  if (const Json* o = f.object("oracle")) {
    Fields of(*o, "oracle");
    of.get("iou_threshold", c.oracle_iou_threshold);
    of.finish();
  }
  if (const Json* e = f.object("evaluation")) {
    Fields ef(*e, "evaluation");
    ef.get("explanation_every", c.explanation_every);
    ef.get("top_k", c.explanation_top_k);
    ef.finish();
  }
  if (const Json* b = f.object("baseline")) {
    Fields bf(*b, "baseline");
    bf.get("n_train", c.baseline_train);
    bf.get("n_test", c.baseline_test);
    bf.finish();
  }
  f.finish();

  if (c.modes.empty()) throw InvalidArgument("grid.modes: at least one mode");
  if (c.counterexamples.empty()) throw InvalidArgument("grid.counterexamples: at least one value");
  for (const int n : c.counterexamples) {
    if (n < 0) throw InvalidArgument("grid.counterexamples: values must be >= 0");
  }
  if (!(c.oracle_iou_threshold >= 0.0 && c.oracle_iou_threshold <= 1.0)) {
    throw InvalidArgument("oracle.iou_threshold must lie in [0, 1]");
  }
  if (c.explanation_every < 0) throw InvalidArgument("evaluation.explanation_every must be >= 0");
  if (c.explanation_top_k < 1) throw InvalidArgument("evaluation.top_k must be >= 1");
  return c;
}

Json config_to_json(const ExperimentConfig& c) {
  Json modes = Json::array();
  for (const Mode m : c.modes) modes.push_back(to_string(m));
  return {{"dataset", config_to_json(c.dataset)},
          {"pools", config_to_json(c.pools)},
          {"grid", {{"modes", modes}, {"counterexamples", c.counterexamples}}},
          {"session", config_to_json(c.session)},
          {"oracle", {{"iou_threshold", c.oracle_iou_threshold}}},
          {"evaluation", {{"explanation_every", c.explanation_every}, {"top_k", c.explanation_top_k}}},
          {"baseline", {{"n_train", c.baseline_train}, {"n_test", c.baseline_test}}}};
}

std::filesystem::path resolve_data_path(const std::filesystem::path& path,
                                        const std::filesystem::path& base_dir) {
  if (path.empty() || path.is_absolute()) return path;
  if (const char* env = std::getenv(kDataDirEnv); env && *env) {
    return std::filesystem::path(env) / path;
  }
  return base_dir / path;
}

Dataset load_dataset(const DatasetSource& source) {
  if (source.format == "synthetic") {
    return make_synthetic_dataset(source.synthetic_per_class, source.canonical_size,
                                  source.synthetic_seed);
  }
  if (source.path.empty()) throw InvalidArgument("dataset.path is required for " + source.format);
  LoadOptions options;
  options.canonical_size = source.canonical_size;
  return load_dataset(source.path, parse_dataset_format(source.format), source.classes, options);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  ExperimentConfig c = experiment_config_from_json(j);
  c.dataset.path = resolve_data_path(c.dataset.path, path.parent_path());
  return c;
}

Json metrics_to_json(const IterationMetrics& m) {
  Json j = {{"accuracy", nullptr}, {"explanation_score", nullptr}};
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  if (m.explanation_score) j["explanation_score"] = *m.explanation_score;
  return j;
}

Json transform_to_json(const TransformRecord& r) {
  return {{"scale", r.spec.scale},
          {"rotation_deg", r.spec.rotation_deg},
          {"translate_x", r.spec.translate_x},
          {"translate_y", r.spec.translate_y},
          {"center_x", r.center_x},
          {"center_y", r.center_y},
          {"attempts", r.attempts}};
}

Json record_to_json(const IterationRecord& r) {
  Json transforms = Json::array();
  for (const auto& t : r.transforms) transforms.push_back(transform_to_json(t));
  return {{"iteration", r.iteration},
          {"instance_id", r.instance_id},
          {"outcome", to_string(r.outcome)},
          {"label", r.label},
          {"predicted", r.predicted},
          {"counterexamples", r.counterexamples},
          {"labeled_size", r.labeled_size},
          {"unlabeled_size", r.unlabeled_size},
          {"metrics", metrics_to_json(r.metrics)},
          {"transforms", transforms}};
}

}  // namespace caipi
