#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "caipi/augment.hpp"
#include "caipi/classifier.hpp"
#include "caipi/dataset.hpp"
#include "caipi/engine.hpp"
#include "caipi/explainer.hpp"
#include "caipi/segmentation.hpp"

namespace caipi {

using Json = nlohmann::json;

/// Environment variable that overrides where relative dataset paths are resolved.
inline constexpr const char* kDataDirEnv = "CAIPI_DATA_DIR";

struct DatasetSource {
  /// Free-form label used in reports ("fashion", "medical", ...).
  std::string name = "fashion";
  /// idx | image_folder | cache | synthetic
  std::string format = "idx";
  std::filesystem::path path;
  std::pair<std::string, std::string> classes{"T-shirt/top", "Pullover"};
  int canonical_size = 64;
  /// synthetic only
  std::size_t synthetic_per_class = 500;
  std::uint64_t synthetic_seed = 0;
};

/// Resolves a relative source path against $CAIPI_DATA_DIR when set, else `base_dir`.
std::filesystem::path resolve_data_path(const std::filesystem::path& path,
                                        const std::filesystem::path& base_dir);
Dataset load_dataset(const DatasetSource& source);

struct ExperimentConfig {
  DatasetSource dataset;
  SplitOptions pools;
  std::vector<Mode> modes{Mode::rwr_only, Mode::rwr_plus_w};
  std::vector<int> counterexamples{0, 1, 3, 5};
  /// Per-cell template; mode and counterexamples are overridden by the grid.
  SessionConfig session;
  double oracle_iou_threshold = 0.3;
  /// Explanation score is evaluated every this many iterations (0 disables).
  int explanation_every = 1;
  int explanation_top_k = 5;
  std::size_t baseline_train = 9800;
  std::size_t baseline_test = 4200;
};

/// Every key is optional; unknown keys are rejected so typos cannot silently fall back
/// to defaults.
ModelConfig model_config_from_json(const Json& j);
Json config_to_json(const ModelConfig& c);
ExplainerConfig explainer_config_from_json(const Json& j);
Json config_to_json(const ExplainerConfig& c);
QuickShiftParams quick_shift_params_from_json(const Json& j);
Json config_to_json(const QuickShiftParams& c);
AugmentParams augment_params_from_json(const Json& j);
Json config_to_json(const AugmentParams& c);
SplitOptions split_options_from_json(const Json& j);
Json config_to_json(const SplitOptions& c);
DatasetSource dataset_source_from_json(const Json& j);
Json config_to_json(const DatasetSource& c);
/// Session fields plus nested explainer/segmentation/model/augment objects.
SessionConfig session_config_from_json(const Json& j);
Json config_to_json(const SessionConfig& c);

/// Layout: {"dataset", "pools", "grid": {"modes", "counterexamples"}, "session",
/// "explainer", "segmentation", "model", "augment", "oracle": {"iou_threshold"},
/// "evaluation": {"explanation_every", "top_k"}, "baseline": {"n_train", "n_test"}}.
ExperimentConfig experiment_config_from_json(const Json& j);
/// Fully resolved configuration (every default written out).
Json config_to_json(const ExperimentConfig& c);
/// Reads a JSON file; relative dataset paths are resolved against its directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

Json record_to_json(const IterationRecord& record);
Json metrics_to_json(const IterationMetrics& metrics);
Json transform_to_json(const TransformRecord& record);

}  // namespace caipi
