#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "caipi/image.hpp"

namespace caipi {

enum class DatasetFormat { idx, image_folder, cache };

DatasetFormat parse_dataset_format(const std::string& name);
std::string to_string(DatasetFormat format);

/// Binary dataset: labels are 0/1, assigned alphabetically (case-insensitive) over the
/// two class names. Every image's `source_class` holds its label.
struct Dataset {
  std::array<std::string, 2> class_names;
  std::vector<Image> images;

  std::size_t size() const { return images.size(); }
  Label label(std::size_t i) const { return *images[i].source_class; }
  std::size_t count(Label label) const;
};

struct LoadOptions {
  /// Every image is bilinearly resized to canonical_size x canonical_size.
  int canonical_size = 64;
};

/// Class names of the Fashion-MNIST label indices 0..9.
const std::array<std::string, 10>& fashion_mnist_classes();

/// Loads the two requested classes.
///  - idx: `path` is a directory holding `<prefix>-images-idx3-ubyte[.gz]` and matching
///    `<prefix>-labels-idx1-ubyte[.gz]` files (train before t10k); class names from
///    fashion_mnist_classes() or decimal label indices.
///  - image_folder: `path/<class name>/*` 8-bit images (PNG or JPEG), files in name order.
///  - cache: a file written by write_dataset_cache; empty class names accept the stored pair.
/// Instance ids are positions in the source order.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const std::pair<std::string, std::string>& classes,
                     const LoadOptions& options = {});

/// Normalized binary cache: "CAIPIDS\0", u32 version, u32 n, u32 h, u32 w, the two class
/// names (u32 length + bytes), then per instance i64 id, u8 label, h*w float32. Little endian.
void write_dataset_cache(const Dataset& dataset, const std::filesystem::path& path);
inline constexpr std::uint32_t kDatasetCacheVersion = 1;

/// Two-class toy dataset ("disc" vs "square") of bright shapes on a dark background.
/// Used for demos and tests where the real datasets are not present.
Dataset make_synthetic_dataset(std::size_t per_class, int size, std::uint64_t seed);

struct GroundTruthMask {
  Mask mask;
  InstanceId instance_id = 0;
};

/// mask[p] = 1 iff pixels[p] > threshold.
GroundTruthMask derive_ground_truth_mask(const Image& image, float threshold);

struct ExplanationTestItem {
  Image image;
  Label label = 0;
  GroundTruthMask truth;
};

struct Pools {
  std::vector<LabeledImage> labeled;
  /// True labels stay attached through Image::source_class for the simulated oracle.
  std::vector<Image> unlabeled;
  std::vector<LabeledImage> test;
  std::vector<ExplanationTestItem> expl_test;
};

struct SplitOptions {
  std::uint64_t seed = 0;
  std::size_t l0_size = 100;
  std::size_t test_size = 0;
  std::size_t expl_test_size = 0;
  bool balance = true;
  float mask_threshold = 0.1f;
};

/// Seeded split into disjoint pools. With balance, labeled/test/expl_test carry exactly
/// size/2 instances per class; everything left over becomes the unlabeled pool.
/// Pools are sorted by instance id.
Pools split_pools(const Dataset& dataset, const SplitOptions& options);

}  // namespace caipi
