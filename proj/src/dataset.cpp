#include "caipi/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "caipi/error.hpp"
#include "caipi/image_io.hpp"
#include "caipi/rng.hpp"

namespace caipi {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "cache format assumes little endian");

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t offset,
                        const std::string& name) {
  if (offset + 4 > b.size()) throw DecodeError(name + ": truncated IDX header");
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

/// Returns labels 0/1 for the two names in alphabetical order plus the sorted names.
std::array<std::string, 2> sorted_pair(const std::string& a, const std::string& b) {
  if (lower(a) == lower(b)) throw InvalidArgument("the two classes must differ: " + a);
  return lower(a) < lower(b) ? std::array{a, b} : std::array{b, a};
}

void finish(Dataset& dataset, const fs::path& path) {
  if (dataset.images.empty()) throw Error("no instances found in " + path.string());
}

Image normalize(Image image, const LoadOptions& options) {
  if (image.height != options.canonical_size || image.width != options.canonical_size) {
    Image resized = resize_bilinear(image, options.canonical_size, options.canonical_size);
    resized.id = image.id;
    resized.source_class = image.source_class;
    image = std::move(resized);
  }
  for (float& v : image.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return image;
}

// --- IDX -------------------------------------------------------------------

int resolve_fashion_class(const std::string& name) {
  const auto& names = fashion_mnist_classes();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (lower(names[i]) == lower(name)) return static_cast<int>(i);
  }
  if (!name.empty() && std::all_of(name.begin(), name.end(), ::isdigit) && name.size() < 3) {
    const int index = std::stoi(name);
    if (index < 10) return index;
  }
  throw InvalidArgument("unknown class name: " + name);
}

struct IdxPair {
  fs::path images;
  fs::path labels;
};

std::vector<IdxPair> discover_idx(const fs::path& dir) {
  std::map<std::string, fs::path> image_files;
  std::map<std::string, fs::path> label_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    for (const auto& [marker, target] :
         {std::pair{std::string("-images-idx3-ubyte"), &image_files},
          std::pair{std::string("-labels-idx1-ubyte"), &label_files}}) {
      const auto pos = name.find(marker);
      const std::string rest = pos == std::string::npos ? "" : name.substr(pos + marker.size());
      if (pos != std::string::npos && (rest.empty() || rest == ".gz")) {
        (*target)[name.substr(0, pos)] = entry.path();
      }
    }
  }
  std::vector<std::string> prefixes;
  for (const auto& [prefix, _] : image_files) {
    if (!label_files.contains(prefix)) {
      throw DecodeError(image_files[prefix].string() + ": no matching labels file");
    }
    prefixes.push_back(prefix);
  }
  auto rank = [](const std::string& p) { return p == "train" ? 0 : p == "t10k" ? 1 : 2; };
  std::stable_sort(prefixes.begin(), prefixes.end(), [&](const auto& a, const auto& b) {
    return rank(a) != rank(b) ? rank(a) < rank(b) : a < b;
  });
  std::vector<IdxPair> pairs;
  for (const auto& p : prefixes) pairs.push_back({image_files[p], label_files[p]});
  return pairs;
}

Dataset load_idx(const fs::path& dir, const std::pair<std::string, std::string>& classes,
                 const LoadOptions& options) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  const int first = resolve_fashion_class(classes.first);
  const int second = resolve_fashion_class(classes.second);
  const auto& names = fashion_mnist_classes();
  Dataset dataset;
  dataset.class_names = sorted_pair(names[first], names[second]);
  const int raw_for_label0 = dataset.class_names[0] == names[first] ? first : second;
  const int raw_for_label1 = raw_for_label0 == first ? second : first;

  InstanceId next_id = 0;
  for (const auto& pair : discover_idx(dir)) {
    const auto image_bytes = read_file_bytes(pair.images);
    const auto label_bytes = read_file_bytes(pair.labels);
    const std::string image_name = pair.images.string();
    const std::string label_name = pair.labels.string();
    if (read_be32(image_bytes, 0, image_name) != 0x00000803) {
      throw DecodeError(image_name + ": bad IDX image magic");
    }
    if (read_be32(label_bytes, 0, label_name) != 0x00000801) {
      throw DecodeError(label_name + ": bad IDX label magic");
    }
    const std::uint32_t n = read_be32(image_bytes, 4, image_name);
    const int rows = static_cast<int>(read_be32(image_bytes, 8, image_name));
    const int cols = static_cast<int>(read_be32(image_bytes, 12, image_name));
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (read_be32(label_bytes, 4, label_name) != n) {
      throw DecodeError(label_name + ": label count does not match " + image_name);
    }
    if (image_bytes.size() < 16 + n * pixels) throw DecodeError(image_name + ": truncated");
    if (label_bytes.size() < 8 + n) throw DecodeError(label_name + ": truncated");
    for (std::uint32_t i = 0; i < n; ++i, ++next_id) {
      const int raw = label_bytes[8 + i];
      if (raw != raw_for_label0 && raw != raw_for_label1) continue;
      Image image(rows, cols, 0.0f, next_id);
      const std::uint8_t* src = image_bytes.data() + 16 + i * pixels;
      for (std::size_t p = 0; p < pixels; ++p) image.pixels[p] = src[p] / 255.0f;
      image.source_class = raw == raw_for_label0 ? 0 : 1;
      dataset.images.push_back(normalize(std::move(image), options));
    }
  }
  finish(dataset, dir);
  return dataset;
}

// --- image folder ----------------------------------------------------------

Dataset load_folder(const fs::path& dir, const std::pair<std::string, std::string>& classes,
                    const LoadOptions& options) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  Dataset dataset;
  dataset.class_names = sorted_pair(classes.first, classes.second);
  InstanceId next_id = 0;
  for (Label label = 0; label < 2; ++label) {
    const fs::path class_dir = dir / dataset.class_names[label];
    if (!fs::is_directory(class_dir)) {
      throw InvalidArgument("unknown class name: " + dataset.class_names[label] + " (no " +
                            class_dir.string() + ")");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      Image image = to_image(decode_image_file(file));
      image.id = next_id++;
      image.source_class = label;
      dataset.images.push_back(normalize(std::move(image), options));
    }
  }
  finish(dataset, dir);
  return dataset;
}

// --- cache -----------------------------------------------------------------

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& name) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw DecodeError(name + ": truncated dataset cache");
  }
  return value;
}

constexpr char kCacheMagic[8] = {'C', 'A', 'I', 'P', 'I', 'D', 'S', '\0'};

Dataset load_cache(const fs::path& path, const std::pair<std::string, std::string>& classes,
                   const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string name = path.string();
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0) {
    throw DecodeError(name + ": not a dataset cache");
  }
  if (const auto version = get<std::uint32_t>(in, name); version != kDatasetCacheVersion) {
    throw DecodeError(name + ": unsupported cache version " + std::to_string(version));
  }
  const auto n = get<std::uint32_t>(in, name);
  const auto h = static_cast<int>(get<std::uint32_t>(in, name));
  const auto w = static_cast<int>(get<std::uint32_t>(in, name));
  Dataset dataset;
  for (auto& class_name : dataset.class_names) {
    const auto len = get<std::uint32_t>(in, name);
    if (len > 4096) throw DecodeError(name + ": corrupt class name");
    class_name.resize(len);
    if (!in.read(class_name.data(), len)) throw DecodeError(name + ": truncated dataset cache");
  }
  if (!classes.first.empty() || !classes.second.empty()) {
    const auto wanted = sorted_pair(classes.first, classes.second);
    for (int i = 0; i < 2; ++i) {
      if (lower(wanted[i]) != lower(dataset.class_names[i])) {
        throw InvalidArgument("unknown class name: " + wanted[i] + " (cache holds " +
                              dataset.class_names[0] + ", " + dataset.class_names[1] + ")");
      }
    }
  }
  dataset.images.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Image image(h, w, 0.0f, get<std::int64_t>(in, name));
    const auto label = get<std::uint8_t>(in, name);
    if (label > 1) throw DecodeError(name + ": corrupt label");
    image.source_class = label;
    if (!in.read(reinterpret_cast<char*>(image.pixels.data()),
                 static_cast<std::streamsize>(image.size() * sizeof(float)))) {
      throw DecodeError(name + ": truncated dataset cache");
    }
    dataset.images.push_back(normalize(std::move(image), options));
  }
  finish(dataset, path);
  return dataset;
}

}  // namespace

DatasetFormat parse_dataset_format(const std::string& name) {
  if (name == "idx") return DatasetFormat::idx;
  if (name == "image_folder") return DatasetFormat::image_folder;
  if (name == "cache") return DatasetFormat::cache;
  throw InvalidArgument("unknown dataset format: " + name);
}

std::string to_string(DatasetFormat format) {
  switch (format) {
    case DatasetFormat::idx: return "idx";
    case DatasetFormat::image_folder: return "image_folder";
    case DatasetFormat::cache: return "cache";
  }
  return "?";
}

std::size_t Dataset::count(Label label) const {
  return static_cast<std::size_t>(std::count_if(
      images.begin(), images.end(), [&](const Image& im) { return im.source_class == label; }));
}

const std::array<std::string, 10>& fashion_mnist_classes() {
  static const std::array<std::string, 10> names = {
      "T-shirt/top", "Trouser", "Pullover", "Dress", "Coat",
      "Sandal",      "Shirt",   "Sneaker",  "Bag",   "Ankle boot"};
  return names;
}

Dataset load_dataset(const fs::path& path, DatasetFormat format,
                     const std::pair<std::string, std::string>& classes,
                     const LoadOptions& options) {
  if (!fs::exists(path)) throw Error("missing path: " + path.string());
  if (options.canonical_size <= 0) throw InvalidArgument("canonical_size must be positive");
  switch (format) {
    case DatasetFormat::idx: return load_idx(path, classes, options);
    case DatasetFormat::image_folder: return load_folder(path, classes, options);
    case DatasetFormat::cache: return load_cache(path, classes, options);
  }
  throw InvalidArgument("unknown dataset format");
}

void write_dataset_cache(const Dataset& dataset, const fs::path& path) {
  if (dataset.images.empty()) throw InvalidArgument("write_dataset_cache: empty dataset");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const Image& first = dataset.images.front();
  out.write(kCacheMagic, 8);
  put<std::uint32_t>(out, kDatasetCacheVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(first.height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(first.width));
  for (const auto& name : dataset.class_names) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  for (const Image& image : dataset.images) {
    if (!image.same_shape(first)) throw InvalidArgument("write_dataset_cache: mixed sizes");
    put<std::int64_t>(out, image.id);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(image.source_class.value_or(0)));
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.size() * sizeof(float)));
  }
  if (!out) throw Error("write failed: " + path.string());
}

Dataset make_synthetic_dataset(std::size_t per_class, int size, std::uint64_t seed) {
  if (size < 16) throw InvalidArgument("synthetic images need size >= 16");
  Rng rng(seed);
  Dataset dataset;
  dataset.class_names = {"disc", "square"};
  const double half = size / 2.0;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const Label label = static_cast<Label>(i % 2);
    Image image(size, size, 0.0f, static_cast<InstanceId>(i));
    image.source_class = label;
    const double extent = rng.uniform(size * 0.15, size * 0.25);
    const double cy = half + rng.uniform(-size * 0.12, size * 0.12);
    const double cx = half + rng.uniform(-size * 0.12, size * 0.12);
    const float level = static_cast<float>(rng.uniform(0.6, 1.0));
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const double dy = r + 0.5 - cy;
        const double dx = c + 0.5 - cx;
        const bool inside = label == 0 ? dy * dy + dx * dx <= extent * extent
                                       : std::abs(dy) <= extent && std::abs(dx) <= extent;
        const float noise = static_cast<float>(rng.uniform(0.0, 0.05));
        image.at(r, c) = inside ? level - noise : noise;
      }
    }
    dataset.images.push_back(std::move(image));
  }
  return dataset;
}

GroundTruthMask derive_ground_truth_mask(const Image& image, float threshold) {
  GroundTruthMask truth{Mask(image.height, image.width), image.id};
  for (std::size_t i = 0; i < image.size(); ++i) {
    truth.mask.bits[i] = image.pixels[i] > threshold ? 1 : 0;
  }
  return truth;
}

Pools split_pools(const Dataset& dataset, const SplitOptions& options) {
  const std::size_t total = options.l0_size + options.test_size + options.expl_test_size;
  if (options.balance &&
      (options.l0_size % 2 || options.test_size % 2 || options.expl_test_size % 2)) {
    throw InvalidArgument("split_pools: balanced pool sizes must be even");
  }
  if (total > dataset.size()) {
    throw InvalidArgument("split_pools: insufficient instances (" + std::to_string(total) +
                          " requested, " + std::to_string(dataset.size()) + " available)");
  }
  Rng rng(options.seed);
  std::vector<std::vector<std::size_t>> order;
  if (options.balance) {
    order.resize(2);
    for (std::size_t i = 0; i < dataset.size(); ++i) order[dataset.label(i)].push_back(i);
    for (auto& per_class : order) {
      if (per_class.size() < total / 2) {
        throw InvalidArgument("split_pools: insufficient instances of one class for balance");
      }
      rng.shuffle(std::span(per_class));
    }
  } else {
    order.resize(1);
    for (std::size_t i = 0; i < dataset.size(); ++i) order[0].push_back(i);
    rng.shuffle(std::span(order[0]));
  }

  // Consecutive slices of each (per-class) permutation form the pools.
  std::vector<std::size_t> cursor(order.size(), 0);
  auto take = [&](std::size_t count) {
    std::vector<std::size_t> picked;
    const std::size_t per = count / order.size();
    for (std::size_t k = 0; k < order.size(); ++k) {
      for (std::size_t j = 0; j < per; ++j) picked.push_back(order[k][cursor[k]++]);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
  };

  Pools pools;
  for (std::size_t i : take(options.l0_size)) {
    pools.labeled.push_back({dataset.images[i], dataset.label(i), false});
  }
  for (std::size_t i : take(options.test_size)) {
    pools.test.push_back({dataset.images[i], dataset.label(i), false});
  }
  for (std::size_t i : take(options.expl_test_size)) {
    pools.expl_test.push_back({dataset.images[i], dataset.label(i),
                               derive_ground_truth_mask(dataset.images[i], options.mask_threshold)});
  }
  std::vector<std::size_t> rest;
  for (std::size_t k = 0; k < order.size(); ++k) {
    rest.insert(rest.end(), order[k].begin() + static_cast<std::ptrdiff_t>(cursor[k]),
                order[k].end());
  }
  std::sort(rest.begin(), rest.end());
  pools.unlabeled.reserve(rest.size());
  for (std::size_t i : rest) pools.unlabeled.push_back(dataset.images[i]);
  return pools;
}

}  // namespace caipi
