#include "caipi/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "caipi/config.hpp"
#include "caipi/error.hpp"
#include "caipi/rng.hpp"

namespace caipi {

Probabilities ProbabilisticClassifier::predict_proba(const Image& image) const {
  return predict_proba(std::span<const Image>(&image, 1)).front();
}

double prediction_score(const ProbabilisticClassifier& model, const Image& image) {
  return prediction_score(model.predict_proba(image));
}

void validate(const ModelConfig& c) {
  if (c.input_size <= 0 || c.conv_filters <= 0 || c.conv_kernel <= 0 || c.conv_stride <= 0 ||
      c.pool_kernel <= 0 || c.pool_stride <= 0 || c.hidden <= 0 || c.hidden2 <= 0) {
    throw InvalidArgument("model config: layer sizes must be positive");
  }
  if (c.conv_kernel > c.input_size || c.pool_kernel > c.conv_out()) {
    throw InvalidArgument("model config: kernels larger than their inputs");
  }
  if (!(c.dropout >= 0 && c.dropout < 1)) throw InvalidArgument("model config: dropout in [0,1)");
  if (c.epochs < 0 || c.batch_size <= 0 || !(c.learning_rate > 0)) {
    throw InvalidArgument("model config: invalid training schedule");
  }
}

/// Offsets of each parameter block inside params_.
struct ConvNet::Layers {
  int filters, kernel, stride, in, conv, pool_k, pool_s, pool, features, hidden, hidden2;
  std::size_t conv_w, conv_b, w1, b1, w2, b2, w3, b3, total;

  explicit Layers(const ModelConfig& c)
      : filters(c.conv_filters),
        kernel(c.conv_kernel),
        stride(c.conv_stride),
        in(c.input_size),
        conv(c.conv_out()),
        pool_k(c.pool_kernel),
        pool_s(c.pool_stride),
        pool(c.pool_out()),
        features(c.feature_count()),
        hidden(c.hidden),
        hidden2(c.hidden2) {
    std::size_t at = 0;
    auto block = [&](std::size_t n) { const std::size_t start = at; at += n; return start; };
    conv_w = block(static_cast<std::size_t>(filters) * kernel * kernel);
    conv_b = block(filters);
    w1 = block(static_cast<std::size_t>(hidden) * features);
    b1 = block(hidden);
    w2 = block(static_cast<std::size_t>(hidden2) * hidden);
    b2 = block(hidden2);
    w3 = block(static_cast<std::size_t>(2) * hidden2);
    b3 = block(2);
    total = at;
  }
};

struct ConvNet::Workspace {
  std::vector<float> conv;       // one filter's response map
  std::vector<float> pooled;     // post-ReLU pooled features
  std::vector<int> argmax;       // conv-map index feeding each pooled feature
  std::vector<float> h1;         // post-ReLU, pre-dropout
  std::vector<float> h1_out;     // post-dropout
  std::vector<float> h2;
  double probs[2] = {0.5, 0.5};

  explicit Workspace(const Layers& L)
      : conv(static_cast<std::size_t>(L.conv) * L.conv),
        pooled(L.features),
        argmax(L.features),
        h1(L.hidden),
        h1_out(L.hidden),
        h2(L.hidden2) {}
};

struct ConvNet::Gradients {
  std::vector<float> values;
  std::vector<float> dx, dh1, dh2;
};

ConvNet::ConvNet(const ModelConfig& config) : config_(config) {
  validate(config_);
  const Layers L(config_);
  params_.assign(L.total, 0.0f);
  Rng rng(config_.seed);
  auto init = [&](std::size_t offset, std::size_t count, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) {
      params_[offset + i] = static_cast<float>(rng.uniform(-bound, bound));
    }
  };
  const int conv_fan_in = L.kernel * L.kernel;
  init(L.conv_w, L.conv_b - L.conv_w, conv_fan_in);
  init(L.conv_b, L.filters, conv_fan_in);
  init(L.w1, L.b1 - L.w1, L.features);
  init(L.b1, L.hidden, L.features);
  init(L.w2, L.b2 - L.w2, L.hidden);
  init(L.b2, L.hidden2, L.hidden);
  if (!config_.zero_init_output) {
    init(L.w3, L.b3 - L.w3, L.hidden2);
    init(L.b3, 2, L.hidden2);
  }
}

std::size_t ConvNet::parameter_count() const { return params_.size(); }

void ConvNet::forward(const float* input, Workspace& ws, const std::uint8_t* keep) const {
  const Layers L(config_);
  const float* p = params_.data();
  for (int f = 0; f < L.filters; ++f) {
    const float* kw = p + L.conv_w + static_cast<std::size_t>(f) * L.kernel * L.kernel;
    std::fill(ws.conv.begin(), ws.conv.end(), 0.0f);
    for (int r = 0; r < L.conv; ++r) {
      float* out = ws.conv.data() + static_cast<std::size_t>(r) * L.conv;
      for (int ky = 0; ky < L.kernel; ++ky) {
        const float* row = input + static_cast<std::size_t>(r * L.stride + ky) * L.in;
        for (int kx = 0; kx < L.kernel; ++kx) {
          const float w = kw[ky * L.kernel + kx];
          const float* src = row + kx;
          if (L.stride == 1) {
            for (int c = 0; c < L.conv; ++c) out[c] += w * src[c];
          } else {
            for (int c = 0; c < L.conv; ++c) out[c] += w * src[c * L.stride];
          }
        }
      }
    }
    // ReLU commutes with max, so pool the raw responses and rectify afterwards.
    const float bias = p[L.conv_b + f];
    for (int i = 0; i < L.pool; ++i) {
      for (int j = 0; j < L.pool; ++j) {
        float best = -INFINITY;
        int best_at = 0;
        for (int y = i * L.pool_s; y < i * L.pool_s + L.pool_k; ++y) {
          for (int x = j * L.pool_s; x < j * L.pool_s + L.pool_k; ++x) {
            const int at = y * L.conv + x;
            if (ws.conv[at] > best) {
              best = ws.conv[at];
              best_at = at;
            }
          }
        }
        const std::size_t m = (static_cast<std::size_t>(f) * L.pool + i) * L.pool + j;
        ws.pooled[m] = std::max(0.0f, best + bias);
        ws.argmax[m] = best_at;
      }
    }
  }

  const float dropout_scale = 1.0f / (1.0f - static_cast<float>(config_.dropout));
  for (int i = 0; i < L.hidden; ++i) {
    const float* w = p + L.w1 + static_cast<std::size_t>(i) * L.features;
    float sum = p[L.b1 + i];
    for (int m = 0; m < L.features; ++m) sum += w[m] * ws.pooled[m];
    ws.h1[i] = std::max(0.0f, sum);
    ws.h1_out[i] = keep ? (keep[i] ? ws.h1[i] * dropout_scale : 0.0f) : ws.h1[i];
  }
  for (int j = 0; j < L.hidden2; ++j) {
    const float* w = p + L.w2 + static_cast<std::size_t>(j) * L.hidden;
    float sum = p[L.b2 + j];
    for (int i = 0; i < L.hidden; ++i) sum += w[i] * ws.h1_out[i];
    ws.h2[j] = std::max(0.0f, sum);
  }
  double logits[2];
  for (int k = 0; k < 2; ++k) {
    const float* w = p + L.w3 + static_cast<std::size_t>(k) * L.hidden2;
    double sum = p[L.b3 + k];
    for (int j = 0; j < L.hidden2; ++j) sum += static_cast<double>(w[j]) * ws.h2[j];
    logits[k] = sum;
  }
  const double top = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - top);
  const double e1 = std::exp(logits[1] - top);
  ws.probs[0] = e0 / (e0 + e1);
  ws.probs[1] = e1 / (e0 + e1);
}

void ConvNet::backward(const float* input, const Workspace& ws, const std::uint8_t* keep,
                       Label label, double scale, Gradients& grad) const {
  const Layers L(config_);
  const float* p = params_.data();
  float* g = grad.values.data();
  const float dlogit[2] = {static_cast<float>((ws.probs[0] - (label == 0 ? 1.0 : 0.0)) * scale),
                           static_cast<float>((ws.probs[1] - (label == 1 ? 1.0 : 0.0)) * scale)};

  std::fill(grad.dh2.begin(), grad.dh2.end(), 0.0f);
  for (int k = 0; k < 2; ++k) {
    g[L.b3 + k] += dlogit[k];
    for (int j = 0; j < L.hidden2; ++j) {
      g[L.w3 + static_cast<std::size_t>(k) * L.hidden2 + j] += dlogit[k] * ws.h2[j];
      grad.dh2[j] += p[L.w3 + static_cast<std::size_t>(k) * L.hidden2 + j] * dlogit[k];
    }
  }
  for (int j = 0; j < L.hidden2; ++j) {
    if (ws.h2[j] <= 0.0f) grad.dh2[j] = 0.0f;
  }

  std::fill(grad.dh1.begin(), grad.dh1.end(), 0.0f);
  for (int j = 0; j < L.hidden2; ++j) {
    const float d = grad.dh2[j];
    if (d == 0.0f) continue;
    g[L.b2 + j] += d;
    float* gw = g + L.w2 + static_cast<std::size_t>(j) * L.hidden;
    const float* w = p + L.w2 + static_cast<std::size_t>(j) * L.hidden;
    for (int i = 0; i < L.hidden; ++i) {
      gw[i] += d * ws.h1_out[i];
      grad.dh1[i] += w[i] * d;
    }
  }
  const float dropout_scale = 1.0f / (1.0f - static_cast<float>(config_.dropout));
  for (int i = 0; i < L.hidden; ++i) {
    if (ws.h1[i] <= 0.0f) {
      grad.dh1[i] = 0.0f;
    } else if (keep) {
      grad.dh1[i] = keep[i] ? grad.dh1[i] * dropout_scale : 0.0f;
    }
  }

  std::fill(grad.dx.begin(), grad.dx.end(), 0.0f);
  for (int i = 0; i < L.hidden; ++i) {
    const float d = grad.dh1[i];
    if (d == 0.0f) continue;
    g[L.b1 + i] += d;
    float* gw = g + L.w1 + static_cast<std::size_t>(i) * L.features;
    const float* w = p + L.w1 + static_cast<std::size_t>(i) * L.features;
    for (int m = 0; m < L.features; ++m) {
      gw[m] += d * ws.pooled[m];
      grad.dx[m] += w[m] * d;
    }
  }

  // Only the pooled argmax positions receive gradient from the max-pool.
  const int per_filter = L.pool * L.pool;
  for (int m = 0; m < L.features; ++m) {
    if (ws.pooled[m] <= 0.0f || grad.dx[m] == 0.0f) continue;
    const int f = m / per_filter;
    const float d = grad.dx[m];
    const int r = ws.argmax[m] / L.conv;
    const int c = ws.argmax[m] % L.conv;
    g[L.conv_b + f] += d;
    float* gk = g + L.conv_w + static_cast<std::size_t>(f) * L.kernel * L.kernel;
    for (int ky = 0; ky < L.kernel; ++ky) {
      const float* row =
          input + static_cast<std::size_t>(r * L.stride + ky) * L.in + c * L.stride;
      for (int kx = 0; kx < L.kernel; ++kx) gk[ky * L.kernel + kx] += d * row[kx];
    }
  }
}

std::vector<Probabilities> ConvNet::predict_proba(std::span<const Image> images) const {
  const Layers L(config_);
  Workspace ws(L);
  std::vector<Probabilities> out;
  out.reserve(images.size());
  for (const Image& image : images) {
    if (image.height != L.in || image.width != L.in) {
      throw InvalidArgument("predict_proba: expected " + std::to_string(L.in) + "x" +
                            std::to_string(L.in) + " input, got " +
                            std::to_string(image.height) + "x" + std::to_string(image.width));
    }
    forward(image.pixels.data(), ws, nullptr);
    out.push_back({ws.probs[0], ws.probs[1]});
  }
  return out;
}

ConvNet fit(std::span<const LabeledImage> labeled, const ModelConfig& config) {
  ConvNet net(config);
  const ConvNet::Layers L(config);
  if (labeled.size() < 2) throw InvalidArgument("fit: need at least 2 instances");
  bool seen[2] = {false, false};
  for (const auto& item : labeled) {
    if (item.label != 0 && item.label != 1) throw InvalidArgument("fit: labels must be 0 or 1");
    if (item.image.height != L.in || item.image.width != L.in) {
      throw InvalidArgument("fit: image size does not match the model input");
    }
    seen[item.label] = true;
  }
  if (!seen[0] || !seen[1]) throw InvalidArgument("fit: degenerate label distribution");

  Rng shuffle_rng(derive_seed(config.seed, 1));
  Rng dropout_rng(derive_seed(config.seed, 2));
  ConvNet::Workspace ws(L);
  ConvNet::Gradients grad;
  grad.values.assign(net.params_.size(), 0.0f);
  grad.dx.assign(L.features, 0.0f);
  grad.dh1.assign(L.hidden, 0.0f);
  grad.dh2.assign(L.hidden2, 0.0f);
  std::vector<double> m1(net.params_.size(), 0.0), m2(net.params_.size(), 0.0);
  std::vector<std::uint8_t> keep(L.hidden);
  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  long step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.values.begin(), grad.values.end(), 0.0f);
      for (std::size_t b = start; b < end; ++b) {
        const LabeledImage& item = labeled[order[b]];
        for (auto& k : keep) k = dropout_rng.bernoulli(1.0 - config.dropout) ? 1 : 0;
        net.forward(item.image.pixels.data(), ws, keep.data());
        epoch_loss -= std::log(std::max(ws.probs[item.label], 1e-300));
        net.backward(item.image.pixels.data(), ws, keep.data(), item.label, scale, grad);
      }
      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < net.params_.size(); ++i) {
        const double gi = grad.values[i];
        m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * gi;
        m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * gi * gi;
        const double denom = std::sqrt(m2[i] / c2) + config.epsilon;
        net.params_[i] -= static_cast<float>(config.learning_rate * (m1[i] / c1) / denom);
      }
    }
    net.train_log_.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return net;
}

namespace {
constexpr char kCheckpointMagic[8] = {'C', 'A', 'I', 'P', 'I', 'C', 'N', 'N'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& in, const std::string& name) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DecodeError(name + ": truncated checkpoint");
  }
  return v;
}
}  // namespace

void ConvNet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::string header = config_to_json(config_).dump();
  out.write(kCheckpointMagic, 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(params_.size() * sizeof(float)));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(train_log_.size()));
  for (double loss : train_log_) put<double>(out, loss);
  if (!out) throw Error("write failed: " + path.string());
}

ConvNet ConvNet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string name = path.string();
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw DecodeError(name + ": not a model checkpoint");
  }
  if (get<std::uint32_t>(in, name) != kCheckpointVersion) {
    throw DecodeError(name + ": unsupported checkpoint version");
  }
  std::string header(get<std::uint32_t>(in, name), '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header.size()))) {
    throw DecodeError(name + ": truncated checkpoint");
  }
  ModelConfig config;
  try {
    config = model_config_from_json(nlohmann::json::parse(header));
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(name + ": bad checkpoint header: " + e.what());
  }
  ConvNet net(config);
  if (get<std::uint32_t>(in, name) != net.params_.size()) {
    throw DecodeError(name + ": parameter count does not match its config");
  }
  if (!in.read(reinterpret_cast<char*>(net.params_.data()),
               static_cast<std::streamsize>(net.params_.size() * sizeof(float)))) {
    throw DecodeError(name + ": truncated checkpoint");
  }
  const auto epochs = get<std::uint32_t>(in, name);
  for (std::uint32_t i = 0; i < epochs; ++i) net.train_log_.push_back(get<double>(in, name));
  return net;
}

}  // namespace caipi
