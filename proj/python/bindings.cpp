#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "caipi/dataset.hpp"
#include "caipi/error.hpp"
#include "caipi/eval.hpp"
#include "caipi/explainer.hpp"
#include "caipi/segmentation.hpp"
#include "caipi/service.hpp"

namespace py = pybind11;
using namespace caipi;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Image to_image(const FloatArray& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  Image im(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), im.pixels.begin());
  return im;
}

Mask to_mask(const ByteArray& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  for (py::ssize_t i = 0; i < a.size(); ++i) m.bits[static_cast<std::size_t>(i)] = a.data()[i] ? 1 : 0;
  return m;
}

py::array_t<std::uint8_t> from_mask(const Mask& m) {
  py::array_t<std::uint8_t> out({m.height, m.width});
  std::copy(m.bits.begin(), m.bits.end(), out.mutable_data());
  return out;
}

py::array_t<int> from_map(const SuperpixelMap& map) {
  py::array_t<int> out({map.height, map.width});
  std::copy(map.assignment.begin(), map.assignment.end(), out.mutable_data());
  return out;
}

/// Wraps a Python callable mapping an (N, H, W) float32 batch to (N, 2) probabilities.
class PyClassifier final : public ProbabilisticClassifier {
 public:
  explicit PyClassifier(py::function fn) : fn_(std::move(fn)) {}

  std::vector<Probabilities> predict_proba(std::span<const Image> images) const override {
    if (images.empty()) return {};
    const auto h = images[0].height, w = images[0].width;
    py::array_t<float> batch({static_cast<py::ssize_t>(images.size()), static_cast<py::ssize_t>(h),
                              static_cast<py::ssize_t>(w)});
    float* dst = batch.mutable_data();
    for (const auto& im : images) dst = std::copy(im.pixels.begin(), im.pixels.end(), dst);
    const auto probs = py::array_t<double, py::array::c_style | py::array::forcecast>(fn_(batch));
    if (probs.ndim() != 2 || probs.shape(0) != static_cast<py::ssize_t>(images.size()) ||
        probs.shape(1) != 2) {
      throw InvalidArgument("classifier must return an (N, 2) array");
    }
    std::vector<Probabilities> out(images.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {probs.at(i, 0), probs.at(i, 1)};
    return out;
  }
  using ProbabilisticClassifier::predict_proba;

 private:
  py::function fn_;
};

QuickShiftParams qs_params(double kernel_size, double max_dist, double ratio, std::uint64_t seed) {
  return {kernel_size, max_dist, ratio, seed};
}

}  // namespace

PYBIND11_MODULE(_caipi, m) {
  m.doc() = "Explanatory interactive learning core (segmentation, explanations, sessions)";

  // Later registrations are tried first, so the subclass goes last.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  m.def(
      "quick_shift",
      [](const FloatArray& image, double kernel_size, double max_dist, double ratio,
         std::uint64_t seed) {
        return from_map(quick_shift(to_image(image), qs_params(kernel_size, max_dist, ratio, seed)));
      },
      py::arg("image"), py::arg("kernel_size") = 4.0, py::arg("max_dist") = 8.0,
      py::arg("ratio") = 0.2, py::arg("seed") = 0,
      "Superpixel ids (H, W) of a grayscale image with intensities in [0, 1].");

  m.def(
      "explain",
      [](py::function predict_proba, const FloatArray& image, int n_samples, int max_features,
         double kernel_width, std::uint64_t seed, int top_k) {
        ExplainerConfig cfg;
        cfg.n_samples = n_samples;
        cfg.max_features = max_features;
        cfg.kernel_width = kernel_width;
        cfg.seed = seed;
        const PyClassifier model(std::move(predict_proba));
        const ExplainResult r = explain(model, to_image(image), cfg, QuickShiftParams{});
        py::dict out;
        out["predicted"] = r.predicted;
        out["confidence"] = r.confidence;
        out["weights"] = r.explanation.weights;
        out["intercept"] = r.explanation.intercept;
        out["selected"] = r.explanation.selected;
        out["warnings"] = r.explanation.warnings;
        out["segments"] = from_map(r.segments);
        out["mask"] = from_mask(explanation_mask(r.explanation, r.segments, top_k));
        return out;
      },
      py::arg("predict_proba"), py::arg("image"), py::arg("n_samples") = 200,
      py::arg("max_features") = 5, py::arg("kernel_width") = 0.25, py::arg("seed") = 0,
      py::arg("top_k") = 5,
      "Sparse local surrogate for the predicted class of a black-box batch classifier.");

  m.def(
      "iou", [](const ByteArray& a, const ByteArray& b) { return iou(to_mask(a), to_mask(b)); },
      py::arg("a"), py::arg("b"));

  m.def(
      "ground_truth_mask",
      [](const FloatArray& image, float threshold) {
        return from_mask(derive_ground_truth_mask(to_image(image), threshold).mask);
      },
      py::arg("image"), py::arg("threshold") = 0.1f);

  m.def(
      "synthetic_dataset",
      [](std::size_t per_class, int size, std::uint64_t seed) {
        const Dataset d = make_synthetic_dataset(per_class, size, seed);
        py::array_t<float> images({static_cast<py::ssize_t>(d.size()), static_cast<py::ssize_t>(size),
                                   static_cast<py::ssize_t>(size)});
        py::array_t<int> labels(static_cast<py::ssize_t>(d.size()));
        float* dst = images.mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i) {
          dst = std::copy(d.images[i].pixels.begin(), d.images[i].pixels.end(), dst);
          labels.mutable_data()[i] = d.label(i);
        }
        return py::make_tuple(images, labels, d.class_names);
      },
      py::arg("per_class"), py::arg("size") = 64, py::arg("seed") = 0);

  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        const ExperimentConfig cfg = experiment_config_from_json(Json::parse(config_json));
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg);
        }
        return result_to_json(r).dump();
      },
      py::arg("config_json"), "Runs the configured grid; returns the results document as JSON.");

  py::class_<SessionService>(m, "SessionService")
      .def(py::init([](const std::string& config_json, bool allow_multiple_sessions) {
             ServiceOptions o;
             o.experiment = experiment_config_from_json(Json::parse(config_json));
             o.allow_multiple_sessions = allow_multiple_sessions;
             return std::make_unique<SessionService>(std::move(o));
           }),
           py::arg("config_json"), py::arg("allow_multiple_sessions") = false)
      .def(
          "handle",
          [](SessionService& s, const std::string& method, const std::string& path,
             const std::string& body) {
            Response r;
            {
              py::gil_scoped_release release;
              r = s.handle(method, path, body);
            }
            return py::make_tuple(r.status, r.content_type, py::bytes(r.body));
          },
          py::arg("method"), py::arg("path"), py::arg("body") = "",
          "Returns (status, content_type, body bytes).")
      .def_property_readonly("live_sessions", &SessionService::live_sessions);
}
