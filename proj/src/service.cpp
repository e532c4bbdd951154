#include "caipi/service.hpp"

#include <algorithm>
#include <cstdio>

#include <httplib.h>

#include "caipi/error.hpp"
#include "caipi/eval.hpp"
#include "caipi/image_io.hpp"
#include "caipi/rng.hpp"

namespace caipi {

MaskRle encode_rle(const Mask& mask) {
  MaskRle rle{mask.height, mask.width, {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (const std::uint8_t bit : mask.bits) {
    const std::uint8_t b = bit ? 1 : 0;
    if (b != current) {
      rle.counts.push_back(run);
      current = b;
      run = 0;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

Mask decode_rle(const MaskRle& rle) {
  if (rle.height < 0 || rle.width < 0) throw InvalidArgument("rle: negative dimensions");
  Mask mask(rle.height, rle.width);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (const std::uint32_t run : rle.counts) {
    if (run > mask.size() - pos) throw InvalidArgument("rle: counts exceed height * width");
    std::fill_n(mask.bits.begin() + static_cast<std::ptrdiff_t>(pos), run, value);
    pos += run;
    value ^= 1;
  }
  if (pos != mask.size()) throw InvalidArgument("rle: counts do not cover height * width");
  return mask;
}

Json rle_to_json(const MaskRle& rle) {
  return {{"height", rle.height}, {"width", rle.width}, {"counts", rle.counts}};
}

MaskRle rle_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("rle: expected an object");
  MaskRle rle;
  try {
    rle.height = j.at("height").get<int>();
    rle.width = j.at("width").get<int>();
    rle.counts = j.at("counts").get<std::vector<std::uint32_t>>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument("rle: expected {height, width, counts}");
  }
  return rle;
}

namespace {

Raster upscale(const Raster& in, int scale) {
  Raster out{in.height * scale, in.width * scale, in.channels, {}};
  out.data.resize(static_cast<std::size_t>(out.height) * out.width * out.channels);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      const std::size_t src =
          (static_cast<std::size_t>(r / scale) * in.width + c / scale) * in.channels;
      const std::size_t dst = (static_cast<std::size_t>(r) * out.width + c) * out.channels;
      for (int k = 0; k < in.channels; ++k) out.data[dst + k] = in.data[src + k];
    }
  }
  return out;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
}

}  // namespace

std::vector<std::uint8_t> render_image_png(const Image& image, int scale) {
  return encode_png(upscale(to_raster(image), std::max(scale, 1)));
}

std::vector<std::uint8_t> render_overlay_png(const Image& image, const SuperpixelMap& segments,
                                             const Mask& highlight, int scale) {
  if (segments.height != image.height || segments.width != image.width) {
    throw InvalidArgument("overlay: segmentation does not match the image");
  }
  require_same_shape(image, highlight, "overlay");
  Raster rgb{image.height, image.width, 3, {}};
  rgb.data.resize(image.size() * 3);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      const double v = image.at(r, c);
      const int s = segments.at(r, c);
      const bool border = (c + 1 < image.width && segments.at(r, c + 1) != s) ||
                          (r + 1 < image.height && segments.at(r + 1, c) != s);
      double red = v, green = v, blue = v;
      if (highlight.at(r, c)) {
        red = 0.5 * v;
        green = 0.4 + 0.6 * v;
        blue = 0.5 * v;
      }
      if (border) {
        red = 1.0;
        green = 0.85;
        blue = 0.0;
      }
      const std::size_t p = image.index(r, c) * 3;
      rgb.data[p] = to_byte(red);
      rgb.data[p + 1] = to_byte(green);
      rgb.data[p + 2] = to_byte(blue);
    }
  }
  return encode_png(upscale(rgb, std::max(scale, 1)));
}

struct SessionService::Published {
  Json snapshot;
  Json metrics;
  bool pending = false;
  int iteration = 0;
  SuperpixelMap segments;
  using Assets = std::map<std::string, std::shared_ptr<const std::string>>;
  /// Every asset ever referenced, keyed by iteration.
  std::map<int, Assets> assets;
};

struct SessionService::Live {
  std::string id;
  std::unique_ptr<Session> session;
  std::array<std::string, 2> class_names;
  std::size_t initial_labeled = 0;
  std::size_t initial_unlabeled = 0;
  std::map<std::string, Response> answered;
  std::shared_ptr<const Published> published;
};

namespace {

Response json_response(int status, const Json& j) { return {status, "application/json", j.dump()}; }
Response error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string current;
  const std::string clean = path.substr(0, path.find('?'));
  for (const char ch : clean) {
    if (ch == '/') {
      if (!current.empty()) parts.push_back(std::move(current));
      current.clear();
    } else {
      current += ch;
    }
  }
  if (!current.empty()) parts.push_back(std::move(current));
  return parts;
}

Json parse_body(const std::string& body) {
  if (body.empty()) return Json::object();
  try {
    Json j = Json::parse(body);
    if (!j.is_object()) throw InvalidArgument("request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("malformed JSON: ") + e.what());
  }
}

void reject_unknown_keys(const Json& request, std::initializer_list<const char*> known) {
  for (const auto& [key, value] : request.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw InvalidArgument("unknown key \"" + key + "\"");
    }
  }
}

std::shared_ptr<const std::string> bytes_to_string(const std::vector<std::uint8_t>& bytes) {
  return std::make_shared<const std::string>(bytes.begin(), bytes.end());
}

}  // namespace

SessionService::SessionService(ServiceOptions options) : options_(std::move(options)) {}
SessionService::~SessionService() = default;

void SessionService::set_dataset(Dataset dataset) {
  std::lock_guard lock(write_mutex_);
  dataset_ = std::move(dataset);
}

std::size_t SessionService::live_sessions() const {
  std::lock_guard lock(snapshot_mutex_);
  return static_cast<std::size_t>(
      std::count_if(sessions_.begin(), sessions_.end(), [](const auto& s) {
        return !s.second->published->snapshot.at("complete").template get<bool>();
      }));
}

const Dataset& SessionService::dataset() {
  if (!dataset_) dataset_ = load_dataset(options_.experiment.dataset);
  return *dataset_;
}

std::shared_ptr<SessionService::Live> SessionService::find(const std::string& id) const {
  std::lock_guard lock(snapshot_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<const SessionService::Published> SessionService::published(const Live& live) const {
  std::lock_guard lock(snapshot_mutex_);
  return live.published;
}

// Called with the writer lock held: prepares the next query, renders its assets and
// swaps in a fresh immutable snapshot.
void SessionService::publish(Live& live) {
  Session& s = *live.session;
  if (!s.pending() && !s.complete()) s.begin_iteration();

  auto next = std::make_shared<Published>();
  if (live.published) next->assets = live.published->assets;
  next->iteration = s.iteration();
  Json pending = nullptr;
  if (s.pending()) {
    const PendingQuery& q = *s.pending();
    const int t = s.iteration();
    if (!next->assets.count(t)) {
      next->assets[t] = {
          {"image.png", bytes_to_string(render_image_png(q.image, options_.asset_scale))},
          {"overlay.png", bytes_to_string(render_overlay_png(q.image, q.segments, q.explanation_mask,
                                                             options_.asset_scale))}};
    }
    const std::string base = "/session/" + live.id + "/assets/" + std::to_string(t) + "/";
    pending = {{"instance_id", q.image.id},
               {"height", q.image.height},
               {"width", q.image.width},
               {"predicted", q.predicted},
               {"predicted_class", live.class_names[static_cast<std::size_t>(q.predicted)]},
               {"confidence", q.confidence},
               {"segments", {{"n_segments", q.segments.n_segments}, {"assignment", q.segments.assignment}}},
               {"explanation",
                {{"weights", q.explanation.weights},
                 {"intercept", q.explanation.intercept},
                 {"selected", q.explanation.selected},
                 {"fidelity", q.explanation.fidelity},
                 {"warnings", q.explanation.warnings},
                 {"mask", rle_to_json(encode_rle(q.explanation_mask))}}},
               {"assets", {{"image", base + "image.png"}, {"overlay", base + "overlay.png"}}}};
    next->pending = true;
    next->segments = q.segments;
  }

  // Iteration 0 carries the initial fit; its outcome fields are null.
  IterationRecord initial;
  initial.labeled_size = live.initial_labeled;
  initial.unlabeled_size = live.initial_unlabeled;
  initial.metrics = s.baseline_metrics();
  Json first = record_to_json(initial);
  for (const char* key : {"instance_id", "outcome", "label", "predicted"}) first[key] = nullptr;
  next->metrics = Json::array({first});
  for (const auto& r : s.history()) next->metrics.push_back(record_to_json(r));

  next->snapshot = {{"session", live.id},
                    {"iteration", s.iteration()},
                    {"budget", s.config().budget},
                    {"mode", to_string(s.config().mode)},
                    {"counterexamples_per_correction", s.config().counterexamples},
                    {"complete", s.complete()},
                    {"completion_reason", s.completion_reason()},
                    {"class_names", live.class_names},
                    {"labeled_size", s.labeled().size()},
                    {"base_labeled", s.base_labeled_count()},
                    {"counterexamples", s.counterexample_count()},
                    {"unlabeled_size", s.unlabeled().size()},
                    {"metrics", next->metrics.back()["metrics"]},
                    {"pending", pending}};

  std::lock_guard lock(snapshot_mutex_);
  live.published = std::move(next);
}

Response SessionService::handle(const std::string& method, const std::string& path,
                                const std::string& body) {
  try {
    const auto parts = split_path(path);
    if (parts.empty() || parts[0] != "session") return error_response(404, "no such route");
    if (parts.size() == 1) {
      if (method != "POST") return error_response(405, "method not allowed");
      std::lock_guard lock(write_mutex_);
      return create(body);
    }
    const std::shared_ptr<Live> live = find(parts[1]);
    if (!live) return error_response(404, "unknown session " + parts[1]);
    if (parts.size() == 2) {
      if (method != "DELETE") return error_response(405, "method not allowed");
      std::lock_guard lock(write_mutex_);
      std::lock_guard snapshot_lock(snapshot_mutex_);
      sessions_.erase(parts[1]);
      return {204, "application/json", ""};
    }
    const std::string& action = parts[2];
    if (parts.size() == 3 && action == "feedback" && method == "POST") {
      std::lock_guard lock(write_mutex_);
      if (!find(parts[1])) return error_response(404, "unknown session " + parts[1]);
      return feedback(*live, body);
    }

    // Everything below reads one immutable snapshot.
    const auto snap = published(*live);
    if (parts.size() == 3 && action == "query" && method == "GET") {
      if (!snap->pending) {
        return error_response(409, "session complete: " +
                                       snap->snapshot.at("completion_reason").get<std::string>());
      }
      return json_response(200, snap->snapshot);
    }
    if (parts.size() == 3 && action == "metrics" && method == "GET") {
      return json_response(200, snap->metrics);
    }
    if (parts.size() == 3 && action == "segments" && method == "POST") {
      const Json request = parse_body(body);
      reject_unknown_keys(request, {"mask", "min_overlap"});
      if (!snap->pending) return error_response(409, "no pending query");
      if (!request.contains("mask")) return error_response(400, "segments requires a stroke mask");
      double min_overlap = 0.0;
      if (request.contains("min_overlap")) {
        if (!request["min_overlap"].is_number()) {
          return error_response(400, "min_overlap must be a number");
        }
        min_overlap = request["min_overlap"].get<double>();
      }
      const Mask stroke = decode_rle(rle_from_json(request["mask"]));
      const auto ids = segments_touching_mask(snap->segments, stroke, min_overlap);
      const Mask selected = mask_from_segments(snap->segments, ids);
      return json_response(200, {{"iteration", snap->iteration},
                                 {"segments", ids},
                                 {"mask", rle_to_json(encode_rle(selected))}});
    }
    if (parts.size() == 5 && action == "assets" && method == "GET") {
      int t = -1;
      try {
        std::size_t used = 0;
        t = std::stoi(parts[3], &used);
        if (used != parts[3].size()) t = -1;
      } catch (const std::exception&) {
        t = -1;
      }
      const auto it = snap->assets.find(t);
      if (it == snap->assets.end()) return error_response(404, "no assets for iteration " + parts[3]);
      const auto asset = it->second.find(parts[4]);
      if (asset == it->second.end()) return error_response(404, "unknown asset " + parts[4]);
      return {200, "image/png", *asset->second};
    }
    return error_response(404, "no such route");
  } catch (const InvalidArgument& e) {
    return error_response(400, e.what());
  } catch (const ProtocolError& e) {
    return error_response(409, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

Response SessionService::create(const std::string& body) {
  const Json request = parse_body(body);
  reject_unknown_keys(request, {"session"});
  if (!options_.allow_multiple_sessions) {
    std::lock_guard lock(snapshot_mutex_);
    for (const auto& [id, live] : sessions_) {
      if (!live->published->snapshot.at("complete").get<bool>()) {
        return error_response(409, "session " + id + " is live");
      }
    }
  }
  Json session_json = config_to_json(options_.experiment.session);
  if (request.contains("session")) {
    if (!request["session"].is_object()) return error_response(400, "session must be an object");
    session_json.merge_patch(request["session"]);
  }
  const SessionConfig config = session_config_from_json(session_json);

  Pools pools = split_pools(dataset(), options_.experiment.pools);
  auto test = std::make_shared<std::vector<LabeledImage>>(std::move(pools.test));
  Evaluator evaluator;
  if (options_.evaluate_accuracy && !test->empty()) {
    evaluator = [test](const ProbabilisticClassifier& model) {
      IterationMetrics m;
      m.accuracy = accuracy(model, *test);
      return m;
    };
  }
  auto live = std::make_shared<Live>();
  live->initial_labeled = pools.labeled.size();
  live->initial_unlabeled = pools.unlabeled.size();
  live->session = std::make_unique<Session>(config, std::move(pools.labeled),
                                            std::move(pools.unlabeled), ModelFactory{}, evaluator);
  live->class_names = dataset_->class_names;
  ++created_;
  char id[32];
  std::snprintf(id, sizeof id, "s%012llx",
                static_cast<unsigned long long>(derive_seed(config.seed, created_) & 0xffffffffffffULL));
  live->id = id;
  publish(*live);
  Json out = live->published->snapshot;
  out["id"] = live->id;
  out["config"] = config_to_json(config);
  std::lock_guard lock(snapshot_mutex_);
  sessions_[live->id] = live;
  return json_response(201, out);
}

Response SessionService::feedback(Live& live, const std::string& body) {
  const Json request = parse_body(body);
  reject_unknown_keys(request,
                      {"outcome", "corrected_label", "mask", "segments", "token", "iteration"});
  if (!request.contains("token") || !request["token"].is_string() ||
      request["token"].get<std::string>().empty()) {
    return error_response(400, "feedback requires a non-empty string token");
  }
  const std::string token = request["token"].get<std::string>();
  if (const auto it = live.answered.find(token); it != live.answered.end()) return it->second;

  Session& s = *live.session;
  if (!s.pending()) return error_response(409, "session complete: " + s.completion_reason());
  if (!request.contains("iteration") || !request["iteration"].is_number_integer()) {
    return error_response(400, "feedback requires the integer iteration it answers");
  }
  if (request["iteration"].get<int>() != s.iteration()) {
    return error_response(409, "stale iteration " + request["iteration"].dump() +
                                   ", current is " + std::to_string(s.iteration()));
  }
  if (!request.contains("outcome") || !request["outcome"].is_string()) {
    return error_response(400, "feedback requires an outcome (RRR, RWR or W)");
  }
  Feedback fb;
  fb.outcome = parse_outcome(request["outcome"].get<std::string>());
  if (request.contains("corrected_label") && !request["corrected_label"].is_null()) {
    const Json& l = request["corrected_label"];
    if (l.is_number_integer()) {
      fb.corrected_label = l.get<int>();
    } else if (l.is_string()) {
      const auto name = l.get<std::string>();
      const auto pos = std::find(live.class_names.begin(), live.class_names.end(), name);
      if (pos == live.class_names.end()) return error_response(400, "unknown class " + name);
      fb.corrected_label = static_cast<Label>(pos - live.class_names.begin());
    } else {
      return error_response(400, "corrected_label must be 0, 1 or a class name");
    }
  }
  const PendingQuery& q = *s.pending();
  const bool has_mask = request.contains("mask") && !request["mask"].is_null();
  const bool has_segments = request.contains("segments") && !request["segments"].is_null();
  if (has_mask && has_segments) return error_response(400, "give either mask or segments, not both");
  if (has_mask) {
    fb.corrected_mask = decode_rle(rle_from_json(request["mask"]));
  } else if (has_segments) {
    if (!request["segments"].is_array()) return error_response(400, "segments must be an array");
    std::vector<int> ids;
    for (const auto& v : request["segments"]) {
      if (!v.is_number_integer()) return error_response(400, "segment ids must be integers");
      ids.push_back(v.get<int>());
    }
    fb.corrected_mask = mask_from_segments(q.segments, ids);
  }
  if (fb.corrected_mask) {
    require_same_shape(q.image, *fb.corrected_mask, "feedback mask");
    if (fb.outcome == Outcome::rwr && fb.corrected_mask->none()) {
      return error_response(400, "RWR feedback requires a non-empty mask");
    }
  }

  const Json applied = record_to_json(s.submit_feedback(fb));
  publish(live);
  Json out = published(live)->snapshot;
  out["applied"] = applied;
  Response response = json_response(200, out);
  live.answered[token] = response;
  return response;
}

void mount(httplib::Server& server, SessionService& service) {
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    const Response r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    if (!r.body.empty()) res.set_content(r.body, r.content_type);
  };
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"}});
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  server.Get(R"(/session(/.*)?)", forward);
  server.Post(R"(/session(/.*)?)", forward);
  server.Delete(R"(/session(/.*)?)", forward);
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

}  // namespace caipi
