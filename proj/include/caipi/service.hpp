#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "caipi/config.hpp"
#include "caipi/engine.hpp"

namespace httplib {
class Server;
}

namespace caipi {

/// Run-length encoding of a binary mask in row-major order. counts alternate between
/// runs of 0 and runs of 1, starting with 0 (a leading zero-length run is allowed).
struct MaskRle {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;
};

MaskRle encode_rle(const Mask& mask);
/// Throws InvalidArgument when the counts do not cover exactly height * width pixels.
Mask decode_rle(const MaskRle& rle);
Json rle_to_json(const MaskRle& rle);
MaskRle rle_from_json(const Json& j);

/// Grayscale PNG of the image and an RGB overlay (superpixel borders, explanation tint).
std::vector<std::uint8_t> render_image_png(const Image& image, int scale);
std::vector<std::uint8_t> render_overlay_png(const Image& image, const SuperpixelMap& segments,
                                             const Mask& highlight, int scale);

struct ServiceOptions {
  /// Dataset, pool split and default session settings; session fields may be overridden
  /// per POST /session.
  ExperimentConfig experiment;
  bool allow_multiple_sessions = false;
  /// Evaluate held-out accuracy after each refit (needs pools.test_size > 0).
  bool evaluate_accuracy = true;
  /// Integer upscaling applied to the PNG assets.
  int asset_scale = 4;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// HTTP-shaped front end for interactive sessions, independent of the transport.
///
///   POST   /session                         create (201) and prepare the first query
///   GET    /session/{id}/query              snapshot with the pending query
///   POST   /session/{id}/feedback           answer it; returns the next snapshot
///   POST   /session/{id}/segments           stroke mask -> touched superpixel ids
///   GET    /session/{id}/metrics            baseline record followed by the history
///   GET    /session/{id}/assets/{t}/image.png | overlay.png
///   DELETE /session/{id}
///
/// Errors are JSON {"error": message} with 400 (bad request), 404 (unknown session,
/// asset or route) or 409 (conflict with the session state). Mutations are serialised by
/// one writer lock; reads only copy the last published snapshot.
class SessionService {
 public:
  explicit SessionService(ServiceOptions options);
  ~SessionService();

  Response handle(const std::string& method, const std::string& path, const std::string& body);

  /// Dataset is loaded on first use; tests may inject one up front.
  void set_dataset(Dataset dataset);
  std::size_t live_sessions() const;

 private:
  struct Live;
  struct Published;

  Response create(const std::string& body);
  Response feedback(Live& live, const std::string& body);
  void publish(Live& live);
  std::shared_ptr<Live> find(const std::string& id) const;
  std::shared_ptr<const Published> published(const Live& live) const;
  const Dataset& dataset();

  ServiceOptions options_;
  std::optional<Dataset> dataset_;
  std::map<std::string, std::shared_ptr<Live>> sessions_;
  std::uint64_t created_ = 0;
  std::mutex write_mutex_;
  mutable std::mutex snapshot_mutex_;
};

/// Routes every request under /session (plus GET /health) to `service`. Adds permissive
/// CORS headers so a browser front end on another origin can call it.
void mount(httplib::Server& server, SessionService& service);

}  // namespace caipi
