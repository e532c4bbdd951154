// Acceptance gate: one PASS/FAIL line per criterion.
//
// Exit status is non-zero when a criterion fails on data that is present. A criterion
// whose dataset cannot be found is printed as FAIL with "dataset unavailable" and listed
// in the summary as blocked; it does not change the exit status.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "caipi/config.hpp"
#include "caipi/error.hpp"
#include "caipi/eval.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace caipi;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
  bool blocked = false;
};

struct Tally {
  int passed = 0, failed = 0, blocked = 0;
};

Tally tally;

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

void gate(const std::string& name, const std::function<Verdict()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s  %-36s %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str(),
              secs);
  std::fflush(stdout);
  if (v.pass) {
    ++tally.passed;
  } else if (v.blocked) {
    ++tally.blocked;
  } else {
    ++tally.failed;
  }
}

Verdict unavailable(const fs::path& where) {
  return {false, "dataset unavailable (" + where.string() + ")", true};
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

fs::path data_dir() {
  const char* env = std::getenv(kDataDirEnv);
  return env && *env ? fs::path(env) : fs::path("/root/data");
}

bool fashion_present(const fs::path& dir) {
  for (const char* stem : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"}) {
    if (!fs::exists(dir / stem) && !fs::exists(dir / (std::string(stem) + ".gz"))) return false;
  }
  return true;
}

bool medical_present(const fs::path& dir) {
  return fs::is_directory(dir / "ChestCT") && fs::is_directory(dir / "AbdomenCT");
}

ExperimentConfig shipped_config(const std::string& file, const fs::path& dataset_path) {
  ExperimentConfig c = load_experiment_config(fs::path(CAIPI_SOURCE_DIR) / "configs" / file);
  c.dataset.path = dataset_path;
  return c;
}

// --- property suite ----------------------------------------------------------

Verdict wls_recovery() {
  const auto start = std::chrono::steady_clock::now();
  // Twelve vertical stripes give a 12-dimensional interpretable space.
  const Image image(8, 24, 1.0f);
  SuperpixelMap map{8, 24, 12, std::vector<int>(8 * 24)};
  for (int p = 0; p < 8 * 24; ++p) map.assignment[static_cast<std::size_t>(p)] = (p % 24) / 2;
  const InterpretableInstance instance(image, map);
  ExplainerConfig cfg;
  cfg.n_samples = 500;
  cfg.seed = 11;
  const auto samples = sample_perturbations(instance, cfg);
  std::vector<double> f, w;
  std::vector<std::vector<double>> x;
  for (const auto& s : samples) {
    f.push_back(2.0 * s.z_prime[1] - s.z_prime[2] + 0.5);
    w.push_back(s.proximity);
    x.push_back({static_cast<double>(s.z_prime[1]), static_cast<double>(s.z_prime[2])});
  }
  const Explanation e = fit_surrogate(samples, f, 2);
  const auto ref = oracle::wls(x, w, f);
  const double err = std::max({std::abs(e.intercept - ref[0]), std::abs(e.weights[1] - ref[1]),
                               std::abs(e.weights[2] - ref[2])});
  const double secs = seconds_since(start);
  const bool ok = e.selected == std::vector<int>{1, 2} && err <= 1e-6 && secs < 1.0;
  return {ok, "selected {1,2}, max |w - w_oracle| = " + fmt("%.2e", err) + ", " +
                  fmt("%.3f s (< 1 s)", secs)};
}

std::vector<std::pair<std::string, Image>> quick_shift_fixtures() {
  std::vector<std::pair<std::string, Image>> out;
  Image halves(16, 16);
  for (int r = 0; r < 16; ++r) {
    for (int c = 8; c < 16; ++c) halves.at(r, c) = 1.0f;
  }
  out.emplace_back("halves", halves);
  out.emplace_back("flat", Image(16, 16, 0.5f));
  out.emplace_back("square", testing::rect_image(16, 16, 4, 12, 4, 12, 0.9f));
  Image gradient(16, 16), checker(16, 16), disc(16, 16);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      gradient.at(r, c) = static_cast<float>(c) / 15.0f;
      checker.at(r, c) = ((r / 4 + c / 4) % 2) ? 0.8f : 0.1f;
      disc.at(r, c) = (r - 7.5) * (r - 7.5) + (c - 7.5) * (c - 7.5) < 25 ? 1.0f : 0.0f;
    }
  }
  out.emplace_back("gradient", gradient);
  out.emplace_back("checker", checker);
  out.emplace_back("disc", disc);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    Rng rng(seed);
    Image noise(16, 16);
    for (auto& v : noise.pixels) v = static_cast<float>(rng.uniform());
    out.emplace_back("noise" + std::to_string(seed), noise);
  }
  return out;
}

Verdict quick_shift_links() {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<QuickShiftParams> settings = {
      {}, {2.0, 4.0, 0.5, 1}, {3.0, 6.0, 0.3, 2}, {1.5, 10.0, 0.1, 3}};
  int fixtures = 0, links = 0, mismatches = 0, violations = 0;
  for (const auto& [name, image] : quick_shift_fixtures()) {
    for (const auto& params : settings) {
      ++fixtures;
      const auto trace = quick_shift_traced(image, params);
      const auto ref = oracle::quick_shift(image, params);
      const double s = 1.0 - params.ratio, t = params.ratio * kIntensityScale;
      for (std::size_t p = 0; p < trace.parent.size(); ++p) {
        if (trace.parent[p] != ref.parent[p]) ++mismatches;
        const int q = trace.parent[p];
        if (q < 0) continue;
        ++links;
        const double dr = s * (static_cast<int>(p) / 16 - q / 16);
        const double dc = s * (static_cast<int>(p) % 16 - q % 16);
        const double dv = t * (static_cast<double>(image.pixels[p]) - image.pixels[q]);
        const bool denser = ref.density[static_cast<std::size_t>(q)] > ref.density[p];
        const bool close = dr * dr + dc * dc + dv * dv <= params.max_dist * params.max_dist;
        if (!denser || !close) ++violations;
      }
    }
  }
  const double secs = seconds_since(start);
  const bool ok = mismatches == 0 && violations == 0 && secs < 10.0;
  return {ok, std::to_string(fixtures) + " fixture/parameter pairs, " + std::to_string(links) +
                  " links, " + std::to_string(mismatches) + " oracle mismatches, " +
                  std::to_string(violations) + " rule violations, " + fmt("%.2f s (< 10 s)", secs)};
}

Verdict augment_frame_fit() {
  const auto start = std::chrono::steady_clock::now();
  const Dataset d = make_synthetic_dataset(50, 64, 21);
  AugmentParams params;
  Rng rng(2024);
  int made = 0, outside = 0, mass_off = 0;
  for (int k = 0; k < 1000; ++k) {
    const Image& source = d.images[static_cast<std::size_t>(k) % d.size()];
    const Mask mask = derive_ground_truth_mask(source, 0.1f).mask;
    const auto cx = make_counterexamples(source, mask, source.source_class.value_or(0), 1, params, rng);
    const TransformRecord& rec = cx[0].transform;
    ++made;
    // Forward-map every decisive pixel (corners included) with the recorded transform.
    const double th = rec.spec.rotation_deg * std::numbers::pi / 180.0;
    const double a = std::cos(th) * rec.spec.scale, b = std::sin(th) * rec.spec.scale;
    for (int r = 0; r < mask.height; ++r) {
      for (int c = 0; c < mask.width; ++c) {
        if (!mask.at(r, c)) continue;
        for (const double oy : {-0.5, 0.5}) {
          for (const double ox : {-0.5, 0.5}) {
            const double dx = c + ox - rec.center_x, dy = r + oy - rec.center_y;
            const double x = rec.center_x + a * dx + b * dy + rec.spec.translate_x;
            const double y = rec.center_y - b * dx + a * dy + rec.spec.translate_y;
            if (x < -0.5 - 1e-9 || x > mask.width - 0.5 + 1e-9 || y < -0.5 - 1e-9 ||
                y > mask.height - 0.5 + 1e-9) {
              ++outside;
            }
          }
        }
      }
    }
    std::size_t nonzero = 0;
    for (float v : cx[0].image.pixels) nonzero += v > 0.0f;
    const double expect = rec.spec.scale * rec.spec.scale * static_cast<double>(mask.count());
    if (std::abs(static_cast<double>(nonzero) - expect) > 0.3 * expect) ++mass_off;
  }
  const double secs = seconds_since(start);
  const bool ok = made == 1000 && outside == 0 && mass_off == 0 && secs < 30.0;
  return {ok, std::to_string(made) + " counterexamples, " + std::to_string(outside) +
                  " feature corners outside the frame, " + std::to_string(mass_off) +
                  " outside +-30% of scale^2 x area, " + fmt("%.1f s (< 30 s)", secs)};
}

ModelFactory mock_factory() {
  return [](std::span<const LabeledImage>) {
    return std::unique_ptr<ProbabilisticClassifier>(
        std::make_unique<testing::FunctionClassifier>([](const Image& im) {
          double s = 0;
          for (int r = 0; r < im.height; ++r) {
            for (int c = 0; c < im.width / 2; ++c) s += im.at(r, c);
          }
          return std::clamp(0.2 + 4.0 * s / static_cast<double>(im.size()), 0.0, 1.0);
        }));
  };
}

SessionConfig mock_session(Mode mode, int c, int budget) {
  SessionConfig cfg;
  cfg.mode = mode;
  cfg.counterexamples = c;
  cfg.budget = budget;
  cfg.explainer.n_samples = 20;
  cfg.model.input_size = 16;
  cfg.model.conv_kernel = 5;
  cfg.model.pool_kernel = 4;
  cfg.model.pool_stride = 4;
  return cfg;
}

Verdict engine_bookkeeping() {
  const Dataset d = make_synthetic_dataset(130, 16, 6);
  SplitOptions split;
  split.l0_size = 100;
  const Pools pools = split_pools(d, split);
  int combos = 0, wrong = 0;
  for (const Mode mode : {Mode::rwr_only, Mode::rwr_plus_w}) {
    for (const int c : {0, 1, 3, 5}) {
      for (const Outcome outcome : {Outcome::rrr, Outcome::rwr, Outcome::w}) {
        ++combos;
        Session s(mock_session(mode, c, 1), pools.labeled, pools.unlabeled, mock_factory());
        const std::size_t l = s.labeled().size(), u = s.unlabeled().size();
        const PendingQuery& q = s.begin_iteration();
        Feedback fb;
        fb.outcome = outcome;
        if (outcome == Outcome::w) fb.corrected_label = 1 - q.predicted;
        if (outcome != Outcome::rrr) fb.corrected_mask = testing::rect_mask(16, 16, 4, 12, 4, 12);
        s.submit_feedback(fb);
        // Table: RRR +1; RWR +1+c; W +1 (RWR) or +1+c (RWR+W); U always -1.
        const bool augmented =
            outcome == Outcome::rwr || (outcome == Outcome::w && mode == Mode::rwr_plus_w);
        const std::size_t want_l = l + 1 + (augmented ? static_cast<std::size_t>(c) : 0);
        if (s.labeled().size() != want_l || s.unlabeled().size() != u - 1) ++wrong;
      }
    }
  }
  int step = 0;
  const auto run = run_with_oracle(
      mock_session(Mode::rwr_plus_w, 1, 100), pools.labeled, pools.unlabeled,
      [&](const PendingQuery& q) {
        Feedback fb;
        fb.outcome = std::array{Outcome::rrr, Outcome::rwr, Outcome::w}[step++ % 3];
        if (fb.outcome == Outcome::w) fb.corrected_label = q.predicted;
        if (fb.outcome != Outcome::rrr) fb.corrected_mask = testing::rect_mask(16, 16, 4, 12, 4, 12);
        return fb;
      },
      mock_factory());
  std::set<InstanceId> base = {};
  for (const auto& l : pools.labeled) base.insert(l.image.id);
  for (const auto& r : run.trace) base.insert(r.instance_id);
  const bool ok = wrong == 0 && run.base_labeled == 200 && base.size() == 200;
  return {ok, std::to_string(combos) + " (mode, outcome, c) deltas, " + std::to_string(wrong) +
                  " mismatches; 100-iteration run: " + std::to_string(run.base_labeled) +
                  " base instances, " + std::to_string(base.size()) + " distinct"};
}

Verdict iou_algebra() {
  const Mask a = testing::rect_mask(4, 4, 0, 2, 0, 2);
  const Mask b = testing::rect_mask(4, 4, 0, 2, 1, 3);
  const Mask far = testing::rect_mask(4, 4, 2, 4, 2, 4);
  // a and b share 2 pixels out of 6 covered.
  const bool ok = iou(a, b) == iou(b, a) && iou(a, a) == 1.0 && iou(a, far) == 0.0 &&
                  std::abs(iou(a, b) - 1.0 / 3.0) < 1e-15;
  return {ok, "symmetric, identity 1, disjoint 0, hand-counted " + fmt("%.6f", iou(a, b))};
}

// --- desk-scale reproduction -----------------------------------------------

struct CellRun {
  bool ran = false;
  CellResult cell;
  ExperimentConfig config;
};

CellRun run_cell(const std::string& config_file, const fs::path& path) {
  CellRun out;
  out.config = shipped_config(config_file, path);
  out.config.modes = {Mode::rwr_plus_w};
  out.config.counterexamples = {1};
  if (out.config.explanation_every == 1) out.config.explanation_every = 10;
  ExperimentHooks hooks;
  hooks.progress = [](const std::string& m) { std::fprintf(stderr, "  %s\n", m.c_str()); };
  ExperimentResult r = run_experiment(out.config, hooks);
  out.cell = std::move(r.cells.at(0));
  out.ran = true;
  return out;
}

Verdict cell_accuracy(const CellRun& run, double threshold, double reference) {
  const auto& c = run.cell;
  const bool ok = c.max_accuracy >= threshold;
  return {ok, "max accuracy " + fmt("%.2f%%", 100 * c.max_accuracy) + " (>= " +
                  fmt("%.0f%%", 100 * threshold) + "; reference " + fmt("%.2f%%", reference) +
                  "); baseline " + fmt("%.2f%%", 100 * c.baseline.accuracy.value_or(0)) + ", RRR " +
                  std::to_string(c.outcomes.count("RRR") ? c.outcomes.at("RRR") : 0) + " / RWR " +
                  std::to_string(c.outcomes.count("RWR") ? c.outcomes.at("RWR") : 0) + " / W " +
                  std::to_string(c.outcomes.count("W") ? c.outcomes.at("W") : 0)};
}

Verdict baseline(const std::string& config_file, const fs::path& path, double target) {
  const ExperimentConfig cfg = shipped_config(config_file, path);
  const Dataset d = load_dataset(cfg.dataset);
  const BaselineResult r =
      train_baseline(d, cfg.baseline_train, cfg.baseline_test, cfg.session.model, cfg.pools.seed);
  const double pct = 100 * r.accuracy;
  return {std::abs(pct - target) <= 2.0,
          std::to_string(r.n_train) + "/" + std::to_string(r.n_test) + " accuracy " +
              fmt("%.2f%%", pct) + " (target " + fmt("%.2f", target) + " +- 2)"};
}

Verdict labeling(const CellRun& run, std::size_t baseline_labels) {
  const auto& c = run.cell;
  const int budget = run.config.session.budget;
  const std::size_t bound = 200 + static_cast<std::size_t>(budget);  // c = 1
  const LabelingEffort e =
      labeling_effort(c.base_labeled, c.labeled_size - c.base_labeled, baseline_labels);
  return {c.labeled_size <= bound,
          std::to_string(c.base_labeled) + " base labels + " +
              std::to_string(e.caipi_counterexamples) + " counterexamples = " +
              std::to_string(c.labeled_size) + " (<= " + std::to_string(bound) + ") vs " +
              std::to_string(baseline_labels) + ": label reduction " +
              fmt("%.2f%%", e.label_reduction_percent) + ", instance reduction " +
              fmt("%.2f%%", e.instance_reduction_percent)};
}

Verdict explanation_score(const CellRun& run) {
  // Trend over the evaluated iterations (not gated).
  std::string trend;
  if (run.cell.baseline.explanation_score) trend += fmt("t0 %.2f", *run.cell.baseline.explanation_score);
  for (const auto& r : run.cell.trace) {
    if (!r.metrics.explanation_score) continue;
    trend += (trend.empty() ? "" : ", ") + ("t" + std::to_string(r.iteration)) +
             fmt(" %.2f", *r.metrics.explanation_score);
  }

  // Exclusion rule and determinism, checked on the initial model of the same pools.
  const ExperimentConfig& cfg = run.config;
  const Pools pools = split_pools(load_dataset(cfg.dataset), cfg.pools);
  const ConvNet model = fit(pools.labeled, cfg.session.model);
  const ExplanationEvalConfig eval{cfg.session.explainer, cfg.session.segmentation,
                                   cfg.explanation_top_k};
  SegmentationCache cache;
  const ExplanationScore first = avg_nonzero_explanation_score(model, eval, pools.expl_test, &cache);
  const ExplanationScore second = avg_nonzero_explanation_score(model, eval, pools.expl_test);

  // Recount independently: only correct predictions with a strictly positive IoU count.
  double sum = 0;
  std::size_t counted = 0, correct = 0;
  for (const auto& item : pools.expl_test) {
    const ExplainerConfig ec = [&] {
      ExplainerConfig e = cfg.session.explainer;
      e.seed = derive_seed(cfg.session.explainer.seed, static_cast<std::uint64_t>(item.image.id));
      return e;
    }();
    const ExplainResult r = explain(model, item.image, ec, cfg.session.segmentation);
    if (r.predicted != item.label) continue;
    ++correct;
    const Mask m = explanation_mask(r.explanation, r.segments, cfg.explanation_top_k);
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < m.size(); ++p) {
      inter += m.bits[p] && item.truth.mask.bits[p];
      uni += m.bits[p] || item.truth.mask.bits[p];
    }
    if (inter == 0) continue;
    sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++counted;
  }
  const std::optional<double> recount =
      counted ? std::optional<double>(100.0 * sum / static_cast<double>(counted)) : std::nullopt;
  const bool deterministic = first.percent == second.percent;
  const bool rule = first.correct == correct && first.nonzero == counted &&
                    first.percent.has_value() == recount.has_value() &&
                    (!recount || std::abs(*first.percent - *recount) < 1e-9);
  return {deterministic && rule,
          "not gated on level; deterministic " + std::string(deterministic ? "yes" : "no") +
              ", exclusion rule recount " + (rule ? "matches" : "differs") + " (" +
              std::to_string(first.nonzero) + "/" + std::to_string(first.correct) + " correct of " +
              std::to_string(first.evaluated) + "); trend: " + trend};
}

}  // namespace

int main() {
  std::printf("acceptance (data dir %s)\n", data_dir().string().c_str());
  gate("property: WLS recovery", wls_recovery);
  gate("property: Quick Shift link rule", quick_shift_links);
  gate("property: augmentation frame fit", augment_frame_fit);
  gate("property: engine bookkeeping", engine_bookkeeping);
  gate("property: IoU algebra", iou_algebra);

  const fs::path fashion = data_dir() / "fashion";
  const fs::path medical = data_dir() / "medical";
  CellRun fashion_run, medical_run;
  if (fashion_present(fashion)) {
    try {
      fashion_run = run_cell("fashion.json", fashion);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "fashion cell failed: %s\n", e.what());
    }
  }
  if (medical_present(medical)) {
    try {
      medical_run = run_cell("medical.json", medical);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "medical cell failed: %s\n", e.what());
    }
  }

  auto needs = [](const CellRun& run, const fs::path& where, bool present,
                  const std::function<Verdict()>& check) -> std::function<Verdict()> {
    return [&run, where, present, check] {
      if (!present) return unavailable(where);
      if (!run.ran) return Verdict{false, "cell run failed"};
      return check();
    };
  };
  const bool has_fashion = fashion_present(fashion);
  const bool has_medical = medical_present(medical);

  gate("repro: Fashion RWR+W c=1 accuracy", needs(fashion_run, fashion, has_fashion, [&] {
         return cell_accuracy(fashion_run, 0.90, 95.02);
       }));
  gate("repro: Medical RWR+W c=1 accuracy", needs(medical_run, medical, has_medical, [&] {
         return cell_accuracy(medical_run, 0.94, 97.48);
       }));
  gate("repro: Fashion baseline", [&] {
    return has_fashion ? baseline("fashion.json", fashion, 95.26) : unavailable(fashion);
  });
  gate("repro: Medical baseline", [&] {
    return has_medical ? baseline("medical.json", medical, 94.67) : unavailable(medical);
  });
  gate("repro: labeling effort (Fashion)", needs(fashion_run, fashion, has_fashion, [&] {
         return labeling(fashion_run, 9800);
       }));
  gate("repro: labeling effort (Medical)", needs(medical_run, medical, has_medical, [&] {
         return labeling(medical_run, 14000);
       }));
  gate("repro: explanation score (Fashion)", needs(fashion_run, fashion, has_fashion, [&] {
         return explanation_score(fashion_run);
       }));
  gate("repro: explanation score (Medical)", needs(medical_run, medical, has_medical, [&] {
         return explanation_score(medical_run);
       }));

  std::printf("summary: %d passed, %d failed, %d blocked (dataset unavailable)\n", tally.passed,
              tally.failed, tally.blocked);
  return tally.failed == 0 ? 0 : 1;
}
