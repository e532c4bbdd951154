#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "caipi/error.hpp"
#include "caipi/explainer.hpp"
#include "caipi/rng.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace caipi;

namespace {

/// 8x8 image of ones split into four 4x4 quadrant superpixels (0 1 / 2 3).
SuperpixelMap quadrants() {
  SuperpixelMap map{8, 8, 4, std::vector<int>(64)};
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) map.assignment[static_cast<std::size_t>(r * 8 + c)] = (r / 4) * 2 + c / 4;
  }
  return map;
}

struct Design {
  int d = 0;
  std::vector<std::uint8_t> rows;
  std::vector<std::vector<double>> x;
  std::vector<double> w;
};

Design random_design(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Design out;
  out.d = d;
  for (int i = 0; i < n; ++i) {
    std::vector<double> row;
    for (int j = 0; j < d; ++j) {
      const std::uint8_t bit = rng.bernoulli(0.5) ? 1 : 0;
      out.rows.push_back(bit);
      row.push_back(bit);
    }
    out.x.push_back(row);
    out.w.push_back(rng.uniform(0.1, 1.0));
  }
  return out;
}

std::vector<std::vector<double>> columns(const Design& design, const std::vector<int>& cols) {
  std::vector<std::vector<double>> out;
  for (const auto& row : design.x) {
    std::vector<double> r;
    for (int c : cols) r.push_back(row[static_cast<std::size_t>(c)]);
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("proximity kernel") {
  const std::vector<std::uint8_t> all{1, 1, 1, 1};
  const std::vector<std::uint8_t> half{1, 0, 1, 0};
  const std::vector<std::uint8_t> none{0, 0, 0, 0};
  CHECK(proximity(all, 0.25) == 1.0);
  CHECK(proximity(half, 0.5) == doctest::Approx(std::exp(-1.0)));
  CHECK(proximity(none, 1.0) == doctest::Approx(std::exp(-1.0)));
  CHECK(proximity(none, 0.25) == doctest::Approx(std::exp(-16.0)));
  CHECK_THROWS_AS(proximity(std::vector<std::uint8_t>{}, 0.25), InvalidArgument);
}

TEST_CASE("perturbation sampling") {
  const Image im(8, 8, 1.0f);
  const SuperpixelMap map = quadrants();
  const InterpretableInstance inst(im, map);
  CHECK(inst.dimension() == 4);
  CHECK(std::all_of(inst.presence.begin(), inst.presence.end(), [](auto b) { return b == 1; }));

  ExplainerConfig cfg;
  cfg.n_samples = 1;
  auto one = sample_perturbations(inst, cfg);
  REQUIRE(one.size() == 1);
  CHECK(one[0].z_prime == inst.presence);
  CHECK(one[0].z_image.pixels == im.pixels);
  CHECK(one[0].proximity == 1.0);

  const std::vector<std::uint8_t> zeros(4, 0);
  const Image blank = render_perturbation(inst, zeros, 0.25f);
  for (float v : blank.pixels) CHECK(v == 0.25f);
  const std::vector<std::uint8_t> only3{0, 0, 0, 1};
  const Image q3 = render_perturbation(inst, only3, 0.0f);
  CHECK(q3.at(7, 7) == 1.0f);
  CHECK(q3.at(0, 7) == 0.0f);

  cfg.n_samples = 5;
  cfg.seed = 3;
  const auto a = sample_perturbations(inst, cfg);
  const auto b = sample_perturbations(inst, cfg);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].z_prime == b[i].z_prime);
}

TEST_CASE("random bits are fair coin flips") {
  const Image im(8, 8, 1.0f);
  const SuperpixelMap map = quadrants();
  const InterpretableInstance inst(im, map);
  ExplainerConfig cfg;
  cfg.n_samples = 2001;
  cfg.seed = 17;
  const auto samples = sample_perturbations(inst, cfg);
  const int n = cfg.n_samples - 1;
  for (int j = 0; j < 4; ++j) {
    int ones = 0;
    for (std::size_t s = 1; s < samples.size(); ++s) ones += samples[s].z_prime[static_cast<std::size_t>(j)];
    // Two-sided tail probability below 1e-6 would indicate a biased generator.
    CHECK(oracle::binomial_half_cdf(n, ones) > 1e-6);
    CHECK(oracle::binomial_half_cdf(n, n - ones) > 1e-6);
  }
}

TEST_CASE("exact linear target is recovered and matches normal equations") {
  const Design design = random_design(120, 4, 5);
  std::vector<double> y;
  for (const auto& row : design.x) y.push_back(2.0 * row[0] - row[1] + 0.5);
  const Explanation e = fit_surrogate(design.rows, design.d, design.w, y, 2);
  CHECK(e.selected == std::vector<int>{0, 1});
  const auto ref = oracle::wls(columns(design, {0, 1}), design.w, y);
  CHECK(std::abs(e.intercept - ref[0]) < 1e-6);
  CHECK(std::abs(e.weights[0] - ref[1]) < 1e-6);
  CHECK(std::abs(e.weights[1] - ref[2]) < 1e-6);
  CHECK(e.weights[0] == doctest::Approx(2.0));
  CHECK(e.weights[1] == doctest::Approx(-1.0));
  CHECK(e.intercept == doctest::Approx(0.5));
  CHECK(e.weights[2] == 0.0);
  CHECK(e.fidelity == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("noisy full fit agrees with the normal-equation oracle") {
  const Design design = random_design(200, 6, 8);
  Rng rng(99);
  std::vector<double> y;
  for (const auto& row : design.x) {
    y.push_back(0.3 * row[0] + 0.9 * row[2] - 0.4 * row[5] + rng.uniform(-0.2, 0.2));
  }
  const Explanation e = fit_surrogate(design.rows, design.d, design.w, y, 6);
  REQUIRE(e.selected.size() == 6);
  const auto ref = oracle::wls(design.x, design.w, y);
  CHECK(std::abs(e.intercept - ref[0]) < 1e-6);
  for (int j = 0; j < 6; ++j) CHECK(std::abs(e.weights[static_cast<std::size_t>(j)] - ref[static_cast<std::size_t>(j) + 1]) < 1e-6);
  double loss = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double pred = ref[0];
    for (int j = 0; j < 6; ++j) pred += ref[static_cast<std::size_t>(j) + 1] * design.x[i][static_cast<std::size_t>(j)];
    loss += design.w[i] * (pred - y[i]) * (pred - y[i]);
  }
  CHECK(e.fidelity == doctest::Approx(loss).epsilon(1e-6));
}

TEST_CASE("constant target gives zero weights") {
  const Design design = random_design(50, 3, 2);
  const std::vector<double> y(50, 0.7);
  const Explanation e = fit_surrogate(design.rows, design.d, design.w, y, 3);
  CHECK(e.intercept == doctest::Approx(0.7));
  for (double w : e.weights) CHECK(std::abs(w) < 1e-9);
}

TEST_CASE("single feature budget selects the driving superpixel") {
  const Design design = random_design(80, 4, 12);
  std::vector<double> y;
  for (const auto& row : design.x) y.push_back(3.0 * row[2]);
  const Explanation e = fit_surrogate(design.rows, design.d, design.w, y, 1);
  CHECK(e.selected == std::vector<int>{2});
  CHECK(e.weights[2] == doctest::Approx(3.0));
}

TEST_CASE("collinear candidates are skipped with a warning") {
  Design design = random_design(60, 3, 4);
  std::vector<std::uint8_t> rows;
  for (std::size_t i = 0; i < design.x.size(); ++i) {
    for (int j = 0; j < 3; ++j) rows.push_back(design.rows[i * 3 + static_cast<std::size_t>(j)]);
    rows.push_back(design.rows[i * 3]);  // column 3 duplicates column 0
  }
  std::vector<double> y;
  for (const auto& row : design.x) y.push_back(row[0] + 0.5 * row[1]);
  const Explanation e = fit_surrogate(rows, 4, design.w, y, 4);
  CHECK_FALSE(e.warnings.empty());
  const bool both = std::count(e.selected.begin(), e.selected.end(), 0) &&
                    std::count(e.selected.begin(), e.selected.end(), 3);
  CHECK_FALSE(both);
  CHECK(e.selected.size() == 3);
}

TEST_CASE("surrogate input validation") {
  const Design design = random_design(3, 4, 1);
  const std::vector<double> y(3, 0.1);
  CHECK_THROWS_AS(fit_surrogate(design.rows, 4, design.w, y, 3), InvalidArgument);
  CHECK_THROWS_AS(fit_surrogate(design.rows, 4, design.w, std::vector<double>(2, 0.1), 1),
                  InvalidArgument);
  std::vector<double> bad_w = design.w;
  bad_w[1] = 0.0;
  CHECK_THROWS_AS(fit_surrogate(design.rows, 4, bad_w, y, 1), InvalidArgument);
  ExplainerConfig cfg;
  cfg.n_samples = 5;
  cfg.max_features = 5;
  CHECK_THROWS_AS(validate(cfg), InvalidArgument);
}

TEST_CASE("explain on a constant model") {
  const testing::FunctionClassifier model([](const Image&) { return 0.3; });
  const Image im(8, 8, 1.0f);
  const auto r = explain(model, im, quadrants(), ExplainerConfig{});
  CHECK(r.predicted == 0);
  CHECK(r.confidence == doctest::Approx(0.7));
  CHECK(r.explanation.target_label == 0);
  CHECK(r.explanation.intercept == doctest::Approx(0.7));
  for (double w : r.explanation.weights) CHECK(std::abs(w) < 1e-9);
  CHECK(explanation_mask(r.explanation, r.segments, 5).none());
}

TEST_CASE("explain finds the superpixel the model depends on") {
  const testing::FunctionClassifier model(
      [](const Image& im) { return im.at(6, 6) > 0.5f ? 0.9 : 0.2; });
  const Image im(8, 8, 1.0f);
  ExplainerConfig cfg;
  cfg.seed = 4;
  const auto r = explain(model, im, quadrants(), cfg);
  CHECK(r.predicted == 1);
  const auto& w = r.explanation.weights;
  const auto top = std::max_element(w.begin(), w.end(), [](double a, double b) {
    return std::abs(a) < std::abs(b);
  });
  CHECK(top - w.begin() == 3);
  CHECK(*top == doctest::Approx(0.7));
  const Mask m = explanation_mask(r.explanation, r.segments, 1);
  CHECK(m == testing::rect_mask(8, 8, 4, 8, 4, 8));

  const auto again = explain(model, im, quadrants(), cfg);
  CHECK(again.explanation.weights == r.explanation.weights);
  CHECK(again.explanation.selected == r.explanation.selected);
}

TEST_CASE("explain segments the image when no map is given") {
  const testing::FunctionClassifier model([](const Image& im) { return im.at(20, 20); });
  const Image im = testing::rect_image(32, 32, 12, 28, 12, 28);
  const auto r = explain(model, im, ExplainerConfig{}, QuickShiftParams{});
  CHECK(r.segments.assignment.size() == im.size());
  CHECK(r.explanation.weights.size() == static_cast<std::size_t>(r.segments.n_segments));
  CHECK(r.predicted == 1);
  const Mask m = explanation_mask(r.explanation, r.segments, 1);
  CHECK(m.at(20, 20) == 1);
}

TEST_CASE("explanation_mask keeps the largest positive weights") {
  Explanation e;
  e.weights = {0.5, -2.0, 0.1, 0.8};
  e.selected = {1, 0, 3, 2};
  const SuperpixelMap map = quadrants();
  CHECK(explanation_mask(e, map, 1) == testing::rect_mask(8, 8, 4, 8, 4, 8));
  Mask two = explanation_mask(e, map, 2);
  CHECK(two.count() == 32);
  CHECK(two.at(0, 0) == 1);
  CHECK(two.at(0, 7) == 0);
  CHECK(explanation_mask(e, map, 10).count() == 48);
  CHECK_THROWS_AS(explanation_mask(e, map, 0), InvalidArgument);
}
