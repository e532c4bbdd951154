#include <doctest.h>

#include <cmath>

#include "caipi/augment.hpp"
#include "caipi/error.hpp"
#include "helpers.hpp"

using namespace caipi;

namespace {

struct Moments {
  double mass = 0, x = 0, y = 0;
};

Moments moments(const Image& im) {
  Moments m;
  for (int r = 0; r < im.height; ++r) {
    for (int c = 0; c < im.width; ++c) {
      const double v = im.at(r, c);
      m.mass += v;
      m.x += v * c;
      m.y += v * r;
    }
  }
  m.x /= m.mass;
  m.y /= m.mass;
  return m;
}

/// Plus sign centred on (8, 8) with arms of length 2; the right arm tip is dimmer.
std::pair<Image, Mask> plus_sign() {
  Image im(17, 17);
  Mask m(17, 17);
  for (int k = -2; k <= 2; ++k) {
    im.at(8 + k, 8) = 1.0f;
    im.at(8, 8 + k) = 1.0f;
    m.at(8 + k, 8) = 1;
    m.at(8, 8 + k) = 1;
  }
  im.at(8, 10) = 0.5f;
  return {im, m};
}

}  // namespace

TEST_CASE("extract_features keeps masked pixels only") {
  const Image im = testing::filled(4, 4, 0.6f);
  const Mask m = testing::rect_mask(4, 4, 1, 3, 0, 2);
  const Image f = extract_features(im, m, 0.1f);
  CHECK(f.at(1, 0) == 0.6f);
  CHECK(f.at(2, 1) == 0.6f);
  CHECK(f.at(0, 0) == 0.1f);
  CHECK(f.at(3, 3) == 0.1f);
  CHECK(extract_features(im, Mask(4, 4, true)).pixels == im.pixels);
  for (float v : extract_features(im, Mask(4, 4)).pixels) CHECK(v == 0.0f);
  CHECK_THROWS_AS(extract_features(im, Mask(3, 4)), InvalidArgument);
}

TEST_CASE("identity transform is exact") {
  const Image im = testing::rect_image(16, 16, 3, 9, 5, 12, 0.75f);
  const Mask m = testing::rect_mask(16, 16, 3, 9, 5, 12);
  const auto t = apply_transform(im, m, TransformSpec{}, 0.0f);
  CHECK(t.image.pixels == im.pixels);
  CHECK(t.region == m);
  CHECK(t.record.center_x == doctest::Approx(8.0));
  CHECK(t.record.center_y == doctest::Approx(5.5));
}

TEST_CASE("translation moves the centroid") {
  const Image im = testing::rect_image(16, 16, 6, 9, 6, 9);
  const Mask m = testing::rect_mask(16, 16, 6, 9, 6, 9);
  const auto t = apply_transform(im, m, TransformSpec{1.0, 0.0, 5.0, 0.0}, 0.0f);
  const Moments before = moments(im), after = moments(t.image);
  CHECK(after.x == doctest::Approx(before.x + 5.0));
  CHECK(after.y == doctest::Approx(before.y));
  CHECK(after.mass == doctest::Approx(before.mass));
  CHECK(t.region == testing::rect_mask(16, 16, 6, 9, 11, 14));
}

TEST_CASE("positive rotation is counter-clockwise on screen") {
  const auto [im, m] = plus_sign();
  const auto t = apply_transform(im, m, TransformSpec{1.0, 90.0, 0.0, 0.0}, 0.0f);
  // The dim right-arm tip ends up on the upper arm.
  CHECK(t.image.at(6, 8) == doctest::Approx(0.5f));
  CHECK(t.image.at(8, 10) == doctest::Approx(1.0f));
  CHECK(t.region == m);
}

TEST_CASE("scaling changes mass by the squared factor") {
  const Image im = testing::rect_image(40, 40, 12, 28, 12, 28);
  const Mask m = testing::rect_mask(40, 40, 12, 28, 12, 28);
  for (double s : {0.7, 1.0, 1.3}) {
    const auto t = apply_transform(im, m, TransformSpec{s, 0.0, 0.0, 0.0}, 0.0f);
    const double ratio = moments(t.image).mass / moments(im).mass;
    CHECK(ratio == doctest::Approx(s * s).epsilon(0.15));
  }
}

TEST_CASE("random transforms stay inside the frame") {
  const Image im = testing::rect_image(32, 32, 4, 20, 6, 18, 0.9f);
  const Mask m = testing::rect_mask(32, 32, 4, 20, 6, 18);
  AugmentParams params;
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto t = random_transform(im, m, params, rng);
    const auto& spec = t.record.spec;
    CHECK(spec.scale >= params.scale_min);
    CHECK(spec.scale <= params.scale_max);
    CHECK(spec.rotation_deg >= params.rotation_min_deg);
    CHECK(spec.rotation_deg <= params.rotation_max_deg);
    const Extent e = transformed_extent(m, spec, t.record.center_x, t.record.center_y);
    CHECK(e.min_x >= -0.5 - 1e-9);
    CHECK(e.min_y >= -0.5 - 1e-9);
    CHECK(e.max_x <= 31.5 + 1e-9);
    CHECK(e.max_y <= 31.5 + 1e-9);
    // Nothing was clipped, so the region keeps roughly scale^2 of the pixels.
    const double expect = spec.scale * spec.scale * static_cast<double>(m.count());
    CHECK(std::abs(static_cast<double>(t.region.count()) - expect) <= 0.3 * expect);
  }
}

TEST_CASE("counterexamples are deterministic and labelled") {
  const Image im = testing::rect_image(24, 24, 5, 15, 5, 12, 0.8f, 42);
  const Mask m = testing::rect_mask(24, 24, 5, 15, 5, 12);
  AugmentParams params;
  for (int c : {0, 1, 3, 5}) {
    Rng a(9), b(9);
    const auto xs = make_counterexamples(im, m, 1, c, params, a);
    const auto ys = make_counterexamples(im, m, 1, c, params, b);
    REQUIRE(xs.size() == static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      CHECK(xs[i].image.pixels == ys[i].image.pixels);
      CHECK(xs[i].label == 1);
      CHECK(xs[i].source_id == 42);
      CHECK(xs[i].image.source_class == 1);
    }
  }
  Rng rng(9);
  const auto three = make_counterexamples(im, m, 0, 3, params, rng);
  CHECK(three[0].image.pixels != three[1].image.pixels);
  CHECK_THROWS_AS(make_counterexamples(im, m, 0, -1, params, rng), InvalidArgument);
}

TEST_CASE("augmentation failure modes") {
  const Image im = testing::filled(16, 16, 1.0f);
  AugmentParams params;
  Rng rng(1);
  CHECK_THROWS_AS(make_counterexamples(im, Mask(16, 16), 0, 1, params, rng), EmptyMaskError);
  CHECK_THROWS_AS(apply_transform(im, Mask(16, 16), TransformSpec{}, 0.0f), EmptyMaskError);
  CHECK_NOTHROW(make_counterexamples(im, Mask(16, 16), 0, 0, params, rng));
  params.scale_min = 1.5;
  params.scale_max = 1.6;
  params.max_attempts = 7;
  CHECK_THROWS_WITH_AS(random_transform(im, Mask(16, 16, true), params, rng),
                       doctest::Contains("7 attempts"), FrameFitExhausted);
  params.scale_min = 0.0;
  CHECK_THROWS_AS(validate(params), InvalidArgument);
}
