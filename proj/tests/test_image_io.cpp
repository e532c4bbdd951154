#include <doctest.h>

#include <cmath>

#include "caipi/error.hpp"
#include "caipi/image_io.hpp"
#include "helpers.hpp"

using namespace caipi;

namespace {
const std::filesystem::path kData = std::filesystem::path(CAIPI_TEST_DATA);
}

TEST_CASE("png round trip keeps gray and rgb rasters") {
  Raster gray{3, 5, 1, {}};
  for (int i = 0; i < 15; ++i) gray.data.push_back(static_cast<std::uint8_t>(i * 17));
  const Raster back = decode_image(encode_png(gray), "mem.png");
  CHECK(back.height == 3);
  CHECK(back.width == 5);
  CHECK(back.channels == 1);
  CHECK(back.data == gray.data);

  Raster rgb{2, 2, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}};
  const Raster rgb_back = decode_image(encode_png(rgb), "mem.png");
  CHECK(rgb_back.channels == 3);
  CHECK(rgb_back.data == rgb.data);
}

TEST_CASE("rgb files are reduced to luma") {
  const Image im = to_image(decode_image_file(kData / "rgb4.png"));
  CHECK(im.height == 4);
  // 0.299 * 200 + 0.587 * 100 + 0.114 * 50 = 124.2
  CHECK(im.at(2, 1) == doctest::Approx(124.2 / 255.0).epsilon(1e-5));
}

TEST_CASE("jpeg decodes close to the reference decoder") {
  const Image im = to_image(decode_image_file(kData / "gradient8.jpg"));
  REQUIRE(im.height == 8);
  REQUIRE(im.width == 8);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      CHECK(std::abs(im.at(r, c) * 255.0f - static_cast<float>((r * 8 + c) * 4)) <= 2.5f);
    }
  }
}

TEST_CASE("corrupt files raise a decode error naming the file") {
  try {
    decode_image_file(kData / "corrupt.png");
    FAIL("expected DecodeError");
  } catch (const DecodeError& e) {
    CHECK(std::string(e.what()).find("corrupt.png") != std::string::npos);
  }
  CHECK_THROWS_AS(decode_image({'n', 'o', 'p', 'e'}, "x.bin"), DecodeError);
}

TEST_CASE("gzip content is inflated transparently") {
  const auto bytes = read_file_bytes(kData / "hello.txt.gz");
  CHECK(std::string(bytes.begin(), bytes.end()) == "hello gzip\n");
}

TEST_CASE("bilinear resize uses half-pixel alignment") {
  Image src(1, 2);
  src.pixels = {0.0f, 1.0f};
  const Image up = resize_bilinear(src, 1, 4);
  // Source x = (c + 0.5) / 2 - 0.5 = -0.25, 0.25, 0.75, 1.25, clamped to [0, 1].
  CHECK(up.pixels[0] == doctest::Approx(0.0));
  CHECK(up.pixels[1] == doctest::Approx(0.25));
  CHECK(up.pixels[2] == doctest::Approx(0.75));
  CHECK(up.pixels[3] == doctest::Approx(1.0));

  const Image same = resize_bilinear(testing::rect_image(5, 7, 1, 3, 2, 6), 5, 7);
  CHECK(same.pixels == testing::rect_image(5, 7, 1, 3, 2, 6).pixels);
  const Image flat = resize_bilinear(testing::filled(28, 28, 0.3f), 64, 64);
  for (float v : flat.pixels) CHECK(v == doctest::Approx(0.3));
}

TEST_CASE("to_raster rounds and clamps") {
  Image im(1, 3);
  im.pixels = {-0.5f, 0.5f, 2.0f};
  const Raster r = to_raster(im);
  CHECK(r.data == std::vector<std::uint8_t>{0, 128, 255});
}
