#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <png.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "showthru/image.hpp"
#include "showthru/rng.hpp"
#include "support.hpp"

using namespace showthru;
using testsupport::TempDir;
using testsupport::random_image;

namespace {

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

// Minimal RGB PNG, used to check that color input is rejected.
void write_rgb_png(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, f);
  png_set_IHDR(png, info, 2, 2, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_byte row[6] = {255, 0, 0, 0, 255, 0};
  png_write_row(png, row);
  png_write_row(png, row);
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

}  // namespace

TEST_CASE("load maps stored integers linearly onto [0,1]") {
  TempDir dir("image_load");

  SUBCASE("8-bit levels {0,85,170,255}") {
    const std::string pgm = std::string("P5\n2 2\n255\n") +
                            std::string{char(0), char(85), char(170), char(255)};
    write_bytes(dir.file("a.pgm"), pgm);
    const ImageGray img = load_grayscale(dir.file("a.pgm"));
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.data[0] == doctest::Approx(0.0));
    CHECK(img.data[1] == doctest::Approx(85.0 / 255.0));
    CHECK(img.data[2] == doctest::Approx(170.0 / 255.0));
    CHECK(img.data[3] == doctest::Approx(1.0));
  }

  SUBCASE("16-bit level 32768 maps to 32768/65535") {
    const std::string pgm = std::string("P5\n1 1\n65535\n") +
                            std::string{char(0x80), char(0x00)};
    write_bytes(dir.file("b.pgm"), pgm);
    const ImageGray img = load_grayscale(dir.file("b.pgm"));
    CHECK(img.data[0] == doctest::Approx(32768.0 / 65535.0).epsilon(1e-12));
  }

  SUBCASE("missing file") {
    CHECK_THROWS_WITH_AS(load_grayscale(dir.file("missing.png")),
                         doctest::Contains("file not found"),
                         std::runtime_error);
  }

  SUBCASE("color input is rejected, not converted") {
    write_rgb_png(dir.file("rgb.png"));
    CHECK_THROWS_AS(load_grayscale(dir.file("rgb.png")), std::runtime_error);
  }

  SUBCASE("unsupported extension") {
    write_bytes(dir.file("a.txt"), "hello");
    CHECK_THROWS_AS(load_grayscale(dir.file("a.txt")), std::runtime_error);
  }
}

TEST_CASE("save/load round trip stays within one quantization step") {
  TempDir dir("image_save");
  const ImageGray img = random_image(17, 11, 42);

  for (const char* name : {"r.png", "r.pgm"}) {
    save_grayscale(img, dir.file(name), 8);
    const ImageGray back = load_grayscale(dir.file(name));
    REQUIRE(back.same_size(img));
    for (size_t i = 0; i < img.data.size(); ++i)
      CHECK(std::fabs(back.data[i] - img.data[i]) <= 1.0 / 255.0);
  }

  SUBCASE("16-bit round trip") {
    save_grayscale(img, dir.file("r16.png"), 16);
    const ImageGray back = load_grayscale(dir.file("r16.png"));
    for (size_t i = 0; i < img.data.size(); ++i)
      CHECK(std::fabs(back.data[i] - img.data[i]) <= 1.0 / 65535.0);
  }

  SUBCASE("all-zero image stays all-zero") {
    save_grayscale(ImageGray(4, 3, 0.0), dir.file("z.png"), 8);
    const ImageGray back = load_grayscale(dir.file("z.png"));
    for (double v : back.data) CHECK(v == 0.0);
  }

  SUBCASE("unwritable path") {
    CHECK_THROWS_AS(save_grayscale(img, "/nonexistent_dir_xyz/out.png"),
                    std::runtime_error);
  }
}

TEST_CASE("flip_horizontal mirrors columns") {
  ImageGray row(3, 1);
  row.data = {0.1, 0.5, 0.9};
  const ImageGray flipped = flip_horizontal(row);
  CHECK(flipped.data == std::vector<double>{0.9, 0.5, 0.1});

  const ImageGray img = random_image(9, 7, 7);
  const ImageGray once = flip_horizontal(img);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      CHECK(once.at(r, c) == img.at(r, img.width - 1 - c));

  // involution, pixel-exact
  CHECK(flip_horizontal(once).data == img.data);
}

TEST_CASE("rotate90 is a quarter turn") {
  ImageGray img(3, 2);
  img.data = {1, 2, 3, 4, 5, 6};
  const ImageGray rot = rotate90(img);
  CHECK(rot.width == 2);
  CHECK(rot.height == 3);
  // top row of the rotation is the first column, bottom-up
  CHECK(rot.at(0, 0) == img.at(1, 0));
  CHECK(rot.at(0, 1) == img.at(0, 0));
  CHECK(rot.at(2, 1) == img.at(0, 2));
}

TEST_CASE("normalize_pair applies one affine map to both images") {
  ImageGray a(2, 1), b(2, 1);
  a.data = {0.2, 0.45};
  b.data = {0.7, 0.3};
  const auto [na, nb] = normalize_pair(a, b);
  CHECK(na.data[0] == doctest::Approx(0.0));
  CHECK(na.data[1] == doctest::Approx(0.5));  // midpoint of [0.2, 0.7]
  CHECK(nb.data[0] == doctest::Approx(1.0));
  CHECK(nb.data[1] == doctest::Approx(0.2));

  SUBCASE("already spanning [0,1] stays unchanged") {
    ImageGray c(2, 1), d(2, 1);
    c.data = {0.0, 0.25};
    d.data = {1.0, 0.75};
    const auto [nc, nd] = normalize_pair(c, d);
    CHECK(nc.data == c.data);
    CHECK(nd.data == d.data);
  }

  SUBCASE("idempotent") {
    const auto [na2, nb2] = normalize_pair(na, nb);
    CHECK(na2.data == na.data);
    CHECK(nb2.data == nb.data);
  }

  SUBCASE("jointly constant pair is an error") {
    CHECK_THROWS_AS(normalize_pair(ImageGray(2, 2, 0.4), ImageGray(2, 2, 0.4)),
                    std::runtime_error);
  }
}

TEST_CASE("sample_pixel_pairs") {
  const ImageGray a = random_image(20, 10, 1);
  const ImageGray b = random_image(20, 10, 2);
  const int total = 200;

  SUBCASE("n = pixel count covers every pixel exactly once") {
    const PixelPairSet set = sample_pixel_pairs(a, b, total, 99);
    std::set<std::pair<int, int>> seen;
    for (const auto& rc : set.indices) seen.insert({rc[0], rc[1]});
    CHECK(int(seen.size()) == total);
  }

  SUBCASE("deterministic given seed") {
    const PixelPairSet s1 = sample_pixel_pairs(a, b, 50, 7);
    const PixelPairSet s2 = sample_pixel_pairs(a, b, 50, 7);
    CHECK(s1.indices == s2.indices);
    CHECK(s1.samples == s2.samples);
    const PixelPairSet s3 = sample_pixel_pairs(a, b, 50, 8);
    CHECK(s1.indices != s3.indices);
  }

  SUBCASE("exclusion of half the pixels yields exactly the complement") {
    const PixelPairSet half = sample_pixel_pairs(a, b, total / 2, 33);
    const PixelPairSet rest =
        sample_pixel_pairs(a, b, total - total / 2, 34, &half);
    std::set<std::pair<int, int>> first, second;
    for (const auto& rc : half.indices) first.insert({rc[0], rc[1]});
    for (const auto& rc : rest.indices) second.insert({rc[0], rc[1]});
    CHECK(int(first.size() + second.size()) == total);
    for (const auto& rc : second) CHECK(first.count(rc) == 0);
  }

  SUBCASE("sample values come from the pixel locations") {
    const PixelPairSet set = sample_pixel_pairs(a, b, 64, 5);
    for (size_t i = 0; i < set.samples.size(); ++i) {
      CHECK(set.samples[i][0] == a.at(set.indices[i][0], set.indices[i][1]));
      CHECK(set.samples[i][1] == b.at(set.indices[i][0], set.indices[i][1]));
    }
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(sample_pixel_pairs(a, b, total + 1, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(sample_pixel_pairs(a, random_image(5, 5, 3), 5, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("bicubic resampling") {
  SUBCASE("kernel weights sum to 1 at random phases") {
    const ImageGray flat(32, 32, 0.37);
    Rng rng(123);
    for (int i = 0; i < 1000; ++i) {
      const double x = rng.uniform(2.0, 29.0);
      const double y = rng.uniform(2.0, 29.0);
      CHECK(std::fabs(bicubic_sample(flat, x, y) - 0.37) < 1e-12);
    }
  }

  SUBCASE("constant image resamples to the same constant") {
    const ImageGray flat(10, 14, 0.61);
    for (double factor : {0.5, 1.0, 2.5, 4.0}) {
      const ImageGray out = bicubic_resample(flat, factor);
      for (double v : out.data) CHECK(v == doctest::Approx(0.61).epsilon(1e-12));
    }
  }

  SUBCASE("factor 1 is the identity") {
    const ImageGray img = random_image(13, 9, 77);
    CHECK(bicubic_resample(img, 1.0).data == img.data);
  }

  SUBCASE("linear ramps are reproduced in the interior") {
    ImageGray ramp(64, 64);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) ramp.at(r, c) = (2.0 * c + r) / 200.0;
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
      const double x = rng.uniform(2.0, 61.0);
      const double y = rng.uniform(2.0, 61.0);
      CHECK(bicubic_sample(ramp, x, y) ==
            doctest::Approx((2.0 * x + y) / 200.0).epsilon(1e-10));
    }
  }

  SUBCASE("upsample x4 then downsample x1/4 on a smooth ramp") {
    ImageGray ramp(100, 100);
    for (int r = 0; r < 100; ++r)
      for (int c = 0; c < 100; ++c) ramp.at(r, c) = (c + r) / 220.0;
    const ImageGray up = bicubic_resample(ramp, 4.0);
    CHECK(up.width == 400);
    const ImageGray back = bicubic_resample(up, 0.25);
    REQUIRE(back.same_size(ramp));
    double max_err = 0.0;
    for (size_t i = 0; i < ramp.data.size(); ++i)
      max_err = std::max(max_err, std::fabs(back.data[i] - ramp.data[i]));
    CHECK(max_err < 0.01);
  }

  SUBCASE("output stays in [0,1] despite overshoot") {
    ImageGray step(20, 1);
    for (int c = 0; c < 20; ++c) step.at(0, c) = c < 10 ? 0.0 : 1.0;
    const ImageGray up = bicubic_resample(step, 4.0);
    for (double v : up.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  SUBCASE("degenerate output size") {
    CHECK_THROWS_AS(bicubic_resample(ImageGray(4, 4, 0.5), 0.01),
                    std::invalid_argument);
    CHECK_THROWS_AS(bicubic_resample(ImageGray(4, 4, 0.5), -1.0),
                    std::invalid_argument);
  }
}
