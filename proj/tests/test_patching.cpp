#include <doctest.h>

#include <numeric>
#include <sstream>

#include "glian/patching.hpp"
#include "support/oracles.hpp"

using namespace glian;
using namespace glian::patching;
using oracle::Gen;

TEST_SUITE("split and merge") {
  TEST_CASE("64x64 with P=16 is a 4x4 grid without padding") {
    Gen g(1);
    const auto grid = split_patches(g.image(64, 64), 16);
    CHECK(grid.rows == 4);
    CHECK(grid.cols == 4);
    CHECK(grid.count() == 16);
    CHECK(grid.pad_bottom == 0);
    CHECK(grid.pad_right == 0);
    CHECK(grid.patches.shape() == Shape{16, 3, 16, 16});
  }

  TEST_CASE("70x70 with P=16 pads to 80x80 and a 5x5 grid") {
    Gen g(2);
    const auto grid = split_patches(g.image(70, 70), 16);
    CHECK(grid.rows == 5);
    CHECK(grid.cols == 5);
    CHECK(grid.padded_height() == 80);
    CHECK(grid.padded_width() == 80);
    CHECK(grid.pad_bottom + grid.pad_top == 10);
    CHECK(grid.pad_right + grid.pad_left == 10);
  }

  TEST_CASE("roundtrip is bit-exact on random sizes") {
    Gen g(3);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t p = 4 * g.index(2, 5);
      const Tensor img = g.image(g.index(p, 3 * p + 5), g.index(p, 3 * p + 5));
      const auto grid = split_patches(img, p);
      CHECK(grid.count() == grid.rows * grid.cols);
      CHECK(grid.patches.dim(0) == grid.count());
      CHECK(merge_patches(grid) == img);
    }
  }

  TEST_CASE("tiles reproduce the padded image") {
    Gen g(4);
    const Tensor img = g.image(21, 30);
    const auto grid = split_patches(img, 8);
    const Tensor padded = pad_to_multiple(img, 8);
    REQUIRE(padded.shape() == Shape{3, 24, 32});
    for (std::size_t r = 0; r < grid.rows; ++r)
      for (std::size_t c = 0; c < grid.cols; ++c) {
        const Tensor t = grid.patch(r * grid.cols + c);
        for (std::size_t ch = 0; ch < 3; ++ch)
          for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x) CHECK(t.at(ch, y, x) == padded.at(ch, r * 8 + y, c * 8 + x));
      }
    // reflect padding mirrors about the last row/column
    CHECK(padded.at(0, 21, 5) == img.at(0, 19, 5));
    CHECK(padded.at(1, 3, 30) == img.at(1, 3, 28));
  }

  TEST_CASE("replacing one patch changes only its footprint") {
    Gen g(5);
    const Tensor img = g.image(40, 36);
    auto grid = split_patches(img, 16);
    const std::size_t idx = 4;  // row 1, col 1
    grid.set_patch(idx, Tensor({3, 16, 16}));
    const Tensor out = merge_patches(grid);
    REQUIRE(out.shape() == img.shape());
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t y = 0; y < 40; ++y)
        for (std::size_t x = 0; x < 36; ++x) {
          const bool inside = y >= 16 && y < 32 && x >= 16 && x < 32;
          if (inside) {
            CHECK(out.at(ch, y, x) == 0.0);
          } else {
            CHECK(out.at(ch, y, x) == img.at(ch, y, x));
          }
        }
  }

  TEST_CASE("invalid patch sizes and misshapen patches are rejected") {
    Gen g(6);
    const Tensor img = g.image(32, 32);
    CHECK_THROWS(split_patches(img, 4));
    CHECK_THROWS(split_patches(img, 10));
    CHECK_THROWS(split_patches(g.image(12, 40), 16));
    CHECK_THROWS_AS(split_patches(Tensor({1, 32, 32}), 16), ShapeError);
    auto grid = split_patches(img, 16);
    CHECK_THROWS(grid.set_patch(0, Tensor({3, 8, 8})));
    CHECK_THROWS(grid.set_patch(4, Tensor({3, 16, 16})));
    grid.patches = Tensor({3, 3, 16, 16});
    CHECK_THROWS(merge_patches(grid));
  }
}

TEST_SUITE("brightness") {
  TEST_CASE("mean brightness") {
    CHECK(mean_brightness(Tensor({3, 8, 8}, 0.3)) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(mean_brightness(Tensor({3, 8, 8}, 1.0)) == doctest::Approx(1.0).epsilon(1e-15));
    Tensor red({3, 8, 8});
    for (std::size_t i = 0; i < 64; ++i) red[i] = 1.0;
    CHECK(mean_brightness(red) == doctest::Approx(0.299).epsilon(1e-15));
  }

  TEST_CASE("level classification uses half-open intervals") {
    const Thresholds t;
    CHECK(classify_brightness_level(0.1, t) == 0);
    CHECK(classify_brightness_level(0.25, t) == 1);
    CHECK(classify_brightness_level(0.5, t) == 2);
    CHECK(classify_brightness_level(0.75, t) == 3);
    CHECK(classify_brightness_level(0.9, t) == 3);
  }

  TEST_CASE("level is monotone in brightness") {
    Gen g(7);
    for (int trial = 0; trial < 200; ++trial) {
      const double a = g.uniform(0, 1), b = g.uniform(0, 1);
      const double t1 = g.uniform(0.05, 0.3), t2 = t1 + g.uniform(0.05, 0.3), t3 = t2 + g.uniform(0.05, 0.3);
      const Thresholds t{t1, t2, t3};
      CHECK((a <= b) <= (classify_brightness_level(a, t) <= classify_brightness_level(b, t)));
    }
  }

  TEST_CASE("unordered thresholds are a configuration error") {
    CHECK_THROWS_AS(classify_brightness_level(0.5, Thresholds{0.5, 0.4, 0.8}), std::invalid_argument);
    CHECK_THROWS_AS((Thresholds{0.0, 0.4, 0.8}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((Thresholds{0.2, 0.4, 1.0}.validate()), std::invalid_argument);
  }
}

TEST_SUITE("histograms") {
  TEST_CASE("constant image has one bin of frequency one per region") {
    const auto table = brightness_histogram(Tensor({3, 16, 24}, 0.37), 2, 3, 10);
    REQUIRE(table.size() == 6);
    for (const auto& h : table) {
      std::size_t nonzero = 0;
      for (double f : h.frequency) nonzero += f != 0.0;
      CHECK(nonzero == 1);
      CHECK(h.frequency[3] == 1.0);
    }
  }

  TEST_CASE("frequencies are non-negative and sum to one") {
    Gen g(8);
    for (int trial = 0; trial < 20; ++trial) {
      const auto table = brightness_histogram(g.image(g.index(8, 30), g.index(8, 30)), g.index(1, 4),
                                              g.index(1, 4), g.index(2, 20));
      for (const auto& h : table) {
        for (double f : h.frequency) CHECK(f >= 0.0);
        CHECK(std::abs(std::accumulate(h.frequency.begin(), h.frequency.end(), 0.0) - 1.0) <= 1e-9);
      }
    }
  }

  TEST_CASE("two-tone image split on the region boundary gives disjoint histograms") {
    Tensor img({3, 16, 16}, 0.1);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 8; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) img.at(c, y, x) = 0.9;
    const auto table = brightness_histogram(img, 2, 1, 8);
    REQUIRE(table.size() == 2);
    for (std::size_t b = 0; b < 8; ++b) CHECK(table[0].frequency[b] * table[1].frequency[b] == 0.0);
    CHECK(table[0].frequency[0] == 1.0);
    CHECK(table[1].frequency[7] == 1.0);
  }

  TEST_CASE("fewer than two bins are rejected and the table has a header") {
    CHECK_THROWS(brightness_histogram(Tensor({3, 8, 8}, 0.5), 1, 1, 1));
    std::ostringstream out;
    write_histogram_table(out, brightness_histogram(Tensor({3, 8, 8}, 0.5), 1, 1, 2));
    CHECK(out.str().rfind("region,bin_lower,frequency\n", 0) == 0);
  }
}
