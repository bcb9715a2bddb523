#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "glian/image_io.hpp"
#include "glian/metrics.hpp"
#include "support/oracles.hpp"

using namespace glian;
using namespace glian::metrics;
using oracle::Gen;

namespace {

Tensor gray(std::size_t h, std::size_t w, double v) { return Tensor({3, h, w}, v); }

/// Blockwise log contrast of the luma image, written out directly.
double eme_oracle(const Tensor& img, std::size_t block, double eps) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  double total = 0.0;
  std::size_t blocks = 0;
  for (std::size_t by = 0; by < h; by += block)
    for (std::size_t bx = 0; bx < w; bx += block) {
      double lo = 1e9, hi = -1e9;
      for (std::size_t y = by; y < std::min(h, by + block); ++y)
        for (std::size_t x = bx; x < std::min(w, bx + block); ++x) {
          const double l = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
          lo = std::min(lo, l);
          hi = std::max(hi, l);
        }
      total += 20.0 * std::log10((hi + eps) / (lo + eps));
      ++blocks;
    }
  return total / static_cast<double>(blocks);
}

/// Order disagreements of max-RGB lightness over all ordered pairs, x1000.
double loe_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.dim(1) * a.dim(2);
  auto light = [n](const Tensor& t, std::size_t i) {
    return std::max({t[i], t[n + i], t[2 * n + i]});
  };
  std::size_t bad = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) bad += (light(a, i) >= light(a, j)) != (light(b, i) >= light(b, j));
  return 1000.0 * static_cast<double>(bad) / static_cast<double>(n * (n - 1));
}

}  // namespace

TEST_SUITE("psnr") {
  TEST_CASE("fixtures") {
    CHECK(psnr(gray(4, 4, 0.3), gray(4, 4, 0.3)) == kPsnrCap);
    CHECK(psnr(gray(4, 4, 0.0), gray(4, 4, 0.5)) == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-12));
    CHECK(std::abs(psnr(gray(4, 4, 0.0), gray(4, 4, 0.5)) - 6.0206) < 1e-4);
    CHECK(psnr(gray(4, 4, 0.0), gray(4, 4, 127.5), 255.0) ==
          doctest::Approx(psnr(gray(4, 4, 0.0), gray(4, 4, 0.5))).epsilon(1e-12));
    CHECK_THROWS_AS(psnr(gray(4, 4, 0.0), gray(4, 5, 0.0)), ShapeError);
  }

  TEST_CASE("halving the MSE adds 10 log10 2 dB") {
    Gen g(1);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor a = g.image(8, 8);
      Tensor b = a, c = a;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = g.uniform(-0.2, 0.2);
        b[i] += d;
        c[i] += d / std::sqrt(2.0);
      }
      CHECK(std::abs(psnr(a, c) - psnr(a, b) - 10.0 * std::log10(2.0)) <= 1e-6);
      CHECK(psnr(a, b) == psnr(b, a));
    }
  }

  TEST_CASE("matches the direct formula on 100 random 16x16 pairs") {
    Gen g(2);
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor a = g.image(16, 16), b = g.image(16, 16);
      CHECK(std::abs(psnr(a, b) - oracle::psnr(a, b, 1.0)) <= 1e-6);
    }
  }
}

TEST_SUITE("ssim") {
  TEST_CASE("matches a direct windowed implementation on 100 random 16x16 pairs") {
    Gen g(3);
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor a = g.image(16, 16);
      Tensor b = g.coin() ? g.image(16, 16) : a;
      for (auto& v : b.data()) v = std::clamp(v + g.uniform(-0.1, 0.1), 0.0, 1.0);
      CHECK(std::abs(ssim(a, b) - oracle::ssim(a, b)) <= 1e-4);
    }
  }

  TEST_CASE("identical images score one") {
    Gen g(4);
    const Tensor a = g.image(20, 13);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_SUITE("eme") {
  TEST_CASE("a constant image has no contrast") {
    for (double v : {0.0, 0.2, 1.0}) CHECK(eme(gray(16, 24, v)) == 0.0);
  }

  TEST_CASE("one block with max 200/255 and min 50/255") {
    Tensor img = gray(8, 8, 120.0 / 255.0);
    img.at(0, 0, 0) = img.at(1, 0, 0) = img.at(2, 0, 0) = 200.0 / 255.0;
    img.at(0, 5, 3) = img.at(1, 5, 3) = img.at(2, 5, 3) = 50.0 / 255.0;
    CHECK(eme(img, 8, 0.0) == doctest::Approx(20.0 * std::log10(4.0)).epsilon(1e-12));
    CHECK(std::abs(eme(img, 8, 0.0) - 12.0412) < 1e-4);
    CHECK(std::abs(eme(img) - 12.0412) < 5e-3);
  }

  TEST_CASE("matches the blockwise oracle, including ragged edge blocks") {
    Gen g(5);
    for (int trial = 0; trial < 30; ++trial) {
      const Tensor img = g.image(g.index(3, 30), g.index(3, 30), 0.05, 1.0);
      const std::size_t block = g.index(2, 9);
      CHECK(eme(img, block) == doctest::Approx(eme_oracle(img, block, 1e-4)).epsilon(1e-10));
    }
    CHECK_THROWS(eme(gray(8, 8, 0.5), 0));
  }

  TEST_CASE("scaling the image leaves it unchanged as eps goes to zero") {
    Gen g(6);
    const Tensor img = g.image(16, 16, 0.1, 0.5);
    for (double c : {0.3, 1.7}) {
      Tensor scaled = img;
      for (auto& v : scaled.data()) v *= c;
      CHECK(eme(scaled, 8, 1e-12) == doctest::Approx(eme(img, 8, 1e-12)).epsilon(1e-9));
    }
  }
}

TEST_SUITE("loe") {
  TEST_CASE("order-preserving curves give zero") {
    Gen g(7);
    const Tensor img = g.image(12, 12);
    CHECK(loe(img, img) == 0.0);
    Tensor curved = img;
    for (auto& v : curved.data()) v = std::pow(v, 0.45);
    CHECK(loe(img, curved) == 0.0);
    CHECK(loe(img, curved, 0) == 0.0);
  }

  TEST_CASE("inversion disagrees on every pair of distinct values") {
    Gen g(8);
    const Tensor img = g.image(6, 7);
    Tensor inv = img;
    for (auto& v : inv.data()) v = 1.0 - v;
    // Max-RGB of the inverse is not the inverse of max-RGB, so use grey pixels.
    Tensor grey({3, 6, 7});
    for (std::size_t i = 0; i < 42; ++i) grey[i] = grey[42 + i] = grey[84 + i] = img[i];
    Tensor grey_inv = grey;
    for (auto& v : grey_inv.data()) v = 1.0 - v;
    CHECK(loe(grey, grey_inv, 0) == doctest::Approx(1000.0).epsilon(1e-12));
    CHECK(loe(img, inv, 0) == doctest::Approx(loe_oracle(img, inv)).epsilon(1e-12));
  }

  TEST_CASE("matches the all-pairs oracle and stays in [0, 1000]") {
    Gen g(9);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t h = g.index(2, 8), w = g.index(2, 8);
      const Tensor a = g.image(h, w), b = g.image(h, w);
      const double v = loe(a, b, 0);
      CHECK(v == doctest::Approx(loe_oracle(a, b)).epsilon(1e-12));
      const double sampled = loe(a, b, 20, 3);
      CHECK(sampled >= 0.0);
      CHECK(sampled <= 1000.0);
      CHECK(sampled == loe(a, b, 20, 3));
    }
    CHECK_THROWS_AS(loe(gray(4, 4, 0), gray(4, 3, 0)), ShapeError);
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("matching directories produce per-image rows and their means") {
    Gen g(10);
    const auto root = oracle::scratch_dir("metrics_eval");
    for (const char* d : {"pred", "ref", "orig"}) std::filesystem::create_directories(root / d);
    for (const char* name : {"a.png", "b.png"}) {
      const Tensor img = g.image(12, 12);
      io::write_image(root / "pred" / name, img);
      io::write_image(root / "ref" / name, img);
      io::write_image(root / "orig" / name, img);
    }
    io::write_image(root / "ref" / "b.png", g.image(12, 12));
    const auto report = evaluate_pairs(root / "pred", root / "ref", root / "orig");
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].filename == "a.png");
    CHECK(report.rows[0].psnr == kPsnrCap);
    CHECK(report.rows[0].loe == 0.0);
    CHECK(report.rows[1].psnr < 30.0);
    const auto m = report.mean();
    CHECK(m.filename == "mean");
    CHECK(m.psnr == doctest::Approx((report.rows[0].psnr + report.rows[1].psnr) / 2).epsilon(1e-15));
    CHECK(m.ssim == doctest::Approx((report.rows[0].ssim + report.rows[1].ssim) / 2).epsilon(1e-15));

    std::ostringstream csv;
    write_report_csv(csv, report);
    std::istringstream lines(csv.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "filename,psnr,ssim,eme,loe");
    std::getline(lines, line);
    CHECK(line.rfind("a.png,99,", 0) == 0);
    std::getline(lines, line);
    std::getline(lines, line);
    CHECK(line.rfind("# mean,", 0) == 0);

    std::ostringstream table;
    write_report_table(table, report);
    CHECK(table.str().find("PSNR") != std::string::npos);
  }

  TEST_CASE("unmatched or empty directories are errors") {
    Gen g(11);
    const auto root = oracle::scratch_dir("metrics_mismatch");
    for (const char* d : {"pred", "ref", "orig"}) std::filesystem::create_directories(root / d);
    CHECK_THROWS_AS(evaluate_pairs(root / "pred", root / "ref", root / "orig"), EvaluationError);
    io::write_image(root / "pred" / "x.png", g.image(8, 8));
    io::write_image(root / "ref" / "x.png", g.image(8, 8));
    CHECK_THROWS_WITH_AS(evaluate_pairs(root / "pred", root / "ref", root / "orig"),
                         doctest::Contains("x.png missing from orig"), EvaluationError);
    CHECK_THROWS_AS(evaluate_pairs(root / "nope", root / "ref", root / "orig"), EvaluationError);
  }
}
