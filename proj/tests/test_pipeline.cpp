#include <doctest.h>

#include <set>

#include "glian/model.hpp"
#include "glian/patching.hpp"
#include "support/oracles.hpp"

using namespace glian;
using oracle::Gen;

namespace {

std::uint64_t conv_params(std::uint64_t k, std::uint64_t in, std::uint64_t out, bool bias = true) {
  return k * k * in * out + (bias ? out : 0);
}

/// Parameter count written out layer by layer for width c and embed dim d.
std::uint64_t expected_params(std::uint64_t c, std::uint64_t d) {
  std::uint64_t lcen = conv_params(3, 3, c) + c;  // stem + slope
  for (std::uint64_t k = 1; k <= 4; ++k) {
    if (k > 1) lcen += conv_params(1, k * c, c);
    lcen += conv_params(3, c, c) + c + conv_params(3, c, c) + conv_params(3, c, c, false) + c;  // EM
    lcen += conv_params(1, c, c) + conv_params(1, c, c) + c;                                   // FM
    lcen += conv_params(1, c, 3);                                                              // head
  }
  const std::uint64_t ldm = conv_params(3, 3, 8) + 8 + conv_params(5, 8, 8) + 8 + 8 + 1;
  const std::uint64_t gign = conv_params(3, 3, c) + c + conv_params(3, c, c) + c + conv_params(1, c, c) + c +
                             (d * c + d) + d * (c + 2) + (d * c + d) + (c * d + c);
  const std::uint64_t refine = conv_params(1, 3, 16) + conv_params(3, 16, 16) + 16 + conv_params(1, 16, 16) +
                               conv_params(3, 16, 16) + 16 + conv_params(3, 16, 3);
  return lcen + ldm + gign + refine;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("default parameter count matches the layer-by-layer tally") {
    const Model m = make_model({});
    CHECK(m.parameter_count() == expected_params(16, 32));
    CHECK(m.parameter_count() == 45744);
    CHECK(m.parameter_count() < 500000);
    const Model wide = make_model({24, 0.7, 16, 48});
    CHECK(wide.parameter_count() == expected_params(24, 48));
  }

  TEST_CASE("names are unique and find() resolves them") {
    Model m = make_model({});
    std::set<std::string> names;
    for (auto* p : m.parameters()) {
      CHECK(names.insert(p->name).second);
      CHECK(m.find(p->name) == p);
    }
    CHECK(m.find("no.such.tensor") == nullptr);
  }

  TEST_CASE("invalid configurations are rejected") {
    ModelConfig c;
    c.use_gign = false;
    CHECK_THROWS_AS(make_model(c), std::invalid_argument);
    c = {};
    c.patch_size = 18;
    CHECK_THROWS_AS(make_model(c), std::invalid_argument);
    c = {};
    c.theta = 1.5;
    CHECK_THROWS_AS(make_model(c), std::invalid_argument);
    c = {};
    c.tau = -0.1;
    CHECK_THROWS_AS(make_model(c), std::invalid_argument);
  }

  TEST_CASE("toggling a module leaves the other modules' initialisation unchanged") {
    ModelConfig a, b;
    b.use_refine = false;
    b.use_gaem = false;
    const Model ma = make_model(a), mb = make_model(b);
    const auto pa = ma.parameters(), pb = mb.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  }
}

TEST_SUITE("pipeline") {
  TEST_CASE("output keeps the input extent and stays in [0,1]") {
    Gen g(1);
    const Model m = make_model({});
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{16, 16}, {20, 37}, {33, 17}}) {
      const auto e = enhance_image(g.image(h, w), m);
      CHECK(e.image.shape() == Shape{3, h, w});
      CHECK(e.exit_stage.size() == e.rows * e.cols);
      for (double v : e.image.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }

  TEST_CASE("enhancement is deterministic") {
    Gen g(2);
    const Model m = make_model({});
    const Tensor img = g.image(24, 40);
    const auto a = enhance_image(img, m), b = enhance_image(img, m);
    CHECK(a.image == b.image);
    CHECK(a.exit_stage == b.exit_stage);
    CHECK(a.cost.flops == b.cost.flops);
  }

  TEST_CASE("without early exit every patch reaches stage 4") {
    Gen g(3);
    const auto e = enhance_image(g.image(32, 48), make_model({}), false);
    for (auto s : e.exit_stage) CHECK(s == 4);
    CHECK(e.cost.per_patch_exit_depth == std::vector<std::uint64_t>{0, 0, 0, 6});
  }

  TEST_CASE("every ablation runs and bypasses only its module") {
    Gen g(4);
    const Tensor img = g.image(32, 32);
    for (int mask = 0; mask < 16; ++mask) {
      ModelConfig c;
      c.use_ldm = mask & 1;
      c.use_gign = mask & 2;
      c.use_gaem = (mask & 4) && c.use_gign;
      c.use_refine = mask & 8;
      const Model m = make_model(c);
      Tape tape(false);
      const auto out = pipeline_forward(tape, img, m);
      CHECK(out.image.shape() == img.shape());
      CHECK(out.patches.shape() == Shape{4, 3, 16, 16});
      if (!c.use_ldm) {
        for (auto s : out.exit_stage) CHECK(s == 4);
      }
    }
  }

  TEST_CASE("refine off returns the merged patch estimates") {
    Gen g(5);
    ModelConfig c;
    c.use_refine = false;
    const Model m = make_model(c);
    const Tensor img = g.image(20, 28);
    Tape tape(false);
    const auto out = pipeline_forward(tape, img, m);
    patching::PatchGrid grid = patching::split_patches(img, 16);
    grid.patches = out.patches.value();
    CHECK(patching::merge_patches(grid) == out.image.value());
  }

  TEST_CASE("a fresh refine module does not change the merged image") {
    Gen g(6);
    const Model m = make_model({});
    const Tensor img = g.image(16, 32);
    Tape tape(false);
    PipelineOptions with, without;
    without.refine = false;
    const Tensor a = pipeline_forward(tape, img, m, with).image.value();
    const Tensor b = pipeline_forward(tape, img, m, without).image.value();
    CHECK(a == b);
  }

  TEST_CASE("forced stages override the gate") {
    Gen g(7);
    const Model m = make_model({});
    Tape tape(false);
    PipelineOptions o;
    o.forced_stage = {1, 2, 3, 4};
    const auto out = pipeline_forward(tape, g.image(32, 32), m, o);
    CHECK(out.exit_stage == o.forced_stage);
  }
}

TEST_SUITE("cost accounting") {
  TEST_CASE("shallower exits cost less and parameters ignore resolution") {
    const Model m = make_model({});
    std::uint64_t prev = 0;
    for (std::size_t k = 1; k <= 4; ++k) {
      const auto r = pipeline_cost(m, 32, 32, std::vector<std::size_t>(4, k), true);
      CHECK(r.flops > prev);
      prev = r.flops;
    }
    CHECK(pipeline_cost(m, 32, 32, std::vector<std::size_t>(4, 4), false).params ==
          pipeline_cost(m, 64, 48, std::vector<std::size_t>(12, 4), false).params);
    CHECK_THROWS_AS(pipeline_cost(m, 32, 32, {1, 2}, true), std::invalid_argument);
  }

  TEST_CASE("the exit histogram counts patches per stage") {
    const Model m = make_model({});
    const auto r = pipeline_cost(m, 32, 48, {1, 1, 2, 4, 4, 4}, true);
    CHECK(r.per_patch_exit_depth == std::vector<std::uint64_t>{2, 1, 0, 3});
  }
}
