// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "glian/gign.hpp"
#include "glian/lcen.hpp"
#include "glian/metrics.hpp"
#include "glian/model.hpp"
#include "glian/nn.hpp"
#include "glian/patching.hpp"
#include "glian/refine.hpp"
#include "glian/training.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/probes.hpp"

using namespace glian;
using oracle::Gen;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- 1: gradient suite -------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  using probe::leaf;
  std::vector<std::pair<std::string, std::function<GradCheckReport()>>> checks;
  Gen g(1);

  // Piecewise-linear inputs are drawn away from their kinks.
  checks.emplace_back("conv2d", [&] {
    Parameter x = leaf("x", g.tensor({2, 3, 6, 5})), w = leaf("w", g.tensor({4, 3, 3, 3})), b = leaf("b", g.tensor({4}));
    return probe::check([&](Tape& t) { Var bias = t.param(b); return ag::conv2d(t.param(x), t.param(w), &bias, {2, 1}); },
                        {&x, &w, &b});
  });
  checks.emplace_back("cdc_conv2d", [&] {
    Parameter x = leaf("x", g.tensor({1, 2, 5, 6})), w = leaf("w", g.tensor({3, 2, 3, 3}));
    return probe::check([&](Tape& t) { return ag::cdc_conv2d(t.param(x), t.param(w), 0.7); }, {&x, &w});
  });
  checks.emplace_back("prelu", [&] {
    Parameter x = leaf("x", g.away_from_zero({2, 3, 4, 4})), a = leaf("a", g.tensor({3}, 0.05, 0.5));
    return probe::check([&](Tape& t) { return ag::prelu(t.param(x), t.param(a)); }, {&x, &a});
  });
  checks.emplace_back("sigmoid", [&] {
    Parameter x = leaf("x", g.tensor({2, 3, 4}, -3, 3));
    return probe::check([&](Tape& t) { return ag::sigmoid(t.param(x)); }, {&x});
  });
  checks.emplace_back("avg pool", [&] {
    Parameter x = leaf("x", g.tensor({2, 3, 4, 4}));
    return probe::check([&](Tape& t) { return ag::global_pool(t.param(x), nn::PoolMode::kAvg); }, {&x});
  });
  checks.emplace_back("max pool", [&] {
    Parameter x = leaf("x", g.tensor({2, 3, 4, 4}));
    return probe::check([&](Tape& t) { return ag::global_pool(t.param(x), nn::PoolMode::kMax); }, {&x});
  });
  checks.emplace_back("linear", [&] {
    Parameter v = leaf("v", g.tensor({5, 6})), w = leaf("w", g.tensor({4, 6})), b = leaf("b", g.tensor({4}));
    return probe::check([&](Tape& t) { return ag::linear(t.param(v), t.param(w), t.param(b)); }, {&v, &w, &b});
  });
  checks.emplace_back("cross attention", [&] {
    Parameter q = leaf("q", g.tensor({3, 4})), k = leaf("k", g.tensor({5, 4})), v = leaf("v", g.tensor({5, 2}));
    return probe::check([&](Tape& t) { return ag::cross_attention(t.param(q), t.param(k), t.param(v)); }, {&q, &k, &v});
  });
  checks.emplace_back("channel broadcast", [&] {
    Parameter a = leaf("a", g.tensor({2, 3, 3, 3})), s = leaf("s", g.tensor({2, 3})), u = leaf("u", g.tensor({2, 3}));
    return probe::check(
        [&](Tape& t) { return ag::add_channels(ag::mul_channels(t.param(a), t.param(s)), t.param(u)); }, {&a, &s, &u});
  });
  checks.emplace_back("concat, gather, scatter", [&] {
    Parameter a = leaf("a", g.tensor({3, 2, 3, 3})), b = leaf("b", g.tensor({3, 1, 3, 3}));
    const std::vector<std::size_t> rows{2, 0};
    return probe::check(
        [&](Tape& t) {
          Var c = ag::concat_channels({t.param(a), t.param(b)});
          return ag::scatter_batch({{ag::gather_batch(c, rows), {1, 2}}, {ag::gather_batch(c, std::vector<std::size_t>{1}), {0}}}, 3);
        },
        {&a, &b});
  });
  checks.emplace_back("to_tokens", [&] {
    Parameter m = leaf("m", g.tensor({2, 6, 7}));
    return probe::check([&](Tape& t) { return ag::to_tokens(t.param(m)); }, {&m});
  });
  checks.emplace_back("crop_windows", [&] {
    Parameter m = leaf("m", g.tensor({2, 6, 7}));
    return probe::check([&](Tape& t) { return ag::crop_windows(t.param(m), {{0, 0}, {2, 3}, {3, 4}}, 3, 3); }, {&m});
  });
  checks.emplace_back("assemble_tiles", [&] {
    Parameter tiles = leaf("tiles", g.tensor({6, 2, 4, 4}));
    return probe::check([&](Tape& t) { return ag::assemble_tiles(t.param(tiles), 2, 3, 7, 10); }, {&tiles});
  });
  checks.emplace_back("clamp01", [&] {
    Tensor c({30});
    for (std::size_t i = 0; i < c.size(); ++i)
      c[i] = i % 3 == 0 ? g.uniform(0.1, 0.9) : (g.coin() ? g.uniform(1.1, 2) : g.uniform(-1, -0.1));
    Parameter x = leaf("x", c);
    return probe::check([&](Tape& t) { return ag::clamp01(t.param(x)); }, {&x});
  });
  checks.emplace_back("l1 loss", [&] {
    const Tensor target = g.tensor({2, 3, 4});
    Tensor pred = target;
    for (auto& v : pred.data()) v += (g.coin() ? 1 : -1) * g.uniform(0.05, 0.5);
    Parameter p = leaf("p", pred);
    return probe::check([&](Tape& t) { return ag::l1_loss(t.param(p), target); }, {&p});
  });
  checks.emplace_back("ssim loss", [&] {
    Parameter img = leaf("img", g.image(14, 15));
    const Tensor ref = g.image(14, 15);
    return probe::check([&](Tape& t) { return ag::ssim(t.param(img), ref); }, {&img});
  });
  checks.emplace_back("cross-entropy", [&] {
    Parameter z = leaf("z", g.tensor({6, 1}, -3, 3));
    return probe::check([&](Tape& t) { return ag::cross_entropy(ag::binary_logits(t.param(z)), {0, 1, 1, 0, 1, 0}); },
                        {&z});
  });
  checks.emplace_back("EM block", [&] {
    auto p = lcen::make_lcen({8, 0.7}, 3);
    auto& em = p.stages[1].em;
    Parameter x = leaf("x", g.tensor({2, 8, 6, 6}));
    return probe::check([&](Tape& t) { return lcen::em_forward(t, t.param(x), em, 0.7); },
                        {&em.conv1_w, &em.conv1_b, &em.act1, &em.conv2_w, &em.conv2_b, &em.cdc_w, &em.act_out, &x});
  });
  checks.emplace_back("FM block", [&] {
    auto p = lcen::make_lcen({6, 0.7}, 8);
    auto& fm = p.stages[3].fm;
    Parameter local = leaf("local", g.tensor({2, 6, 5, 5})), guide = leaf("guide", g.tensor({2, 6, 4, 4}));
    return probe::check([&](Tape& t) { return lcen::fm_fuse(t, t.param(local), t.param(guide), fm); },
                        {&fm.inner_w, &fm.inner_b, &fm.outer_w, &fm.outer_b, &fm.act, &local, &guide});
  });
  checks.emplace_back("LDM", [&] {
    auto ldm = lcen::make_ldm(11);
    const Tensor x = g.tensor({3, 3, 8, 8}, 0, 1);
    return probe::check([&](Tape& t) { return lcen::ldm_logits(t, t.constant(x), ldm); }, ldm.parameters());
  });
  checks.emplace_back("GAEM", [&] {
    auto p = gign::make_gign({6, 8}, 12);
    Parameter emb = leaf("emb", g.tensor({3, 6})), global = leaf("global", g.tensor({6, 2, 3}));
    return probe::check([&](Tape& t) { return gign::gaem_guidance(t, t.param(emb), t.param(global), p).guidance; },
                        {&p.query_w, &p.query_b, &p.key_w, &p.value_w, &p.value_b, &p.out_w, &p.out_b, &emb, &global});
  });
  checks.emplace_back("Refine", [&] {
    auto p = refine::make_refine(3);
    for (auto& v : p.out_w.value.data()) v = g.uniform(-0.02, 0.02);
    const Tensor img = g.image(9, 11, 0.2, 0.8);
    return probe::check([&](Tape& t) { return refine::refine_image(t, t.constant(img), p); }, p.parameters());
  });

  double worst = 0.0;
  std::string worst_name, failures;
  for (auto& [name, run] : checks) {
    const auto r = run();
    if (!r.passed) failures += " " + name + " (" + r.failure + ")";
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = name;
    }
  }
  const double secs = seconds_since(t0);
  return {failures.empty() && worst <= 1e-4 && secs < 120.0,
          fmt("%zu checks, max relative error %.2e (%s), %.1f s", checks.size(), worst, worst_name.c_str(), secs) +
              (failures.empty() ? "" : "; failed:" + failures)};
}

// --- 2: oracle equivalence ----------------------------------------------------------

Outcome oracle_equivalence() {
  Gen g(2);
  double psnr_err = 0.0, ssim_err = 0.0, conv_err = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Tensor a = g.image(16, 16), b = g.image(16, 16);
    psnr_err = std::max(psnr_err, std::abs(metrics::psnr(a, b) - oracle::psnr(a, b, 1.0)));
    ssim_err = std::max(ssim_err, std::abs(metrics::ssim(a, b) - oracle::ssim(a, b)));
  }
  for (int i = 0; i < 50; ++i) {
    const std::size_t ci = g.index(1, 4), co = g.index(1, 4), k = 2 * g.index(0, 2) + 1;
    const std::size_t stride = g.index(1, 2), pad = g.index(0, k / 2);
    const Tensor x = g.tensor({ci, g.index(k, 11), g.index(k, 11)}), w = g.tensor({co, ci, k, k}), b = g.tensor({co});
    conv_err = std::max(conv_err, oracle::max_abs_diff(nn::conv2d(x, w, &b, {stride, pad}),
                                                       oracle::conv2d(x, w, &b, stride, pad)));
  }
  return {psnr_err <= 1e-6 && ssim_err <= 1e-4 && conv_err <= 1e-10,
          fmt("PSNR %.1e, SSIM %.1e over 100 pairs; conv2d %.1e over 50 cases", psnr_err, ssim_err, conv_err)};
}

// --- 3: roundtrips -----------------------------------------------------------------

std::vector<char> bytes_of(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome roundtrips() {
  Gen g(3);
  int exact = 0, ragged = 0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t p = 4 * g.index(2, 5);
    const std::size_t h = g.index(p, 3 * p + 5), w = g.index(p, 3 * p + 5);
    ragged += h % p != 0 || w % p != 0;
    const Tensor img = g.image(h, w);
    exact += patching::merge_patches(patching::split_patches(img, p)) == img;
  }
  const auto dir = oracle::scratch_dir("acceptance_ckpt");
  Model model = make_model({});
  train::Adam adam;
  Gen d(30);
  train::TrainConfig cfg;
  cfg.iterations = 2;
  cfg.batch_size = 4;
  train::run_stage1(model, adam, train::make_patch_dataset({fixture::dark_pair(d, 32, 32)}, 16, {}), cfg);
  train::save_checkpoint(dir / "a.ckpt", model, &adam, {{"stages", "1"}});
  Model other = make_model({.seed = 7});
  train::Adam other_adam;
  const auto info = train::load_checkpoint(dir / "a.ckpt", other, &other_adam);
  train::save_checkpoint(dir / "b.ckpt", other, &other_adam, info.metadata);
  const bool same = bytes_of(dir / "a.ckpt") == bytes_of(dir / "b.ckpt");
  return {exact == 50 && same, fmt("split/merge exact on %d/50 images (%d non-divisible); checkpoint resave %s", exact,
                                   ragged, same ? "byte-identical" : "differs")};
}

// --- 4: stage isolation ---------------------------------------------------------------

Outcome stage_isolation() {
  Gen g(4);
  const auto data = train::make_patch_dataset({fixture::bright_pair(g, 32, 32), fixture::bright_pair(g, 32, 32)}, 16, {});
  for (const auto& s : data.samples)
    if (s.level != 3) return {false, "fixture produced a patch below level 3"};
  Model model = make_model({});
  std::vector<Tensor> before;
  for (const auto* p : model.parameters()) before.push_back(p->value);
  train::Adam adam;
  train::TrainConfig cfg;
  cfg.iterations = 10;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-2;
  train::run_stage1(model, adam, data, cfg);
  std::size_t frozen = 0, frozen_same = 0, stage1_moved = 0;
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& grp = params[i]->group;
    if (grp == "stage_2" || grp == "stage_3" || grp == "stage_4") {
      ++frozen;
      frozen_same += params[i]->value == before[i];
    } else if (grp == "stage_1") {
      stage1_moved += params[i]->value != before[i];
    }
  }
  return {frozen > 0 && frozen_same == frozen && stage1_moved > 0,
          fmt("%zu/%zu stage_2..4 tensors bit-identical after 10 steps; %zu stage_1 tensors updated", frozen_same,
              frozen, stage1_moved)};
}

// --- 5: desk-scale learning -----------------------------------------------------------

Outcome desk_learning() {
  Gen g(5);
  auto t0 = Clock::now();
  const auto [train_set, val_set] = train::split_exit_dataset(fixture::separable_exit_data(g, 200, 16), 0.25, 5);
  Model model = make_model({});
  train::Adam adam;
  train::TrainConfig c2;
  c2.stage = 2;
  c2.learning_rate = 1e-2;
  c2.iterations = 150;
  const auto r2 = train::run_stage2(model, adam, train_set, val_set, c2);
  const double t2 = seconds_since(t0);

  t0 = Clock::now();
  const std::vector<train::ImagePair> pair{fixture::dark_pair(g, 64, 64)};
  Model m3 = make_model({});
  train::Adam a3;
  train::TrainConfig c3;
  c3.stage = 3;
  c3.batch_size = 1;
  c3.learning_rate = 1e-3;
  c3.iterations = 2000;
  c3.target_psnr = 30.0;
  const auto r3 = train::run_stage3(m3, a3, pair, c3);
  const double t3 = seconds_since(t0);
  return {r2.accuracy >= 0.95 && t2 < 60.0 && r3.psnr >= 30.0 && r3.iterations <= 2000 && t3 < 600.0,
          fmt("LDM held-out accuracy %.3f in %.1f s; 64x64 overfit %.2f dB after %zu iterations in %.1f s", r2.accuracy,
              t2, r3.psnr, r3.iterations, t3)};
}

// --- 6: early-exit economics ----------------------------------------------------------

/// 64x64 image of 16 patches; the first `bright` (row-major) are well exposed.
Tensor mixed_image(Gen& g, std::size_t bright) {
  Tensor img({3, 64, 64});
  for (std::size_t k = 0; k < 16; ++k) {
    const Tensor patch = fixture::textured(g, 16, 16, k < bright ? 0.8 : 0.1);
    const std::size_t r = k / 4, c = k % 4;
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) img.at(ch, r * 16 + y, c * 16 + x) = patch.at(ch, y, x);
  }
  return img;
}

Outcome early_exit_economics() {
  Gen g(6);
  Model model = make_model({});
  train::Adam adam;
  train::TrainConfig cfg;
  cfg.stage = 2;
  cfg.learning_rate = 1e-2;
  cfg.iterations = 150;
  const auto data = fixture::separable_exit_data(g, 160, 16);
  train::run_stage2(model, adam, data, {}, cfg);

  const Tensor half = mixed_image(g, 8);
  const auto early = enhance_image(half, model, true), full = enhance_image(half, model, false);
  std::string sweep;
  bool monotone = true;
  std::uint64_t prev = 0;
  for (std::size_t bright : {0u, 4u, 8u, 12u, 16u}) {
    const auto e = enhance_image(mixed_image(g, bright), model, true);
    if (bright > 0 && e.cost.flops >= prev) monotone = false;
    prev = e.cost.flops;
    sweep += fmt(" %zu%%:%.1fM", bright * 100 / 16, static_cast<double>(e.cost.flops) * 1e-6);
  }
  return {early.cost.flops < full.cost.flops && monotone,
          fmt("half bright: %.1fM FLOPs with early exit vs %.1fM full depth; sweep", early.cost.flops * 1e-6,
              full.cost.flops * 1e-6) + sweep + (monotone ? "" : " (not strictly decreasing)")};
}

// --- 7: model scale -------------------------------------------------------------------

Outcome model_scale() {
  const auto n = make_model({}).parameter_count();
  return {n < 500000, fmt("default configuration holds %llu parameters (%.6fM)", static_cast<unsigned long long>(n),
                          static_cast<double>(n) * 1e-6)};
}

// --- 8: metric fixtures -----------------------------------------------------------------

Outcome metric_fixtures() {
  Gen g(8);
  const Tensor img = g.image(24, 24);
  Tensor curve = img;
  for (auto& v : curve.data()) v = std::pow(v, 0.6);
  const double loe = metrics::loe(img, curve);
  const double eme = metrics::eme(Tensor({3, 24, 24}, 0.4));
  Tensor b = img, c = img;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double d = g.uniform(-0.2, 0.2);
    b[i] += d;
    c[i] += d / std::sqrt(2.0);
  }
  const double gain = metrics::psnr(img, c) - metrics::psnr(img, b);
  const bool ok = loe == 0.0 && eme == 0.0 && std::abs(gain - 10.0 * std::log10(2.0)) <= 1e-6;
  return {ok, fmt("LOE(x, x^0.6) = %g, EME(constant) = %g, PSNR gain on halved MSE = %.7f dB", loe, eme, gain)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"gradient suite", gradient_suite},
      {"oracle equivalence", oracle_equivalence},
      {"roundtrips", roundtrips},
      {"stage isolation", stage_isolation},
      {"desk-scale learning", desk_learning},
      {"early-exit economics", early_exit_economics},
      {"model scale", model_scale},
      {"metric fixtures", metric_fixtures},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
