#include "glian/lcen.hpp"

#include <numeric>
#include <stdexcept>

#include "glian/init.hpp"

namespace glian::lcen {
namespace {

Var bind(Tape& t, const Parameter& p) { return t.param(p); }

Var conv(Tape& t, Var x, const Parameter& w, const Parameter& b, std::size_t pad,
         std::size_t stride = 1) {
  Var bias = bind(t, b);
  return ag::conv2d(x, bind(t, w), &bias, {stride, pad});
}

template <class Self, class Fn>
void for_each_param(Self& p, Fn&& fn) {
  fn(p.stem_w);
  fn(p.stem_b);
  fn(p.stem_act);
  for (auto& s : p.stages) {
    if (s.compress_w) {
      fn(*s.compress_w);
      fn(*s.compress_b);
    }
    for (auto* q : {&s.em.conv1_w, &s.em.conv1_b, &s.em.act1, &s.em.conv2_w, &s.em.conv2_b,
                         &s.em.cdc_w, &s.em.act_out, &s.fm.inner_w, &s.fm.inner_b, &s.fm.outer_w,
                         &s.fm.outer_b, &s.fm.act, &s.head_w, &s.head_b}) {
      fn(*q);
    }
  }
}

Tensor ones_nc(std::size_t n, std::size_t c) { return Tensor({n, c}, 1.0); }

}  // namespace

std::string stage_group(std::size_t stage) { return "stage_" + std::to_string(stage); }

std::vector<Parameter*> LcenParams::parameters() {
  std::vector<Parameter*> out;
  for_each_param(*this, [&](Parameter& p) { out.push_back(&p); });
  return out;
}

std::vector<const Parameter*> LcenParams::parameters() const {
  std::vector<const Parameter*> out;
  for_each_param(*this, [&](const Parameter& p) { out.push_back(&p); });
  return out;
}

LcenParams make_lcen(const LcenConfig& config, std::uint64_t seed) {
  if (config.width == 0) throw std::invalid_argument("lcen width must be positive");
  if (!(config.theta >= 0.0 && config.theta <= 1.0)) {
    throw std::invalid_argument("cdc theta must lie in [0,1]");
  }
  const std::size_t c = config.width;
  ParamFactory f(seed, stage_group(1));
  LcenParams p;
  p.config = config;
  p.stem_w = f.conv_weight("lcen.stem.w", c, 3, 3);
  p.stem_b = f.constant("lcen.stem.b", {c}, 0.0);
  p.stem_act = f.constant("lcen.stem.act", {c}, 0.25);
  for (std::size_t k = 1; k <= kStages; ++k) {
    f.set_group(stage_group(k));
    const std::string pre = "lcen.stage" + std::to_string(k) + ".";
    Stage& s = p.stages[k - 1];
    if (k > 1) {
      s.compress_w = f.conv_weight(pre + "compress.w", c, k * c, 1);
      s.compress_b = f.constant(pre + "compress.b", {c}, 0.0);
    }
    s.em.conv1_w = f.conv_weight(pre + "em.conv1.w", c, c, 3);
    s.em.conv1_b = f.constant(pre + "em.conv1.b", {c}, 0.0);
    s.em.act1 = f.constant(pre + "em.act1", {c}, 0.25);
    s.em.conv2_w = f.conv_weight(pre + "em.conv2.w", c, c, 3, 0.5);
    s.em.conv2_b = f.constant(pre + "em.conv2.b", {c}, 0.0);
    s.em.cdc_w = f.conv_weight(pre + "em.cdc.w", c, c, 3, 0.5);
    s.em.act_out = f.constant(pre + "em.act_out", {c}, 0.25);
    s.fm.inner_w = f.conv_weight(pre + "fm.inner.w", c, c, 1);
    s.fm.inner_b = f.constant(pre + "fm.inner.b", {c}, 0.0);
    s.fm.outer_w = f.conv_weight(pre + "fm.outer.w", c, c, 1, 0.5);
    s.fm.outer_b = f.constant(pre + "fm.outer.b", {c}, 0.0);
    s.fm.act = f.constant(pre + "fm.act", {c}, 0.25);
    s.head_w = f.conv_weight(pre + "head.w", 3, c, 1, 0.1);
    s.head_b = f.constant(pre + "head.b", {3}, 0.0);
  }
  return p;
}

std::vector<Parameter*> LdmParams::parameters() {
  return {&conv3_w, &conv3_b, &act3, &conv5_w, &conv5_b, &act5, &fc_w, &fc_b};
}

std::vector<const Parameter*> LdmParams::parameters() const {
  return {&conv3_w, &conv3_b, &act3, &conv5_w, &conv5_b, &act5, &fc_w, &fc_b};
}

LdmParams make_ldm(std::uint64_t seed) {
  ParamFactory f(seed, "ldm");
  LdmParams p;
  p.conv3_w = f.conv_weight("ldm.conv3.w", kLdmWidth, 3, 3);
  p.conv3_b = f.constant("ldm.conv3.b", {kLdmWidth}, 0.0);
  p.act3 = f.constant("ldm.act3", {kLdmWidth}, 0.25);
  p.conv5_w = f.conv_weight("ldm.conv5.w", kLdmWidth, kLdmWidth, 5);
  p.conv5_b = f.constant("ldm.conv5.b", {kLdmWidth}, 0.0);
  p.act5 = f.constant("ldm.act5", {kLdmWidth}, 0.25);
  p.fc_w = f.fc_weight("ldm.fc.w", 1, kLdmWidth, 0.1);
  // An untrained gate keeps patches in the network (p ~ 0.12).
  p.fc_b = f.constant("ldm.fc.b", {1}, -2.0);
  return p;
}

Var em_forward(Tape& tape, Var x, const EmBlock& em, double theta) {
  Var h = ag::prelu(conv(tape, x, em.conv1_w, em.conv1_b, 1), bind(tape, em.act1));
  h = conv(tape, h, em.conv2_w, em.conv2_b, 1);
  Var detail = ag::cdc_conv2d(x, bind(tape, em.cdc_w), theta);
  return ag::prelu(ag::add(h, detail), bind(tape, em.act_out));
}

Var fm_modulate(Tape& tape, Var local, Var scale, Var shift, const FmBlock& fm) {
  Var h = conv(tape, local, fm.inner_w, fm.inner_b, 0);
  h = ag::mul_channels(h, scale);
  h = conv(tape, h, fm.outer_w, fm.outer_b, 0);
  return ag::prelu(ag::add_channels(h, shift), bind(tape, fm.act));
}

Var fm_fuse(Tape& tape, Var local, Var guidance, const FmBlock& fm) {
  const auto dl = as_nchw(local.value());
  const auto dg = as_nchw(guidance.value());
  if (dg.n != dl.n || dg.c != dl.c) {
    throw ShapeError("guidance " + shape_string(guidance.shape()) + " does not match local feature " +
                     shape_string(local.shape()));
  }
  Var scale = ag::global_pool(guidance, nn::PoolMode::kAvg);
  Var shift = ag::global_pool(guidance, nn::PoolMode::kMax);
  return fm_modulate(tape, local, scale, shift, fm);
}

Var ldm_logits(Tape& tape, Var patches, const LdmParams& ldm) {
  if (patches.value().rank() != 4) throw ShapeError("ldm expects patches [N,3,P,P]");
  Var h = ag::prelu(conv(tape, patches, ldm.conv3_w, ldm.conv3_b, 1), bind(tape, ldm.act3));
  h = ag::prelu(conv(tape, h, ldm.conv5_w, ldm.conv5_b, 2), bind(tape, ldm.act5));
  return ag::linear(ag::global_pool(h, nn::PoolMode::kAvg), bind(tape, ldm.fc_w),
                    bind(tape, ldm.fc_b));
}

std::vector<double> ldm_probabilities(const Tensor& patches, const LdmParams& ldm) {
  Tape tape(false);
  const Tensor batch = patches.rank() == 3 ? patches.reshaped({1, patches.dim(0), patches.dim(1),
                                                               patches.dim(2)})
                                           : patches;
  Var logits = ldm_logits(tape, tape.constant(batch), ldm);
  const Tensor p = nn::sigmoid(logits.value());
  return {p.data().begin(), p.data().end()};
}

ExitDecision ldm_decide(const Tensor& patch, const LdmParams& ldm, double tau, std::size_t stage) {
  if (patch.rank() != 3 || patch.dim(1) < 8 || patch.dim(2) < 8) {
    throw ShapeError("ldm expects a [3,P,P] patch with P >= 8");
  }
  const double p = ldm_probabilities(patch, ldm).front();
  return {p, p >= tau, stage};
}

LcenOutput lcen_forward(Tape& tape, Var patches, Var guidance, const LcenParams& params,
                        const ExitControl& control) {
  const auto dims = as_nchw(patches.value());
  if (patches.value().rank() != 4 || dims.c != 3) {
    throw ShapeError("lcen expects patches [N,3,P,P], got " + shape_string(patches.shape()));
  }
  const std::size_t n = dims.n;
  const bool forced = !control.forced_stage.empty();
  if (forced && control.forced_stage.size() != n) {
    throw std::invalid_argument("forced exit stages must cover every patch");
  }
  if (forced) {
    for (auto s : control.forced_stage) {
      if (s < 1 || s > kStages) throw std::invalid_argument("forced exit stage out of range");
    }
  }
  if (!forced && control.early_exit && control.ldm == nullptr) {
    throw std::invalid_argument("early exit requires LDM parameters");
  }

  LcenOutput out;
  out.exit_stage.assign(n, 0);
  out.exit_probability.assign(n, 1.0);

  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), 0);
  Var x = patches;
  Var guid = guidance;
  Var stem = ag::prelu(conv(tape, x, params.stem_w, params.stem_b, 1), tape.param(params.stem_act));
  std::vector<Var> history{stem};
  std::vector<std::pair<Var, std::vector<std::size_t>>> parts;

  for (std::size_t k = 1; k <= kStages && !active.empty(); ++k) {
    const Stage& st = params.stages[k - 1];
    Var in = k == 1 ? stem : conv(tape, ag::concat_channels(history), *st.compress_w, *st.compress_b, 0);
    Var e = em_forward(tape, in, st.em, params.config.theta);
    Var f;
    if (guid.valid()) {
      f = fm_fuse(tape, e, guid, st.fm);
    } else {
      const std::size_t m = active.size(), c = params.config.width;
      f = fm_modulate(tape, e, tape.constant(ones_nc(m, c)), tape.constant(Tensor({m, c})), st.fm);
    }
    history.push_back(f);
    Var est = ag::clamp01(ag::add(x, conv(tape, f, st.head_w, st.head_b, 0)));

    // Local indices (into the active batch) that leave now.
    std::vector<std::size_t> leave, stay;
    std::vector<double> prob(active.size(), 1.0);
    if (k == kStages) {
      leave.resize(active.size());
      std::iota(leave.begin(), leave.end(), 0);
    } else if (forced) {
      for (std::size_t i = 0; i < active.size(); ++i)
        (control.forced_stage[active[i]] == k ? leave : stay).push_back(i);
    } else if (control.early_exit) {
      prob = ldm_probabilities(est.value(), *control.ldm);
      for (std::size_t i = 0; i < active.size(); ++i)
        (prob[i] >= control.tau ? leave : stay).push_back(i);
    } else {
      stay.resize(active.size());
      std::iota(stay.begin(), stay.end(), 0);
    }

    if (!leave.empty()) {
      std::vector<std::size_t> global;
      for (auto i : leave) {
        global.push_back(active[i]);
        out.exit_stage[active[i]] = k;
        out.exit_probability[active[i]] = prob[i];
      }
      Var taken = leave.size() == active.size() ? est : ag::gather_batch(est, leave);
      parts.emplace_back(taken, std::move(global));
    }
    if (stay.size() != active.size() && !stay.empty()) {
      for (auto& h : history) h = ag::gather_batch(h, stay);
      x = ag::gather_batch(x, stay);
      if (guid.valid()) guid = ag::gather_batch(guid, stay);
    }
    std::vector<std::size_t> next;
    for (auto i : stay) next.push_back(active[i]);
    active = std::move(next);
  }
  out.estimate = parts.size() == 1 && parts[0].second.size() == n &&
                         std::is_sorted(parts[0].second.begin(), parts[0].second.end())
                     ? parts[0].first
                     : ag::scatter_batch(parts, n);
  return out;
}

PatchResult enhance_patch(const Tensor& patch, const Tensor& guidance, const LcenParams& params,
                          const LdmParams& ldm, bool early_exit, double tau) {
  if (patch.rank() != 3 || patch.dim(0) != 3) throw ShapeError("enhance_patch expects [3,P,P]");
  const std::size_t p = patch.dim(1);
  Tape tape(false);
  Var x = tape.constant(patch.reshaped({1, 3, p, patch.dim(2)}));
  Var g;
  if (!guidance.empty()) {
    g = tape.constant(guidance.reshaped({1, guidance.dim(0), guidance.dim(1), guidance.dim(2)}));
  }
  ExitControl control{early_exit, &ldm, tau, {}};
  auto out = lcen_forward(tape, x, g, params, control);
  PatchResult r;
  r.patch = out.estimate.value().reshaped({3, p, patch.dim(2)});
  r.exit_stage = out.exit_stage[0];
  r.flops = cost::count_cost(describe_patch(params, p, r.exit_stage, early_exit)).flops;
  return r;
}

std::vector<cost::LayerInstance> describe_ldm(std::size_t patch_size) {
  using cost::LayerKind;
  const std::size_t p = patch_size, w = kLdmWidth;
  return {
      {"ldm.conv3", {LayerKind::kConv, 3, 3, w, 1, 1}, p, p},
      {"ldm.act3", {LayerKind::kPrelu, 1, w, w}, p, p},
      {"ldm.conv5", {LayerKind::kConv, 5, w, w, 1, 2}, p, p},
      {"ldm.act5", {LayerKind::kPrelu, 1, w, w}, p, p},
      {"ldm.pool", {LayerKind::kPool, 1, w, w, 1, 0, 0.0, false}, p, p},
      {"ldm.fc", {LayerKind::kFc, 1, w, 1}, 1, 1},
      {"ldm.sigmoid", {LayerKind::kSigmoid, 1, 1, 1, 1, 0, 0.0, false}, 1, 1},
  };
}

std::vector<cost::LayerInstance> describe_patch(const LcenParams& params, std::size_t patch_size,
                                                std::size_t exit_stage, bool early_exit) {
  using cost::LayerKind;
  if (exit_stage < 1 || exit_stage > kStages) throw std::invalid_argument("exit stage out of range");
  const std::size_t p = patch_size, c = params.config.width;
  const double theta = params.config.theta;
  std::vector<cost::LayerInstance> layers{
      {"lcen.stem", {LayerKind::kConv, 3, 3, c, 1, 1}, p, p},
      {"lcen.stem.act", {LayerKind::kPrelu, 1, c, c}, p, p},
  };
  for (std::size_t k = 1; k <= exit_stage; ++k) {
    const std::string pre = "lcen.stage" + std::to_string(k) + ".";
    if (k > 1) layers.push_back({pre + "compress", {LayerKind::kConv, 1, k * c, c}, p, p});
    layers.push_back({pre + "em.conv1", {LayerKind::kConv, 3, c, c, 1, 1}, p, p});
    layers.push_back({pre + "em.act1", {LayerKind::kPrelu, 1, c, c}, p, p});
    layers.push_back({pre + "em.conv2", {LayerKind::kConv, 3, c, c, 1, 1}, p, p});
    layers.push_back({pre + "em.cdc", {LayerKind::kCdcConv, 3, c, c, 1, 1, theta, false}, p, p});
    layers.push_back({pre + "em.act_out", {LayerKind::kPrelu, 1, c, c}, p, p});
    layers.push_back({pre + "fm.inner", {LayerKind::kConv, 1, c, c}, p, p});
    layers.push_back({pre + "fm.outer", {LayerKind::kConv, 1, c, c}, p, p});
    layers.push_back({pre + "fm.act", {LayerKind::kPrelu, 1, c, c}, p, p});
    layers.push_back({pre + "head", {LayerKind::kConv, 1, c, 3}, p, p});
    if (early_exit && k < kStages) {
      for (auto l : describe_ldm(p)) {
        l.name = pre + l.name;
        layers.push_back(std::move(l));
      }
    }
  }
  return layers;
}

}  // namespace glian::lcen
