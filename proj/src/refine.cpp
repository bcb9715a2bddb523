#include "glian/refine.hpp"

#include "glian/init.hpp"

namespace glian::refine {
namespace {

Var conv(Tape& t, Var x, const Parameter& w, const Parameter& b, std::size_t pad) {
  Var bias = t.param(b);
  return ag::conv2d(x, t.param(w), &bias, {1, pad});
}

}  // namespace

std::vector<Parameter*> RefineParams::parameters() {
  return {&b1_pw_w, &b1_pw_b, &b1_w, &b1_b, &b1_act, &b2_pw_w, &b2_pw_b,
          &b2_w,    &b2_b,    &b2_act, &out_w, &out_b};
}

std::vector<const Parameter*> RefineParams::parameters() const {
  return {&b1_pw_w, &b1_pw_b, &b1_w, &b1_b, &b1_act, &b2_pw_w, &b2_pw_b,
          &b2_w,    &b2_b,    &b2_act, &out_w, &out_b};
}

RefineParams make_refine(std::uint64_t seed) {
  ParamFactory f(seed, kGroup);
  const std::size_t c = kWidth;
  RefineParams p;
  p.b1_pw_w = f.conv_weight("refine.b1.pw.w", c, 3, 1);
  p.b1_pw_b = f.constant("refine.b1.pw.b", {c}, 0.0);
  p.b1_w = f.conv_weight("refine.b1.w", c, c, 3);
  p.b1_b = f.constant("refine.b1.b", {c}, 0.0);
  p.b1_act = f.constant("refine.b1.act", {c}, 0.25);
  p.b2_pw_w = f.conv_weight("refine.b2.pw.w", c, c, 1);
  p.b2_pw_b = f.constant("refine.b2.pw.b", {c}, 0.0);
  p.b2_w = f.conv_weight("refine.b2.w", c, c, 3);
  p.b2_b = f.constant("refine.b2.b", {c}, 0.0);
  p.b2_act = f.constant("refine.b2.act", {c}, 0.25);
  p.out_w = f.constant("refine.out.w", {3, c, 3, 3}, 0.0);
  p.out_b = f.constant("refine.out.b", {3}, 0.0);
  return p;
}

Var refine_image(Tape& tape, Var image, const RefineParams& p) {
  const Tensor& v = image.value();
  if (v.rank() != 3 || v.dim(0) != 3) throw ShapeError("refine expects [3,H,W]");
  Var h = conv(tape, image, p.b1_pw_w, p.b1_pw_b, 0);
  h = ag::prelu(conv(tape, h, p.b1_w, p.b1_b, 1), tape.param(p.b1_act));
  h = conv(tape, h, p.b2_pw_w, p.b2_pw_b, 0);
  h = ag::prelu(conv(tape, h, p.b2_w, p.b2_b, 1), tape.param(p.b2_act));
  return ag::clamp01(ag::add(image, conv(tape, h, p.out_w, p.out_b, 1)));
}

Tensor refine_image(const Tensor& image, const RefineParams& params) {
  Tape tape(false);
  return refine_image(tape, tape.constant(image), params).value();
}

std::vector<cost::LayerInstance> describe(std::size_t h, std::size_t w) {
  using cost::LayerKind;
  const std::size_t c = kWidth;
  return {
      {"refine.b1.pw", {LayerKind::kConv, 1, 3, c}, h, w},
      {"refine.b1", {LayerKind::kConv, 3, c, c, 1, 1}, h, w},
      {"refine.b1.act", {LayerKind::kPrelu, 1, c, c}, h, w},
      {"refine.b2.pw", {LayerKind::kConv, 1, c, c}, h, w},
      {"refine.b2", {LayerKind::kConv, 3, c, c, 1, 1}, h, w},
      {"refine.b2.act", {LayerKind::kPrelu, 1, c, c}, h, w},
      {"refine.out", {LayerKind::kConv, 3, c, 3, 1, 1}, h, w},
  };
}

}  // namespace glian::refine
