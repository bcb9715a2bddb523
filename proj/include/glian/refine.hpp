#pragma once

#include <cstdint>
#include <vector>

#include "glian/autograd.hpp"
#include "glian/cost.hpp"

namespace glian::refine {

inline constexpr const char* kGroup = "refine";
inline constexpr std::size_t kWidth = 16;

/// Two (1x1 conv, 3x3 conv, PReLU) blocks and a 3x3 conv back to RGB.
/// The last conv starts at zero, so a fresh module is the identity.
struct RefineParams {
  Parameter b1_pw_w, b1_pw_b, b1_w, b1_b, b1_act;
  Parameter b2_pw_w, b2_pw_b, b2_w, b2_b, b2_act;
  Parameter out_w, out_b;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

RefineParams make_refine(std::uint64_t seed);

/// clamp(image + f(image), 0, 1) for an image [3,H,W] (H, W >= 2).
Var refine_image(Tape& tape, Var image, const RefineParams& params);
Tensor refine_image(const Tensor& image, const RefineParams& params);

std::vector<cost::LayerInstance> describe(std::size_t h, std::size_t w);

}  // namespace glian::refine
