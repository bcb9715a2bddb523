#pragma once

// Local contrast enhancement network: a four-exit per-patch enhancer.
//
// Stage k runs   x_k -> EM block -> FM block (guided) -> exit head k
// where x_1 is the stem feature of the patch and x_k (k > 1) is a 1x1
// compression of the stem feature and every earlier FM output (dense skip).
// Each exit head emits an RGB estimate clamp(patch + head(F_k), 0, 1).
// The local discriminative module (LDM) looks at the current estimate and
// decides whether the patch may leave early.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "glian/autograd.hpp"
#include "glian/cost.hpp"

namespace glian::lcen {

inline constexpr std::size_t kStages = 4;

/// Name of the freezing group holding stage k (1-based) parameters.
std::string stage_group(std::size_t stage);

struct EmBlock {
  Parameter conv1_w, conv1_b, act1;
  Parameter conv2_w, conv2_b;
  Parameter cdc_w;  // central-difference branch, no bias
  Parameter act_out;
};

struct FmBlock {
  Parameter inner_w, inner_b;  // 1x1, applied before modulation
  Parameter outer_w, outer_b;  // 1x1, applied after modulation
  Parameter act;
};

struct Stage {
  std::optional<Parameter> compress_w, compress_b;  // stages 2..4
  EmBlock em;
  FmBlock fm;
  Parameter head_w, head_b;  // 1x1 conv to RGB
};

struct LcenConfig {
  std::size_t width = 16;
  double theta = 0.7;
};

struct LcenParams {
  LcenConfig config;
  Parameter stem_w, stem_b, stem_act;  // part of stage 1
  std::array<Stage, kStages> stages;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

LcenParams make_lcen(const LcenConfig& config, std::uint64_t seed);

struct LdmParams {
  Parameter conv3_w, conv3_b, act3;
  Parameter conv5_w, conv5_b, act5;
  Parameter fc_w, fc_b;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

inline constexpr std::size_t kLdmWidth = 8;
LdmParams make_ldm(std::uint64_t seed);

/// Per-patch exit verdict; stage is 1-based.
struct ExitDecision {
  double probability = 0.0;
  bool exit = false;
  std::size_t stage = 0;
};

// --- block-level forward passes --------------------------------------------

/// PReLU( conv2(PReLU(conv1(x))) + cdc(x) ), spatial extent preserved.
Var em_forward(Tape& tape, Var x, const EmBlock& em, double theta);

/// PReLU( outer(inner(F_l) * scale) + shift ) with scale/shift [N,C].
Var fm_modulate(Tape& tape, Var local, Var scale, Var shift, const FmBlock& fm);

/// Guided fusion: scale = avg-pool(F_g), shift = max-pool(F_g), per channel.
Var fm_fuse(Tape& tape, Var local, Var guidance, const FmBlock& fm);

/// [N,3,P,P] -> [N,1] logits; p = sigmoid(logit).
Var ldm_logits(Tape& tape, Var patches, const LdmParams& ldm);

/// Exit probabilities for a batch of RGB estimates (no gradient).
std::vector<double> ldm_probabilities(const Tensor& patches, const LdmParams& ldm);

/// Single-patch decision at a given stage; exit iff probability >= tau.
ExitDecision ldm_decide(const Tensor& patch, const LdmParams& ldm, double tau,
                        std::size_t stage = 1);

// --- multi-exit forward ------------------------------------------------------

struct ExitControl {
  bool early_exit = true;
  const LdmParams* ldm = nullptr;  // required when early_exit and no forced stages
  double tau = 0.5;
  /// When non-empty, patch i leaves exactly at forced_stage[i] (1-based).
  std::vector<std::size_t> forced_stage;
};

struct LcenOutput {
  Var estimate;                         // [N,3,P,P], clamped to [0,1]
  std::vector<std::size_t> exit_stage;  // 1-based per patch
  std::vector<double> exit_probability; // LDM probability at the exit (1 when not gated)
};

/// Runs the batch of patches through the stages, peeling off patches as
/// they exit. `guidance` is [N,C,h,w] or an invalid Var for neutral
/// modulation (scale 1, shift 0).
LcenOutput lcen_forward(Tape& tape, Var patches, Var guidance, const LcenParams& params,
                        const ExitControl& control);

struct PatchResult {
  Tensor patch;  // [3,P,P]
  std::size_t exit_stage = 0;
  std::uint64_t flops = 0;
};

/// Single-patch convenience wrapper; guidance is [C,h,w] or empty for neutral.
PatchResult enhance_patch(const Tensor& patch, const Tensor& guidance, const LcenParams& params,
                          const LdmParams& ldm, bool early_exit, double tau = 0.5);

/// Layers executed by one patch that exits at `exit_stage`, including the
/// LDM evaluations made before leaving when `early_exit` is set.
std::vector<cost::LayerInstance> describe_patch(const LcenParams& params, std::size_t patch_size,
                                                std::size_t exit_stage, bool early_exit);

std::vector<cost::LayerInstance> describe_ldm(std::size_t patch_size);

}  // namespace glian::lcen
