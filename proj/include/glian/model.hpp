#pragma once

// The assembled enhancer: split -> guided multi-exit LCEN per patch ->
// merge -> refine. Module toggles allow ablations; a disabled module is
// bypassed, never approximated.

#include <cstdint>
#include <vector>

#include "glian/cost.hpp"
#include "glian/gign.hpp"
#include "glian/lcen.hpp"
#include "glian/refine.hpp"

namespace glian {

struct ModelConfig {
  std::size_t width = 16;
  double theta = 0.7;
  std::size_t patch_size = 16;
  std::size_t embed_dim = 32;
  double tau = 0.5;  // exit iff LDM probability >= tau
  bool use_ldm = true;
  bool use_gign = true;
  bool use_gaem = true;
  bool use_refine = true;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on an unusable combination.
  void validate() const;
};

struct Model {
  ModelConfig config;
  lcen::LcenParams lcen;
  lcen::LdmParams ldm;
  gign::GignParams gign;
  refine::RefineParams refine;

  /// Every parameter, in a fixed order (LCEN, LDM, GIGN, refine).
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find(const std::string& name);
  std::uint64_t parameter_count() const;
};

Model make_model(const ModelConfig& config);

struct PipelineOptions {
  bool early_exit = true;
  /// Per-patch exit stage (1-based); overrides the LDM when non-empty.
  std::vector<std::size_t> forced_stage;
  /// Applies the refinement module when the config enables it.
  bool refine = true;
};

struct PipelineOutput {
  Var image;    // [3,H,W] in [0,1]
  Var patches;  // [Np,3,P,P] LCEN estimates before merging
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> exit_stage;
  std::vector<double> exit_probability;
};

/// Guidance maps [Np,C,P/4,P/4] for the patch grid of `padded`, or an
/// invalid Var when GIGN is disabled.
Var guidance_for(Tape& tape, const Tensor& padded, std::size_t rows, std::size_t cols,
                 const Model& model);

PipelineOutput pipeline_forward(Tape& tape, const Tensor& image, const Model& model,
                                const PipelineOptions& options = {});

struct Enhancement {
  Tensor image;
  std::size_t rows = 0, cols = 0;
  std::vector<std::size_t> exit_stage;
  cost::CostReport cost;
};

Enhancement enhance_image(const Tensor& image, const Model& model, bool early_exit = true);

/// FLOPs accounted for one H x W image whose patches exit at `exit_stage`.
cost::CostReport pipeline_cost(const Model& model, std::size_t height, std::size_t width,
                               const std::vector<std::size_t>& exit_stage, bool early_exit);

}  // namespace glian
