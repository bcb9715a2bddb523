#include "glian/model.hpp"

#include <stdexcept>

#include "glian/patching.hpp"

namespace glian {
namespace {

template <class Self, class Out>
void collect(Self& m, Out& out) {
  for (auto* p : m.lcen.parameters()) out.push_back(p);
  for (auto* p : m.ldm.parameters()) out.push_back(p);
  for (auto* p : m.gign.parameters()) out.push_back(p);
  for (auto* p : m.refine.parameters()) out.push_back(p);
}

}  // namespace

void ModelConfig::validate() const {
  if (width == 0 || embed_dim == 0) throw std::invalid_argument("model widths must be positive");
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("theta must lie in [0,1]");
  if (patch_size < 8 || patch_size % 4 != 0) {
    throw std::invalid_argument("patch size must be at least 8 and a multiple of 4");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0,1]");
  if (use_gaem && !use_gign) throw std::invalid_argument("the attention module requires GIGN");
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  collect(*this, out);
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  std::vector<const Parameter*> out;
  collect(*this, out);
  return out;
}

Parameter* Model::find(const std::string& name) {
  for (auto* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

std::uint64_t Model::parameter_count() const {
  std::uint64_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

Model make_model(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config = config;
  // Each module draws from its own stream so toggling one leaves the others unchanged.
  m.lcen = lcen::make_lcen({config.width, config.theta}, config.seed * 4 + 1);
  m.ldm = lcen::make_ldm(config.seed * 4 + 2);
  m.gign = gign::make_gign({config.width, config.embed_dim}, config.seed * 4 + 3);
  m.refine = refine::make_refine(config.seed * 4 + 4);
  return m;
}

Var guidance_for(Tape& tape, const Tensor& padded, std::size_t rows, std::size_t cols,
                 const Model& model) {
  if (!model.config.use_gign) return {};
  const std::size_t p = model.config.patch_size;
  Var global = gign::encode_global(tape, tape.constant(padded), model.gign);
  Var attended;
  if (model.config.use_gaem) {
    Var emb = gign::patch_embeddings(global, rows, cols, p);
    attended = gign::gaem_guidance(tape, emb, global, model.gign).guidance;
  }
  return gign::guidance_maps(global, attended, rows, cols, p);
}

PipelineOutput pipeline_forward(Tape& tape, const Tensor& image, const Model& model,
                                const PipelineOptions& options) {
  const auto& cfg = model.config;
  auto grid = patching::split_patches(image, cfg.patch_size);
  const Tensor padded = patching::pad_to_multiple(image, cfg.patch_size);
  Var guidance = guidance_for(tape, padded, grid.rows, grid.cols, model);

  lcen::ExitControl control;
  control.early_exit = options.early_exit && cfg.use_ldm;
  control.ldm = &model.ldm;
  control.tau = cfg.tau;
  control.forced_stage = options.forced_stage;
  auto lc = lcen::lcen_forward(tape, tape.constant(std::move(grid.patches)), guidance, model.lcen,
                               control);

  PipelineOutput out;
  out.rows = grid.rows;
  out.cols = grid.cols;
  out.patches = lc.estimate;
  out.exit_stage = std::move(lc.exit_stage);
  out.exit_probability = std::move(lc.exit_probability);
  out.image = ag::assemble_tiles(lc.estimate, grid.rows, grid.cols, grid.height, grid.width);
  if (options.refine && cfg.use_refine) out.image = refine::refine_image(tape, out.image, model.refine);
  return out;
}

Enhancement enhance_image(const Tensor& image, const Model& model, bool early_exit) {
  Tape tape(false);
  auto out = pipeline_forward(tape, image, model, {early_exit, {}, true});
  Enhancement e;
  e.image = out.image.value();
  e.rows = out.rows;
  e.cols = out.cols;
  e.exit_stage = out.exit_stage;
  e.cost = pipeline_cost(model, image.dim(1), image.dim(2), out.exit_stage,
                         early_exit && model.config.use_ldm);
  return e;
}

cost::CostReport pipeline_cost(const Model& model, std::size_t height, std::size_t width,
                               const std::vector<std::size_t>& exit_stage, bool early_exit) {
  const auto& cfg = model.config;
  const std::size_t p = cfg.patch_size;
  const std::size_t rows = (height + p - 1) / p, cols = (width + p - 1) / p;
  if (exit_stage.size() != rows * cols) {
    throw std::invalid_argument("exit stages do not match the patch grid");
  }
  cost::CostReport r;
  r.params = model.parameter_count();
  r.per_patch_exit_depth.assign(lcen::kStages, 0);
  std::vector<cost::LayerInstance> layers;
  if (cfg.use_gign) layers = gign::describe(model.gign, rows * p, cols * p, rows * cols, cfg.use_gaem);
  for (std::size_t k = 1; k <= lcen::kStages; ++k) {
    std::uint64_t n = 0;
    for (auto s : exit_stage) n += s == k;
    r.per_patch_exit_depth[k - 1] = n;
    if (n == 0) continue;
    for (auto l : lcen::describe_patch(model.lcen, p, k, early_exit)) {
      l.applications = n;
      layers.push_back(std::move(l));
    }
  }
  if (cfg.use_refine) {
    for (auto& l : refine::describe(height, width)) layers.push_back(l);
  }
  r.flops = cost::count_cost(layers).flops;
  return r;
}

}  // namespace glian
