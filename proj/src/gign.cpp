#include "glian/gign.hpp"

#include <stdexcept>

#include "glian/init.hpp"

namespace glian::gign {
namespace {

Var conv(Tape& t, Var x, const Parameter& w, const Parameter& b, std::size_t stride,
         std::size_t pad) {
  Var bias = t.param(b);
  return ag::conv2d(x, t.param(w), &bias, {stride, pad});
}

std::size_t half_up(std::size_t n) { return (n + 1) / 2; }

}  // namespace

std::vector<Parameter*> GignParams::parameters() {
  return {&stem1_w, &stem1_b, &stem1_act, &stem2_w, &stem2_b, &stem2_act, &stem3_w,
          &stem3_b, &stem3_act, &query_w,   &query_b, &key_w,     &value_w,
          &value_b, &out_w,   &out_b};
}

std::vector<const Parameter*> GignParams::parameters() const {
  return {&stem1_w, &stem1_b, &stem1_act, &stem2_w, &stem2_b, &stem2_act, &stem3_w,
          &stem3_b, &stem3_act, &query_w,   &query_b, &key_w,     &value_w,
          &value_b, &out_w,   &out_b};
}

GignParams make_gign(const GignConfig& config, std::uint64_t seed) {
  if (config.width == 0 || config.embed_dim == 0) {
    throw std::invalid_argument("gign widths must be positive");
  }
  const std::size_t c = config.width, d = config.embed_dim;
  ParamFactory f(seed, kGroup);
  GignParams p;
  p.config = config;
  p.stem1_w = f.conv_weight("gign.stem1.w", c, 3, 3);
  p.stem1_b = f.constant("gign.stem1.b", {c}, 0.0);
  p.stem1_act = f.constant("gign.stem1.act", {c}, 0.25);
  p.stem2_w = f.conv_weight("gign.stem2.w", c, c, 3);
  p.stem2_b = f.constant("gign.stem2.b", {c}, 0.0);
  p.stem2_act = f.constant("gign.stem2.act", {c}, 0.25);
  p.stem3_w = f.conv_weight("gign.stem3.w", c, c, 1);
  p.stem3_b = f.constant("gign.stem3.b", {c}, 0.0);
  p.stem3_act = f.constant("gign.stem3.act", {c}, 0.25);
  p.query_w = f.fc_weight("gign.query.w", d, c);
  p.query_b = f.constant("gign.query.b", {d}, 0.0);
  p.key_w = f.fc_weight("gign.key.w", d, c + 2);
  p.value_w = f.fc_weight("gign.value.w", d, c);
  p.value_b = f.constant("gign.value.b", {d}, 0.0);
  p.out_w = f.fc_weight("gign.out.w", c, d, 0.1);
  // Guidance starts near unit scale so the FM blocks pass features through.
  p.out_b = f.constant("gign.out.b", {c}, 1.0);
  return p;
}

Var encode_global(Tape& tape, Var image, const GignParams& params) {
  const Tensor& v = image.value();
  if (v.rank() != 3 || v.dim(0) != 3) throw ShapeError("encode_global expects [3,H,W]");
  if (v.dim(1) < 4 || v.dim(2) < 4) throw ShapeError("encode_global needs at least 4x4 pixels");
  Var h = ag::prelu(conv(tape, image, params.stem1_w, params.stem1_b, 2, 1),
                    tape.param(params.stem1_act));
  h = ag::prelu(conv(tape, h, params.stem2_w, params.stem2_b, 2, 1), tape.param(params.stem2_act));
  return ag::prelu(conv(tape, h, params.stem3_w, params.stem3_b, 1, 0),
                   tape.param(params.stem3_act));
}

Tensor encode_global(const Tensor& image, const GignParams& params) {
  Tape tape(false);
  return encode_global(tape, tape.constant(image), params).value();
}

Tensor coordinate_map(std::size_t h, std::size_t w) {
  Tensor m({2, h, w});
  auto norm = [](std::size_t i, std::size_t n) {
    return n == 1 ? 0.0 : 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0;
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      m.at(0, y, x) = norm(y, h);
      m.at(1, y, x) = norm(x, w);
    }
  return m;
}

std::vector<std::pair<std::size_t, std::size_t>> footprint_corners(std::size_t rows,
                                                                   std::size_t cols,
                                                                   std::size_t patch_size) {
  if (patch_size % 4 != 0) throw std::invalid_argument("patch size must be a multiple of 4");
  const std::size_t q = patch_size / 4;
  std::vector<std::pair<std::size_t, std::size_t>> corners;
  corners.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) corners.emplace_back(r * q, c * q);
  return corners;
}

namespace {

Var footprints(Var global, std::size_t rows, std::size_t cols, std::size_t patch_size) {
  const Tensor& g = global.value();
  const std::size_t q = patch_size / 4;
  if (g.rank() != 3 || g.dim(1) != rows * q || g.dim(2) != cols * q) {
    throw ShapeError("global map " + shape_string(g.shape()) + " does not cover a " +
                     std::to_string(rows) + "x" + std::to_string(cols) + " grid of " +
                     std::to_string(patch_size) + "-pixel patches");
  }
  return ag::crop_windows(global, footprint_corners(rows, cols, patch_size), q, q);
}

}  // namespace

Var patch_embeddings(Var global, std::size_t rows, std::size_t cols, std::size_t patch_size) {
  return ag::global_pool(footprints(global, rows, cols, patch_size), nn::PoolMode::kAvg);
}

GaemOutput gaem_guidance(Tape& tape, Var embeddings, Var global, const GignParams& params) {
  // Extents are copied: recording new nodes may move the tape's storage.
  const Shape e = embeddings.shape();
  if (e.size() != 2 || e[0] == 0) throw std::invalid_argument("gaem needs at least one patch");
  const Shape g = global.shape();
  if (g.size() != 3 || g[0] != params.config.width || e[1] != params.config.width) {
    throw ShapeError("gaem expects embeddings [Np,C] and a global map [C,h,w] with C = " +
                     std::to_string(params.config.width));
  }
  Var queries = ag::linear(embeddings, tape.param(params.query_w), tape.param(params.query_b));
  Var positioned = ag::concat_channels({global, tape.constant(coordinate_map(g[1], g[2]))});
  Var keys = ag::linear(ag::to_tokens(positioned), tape.param(params.key_w),
                        tape.constant(Tensor({params.config.embed_dim})));
  Var values =
      ag::linear(ag::to_tokens(global), tape.param(params.value_w), tape.param(params.value_b));
  GaemOutput out;
  out.attention = nn::cross_attention(queries.value(), keys.value(), values.value()).weights;
  Var attended = ag::cross_attention(queries, keys, values);
  out.guidance = ag::linear(attended, tape.param(params.out_w), tape.param(params.out_b));
  return out;
}

Var guidance_maps(Var global, Var attended, std::size_t rows, std::size_t cols,
                  std::size_t patch_size) {
  Var crops = footprints(global, rows, cols, patch_size);
  return attended.valid() ? ag::add_channels(crops, attended) : crops;
}

std::vector<cost::LayerInstance> describe(const GignParams& params, std::size_t h, std::size_t w,
                                          std::size_t np, bool use_gaem) {
  using cost::LayerKind;
  const std::size_t c = params.config.width, d = params.config.embed_dim;
  const std::size_t h2 = half_up(h), w2 = half_up(w), h4 = half_up(h2), w4 = half_up(w2);
  std::vector<cost::LayerInstance> layers{
      {"gign.stem1", {LayerKind::kConv, 3, 3, c, 2, 1}, h, w},
      {"gign.stem1.act", {LayerKind::kPrelu, 1, c, c}, h2, w2},
      {"gign.stem2", {LayerKind::kConv, 3, c, c, 2, 1}, h2, w2},
      {"gign.stem2.act", {LayerKind::kPrelu, 1, c, c}, h4, w4},
      {"gign.stem3", {LayerKind::kConv, 1, c, c}, h4, w4},
      {"gign.stem3.act", {LayerKind::kPrelu, 1, c, c}, h4, w4},
  };
  if (use_gaem) {
    const std::size_t tokens = h4 * w4;
    layers.push_back({"gign.pool", {LayerKind::kPool, 1, c, c, 1, 0, 0.0, false}, h4, w4});
    layers.push_back({"gign.query", {LayerKind::kFc, 1, c, d}, 1, 1, np});
    layers.push_back({"gign.key", {LayerKind::kFc, 1, c + 2, d, 1, 0, 0.0, false}, 1, 1, tokens});
    layers.push_back({"gign.value", {LayerKind::kFc, 1, c, d}, 1, 1, tokens});
    layers.push_back({"gign.attention", {LayerKind::kAttention, 1, d, d, 1, 0, 0.0, false}, np, tokens});
    layers.push_back({"gign.out", {LayerKind::kFc, 1, d, c}, 1, 1, np});
  }
  return layers;
}

}  // namespace glian::gign
