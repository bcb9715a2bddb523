#pragma once

// Global illumination guidance.
//
// A strided stem encodes the whole (padded) image at 1/4 resolution. Each
// patch is summarised by average-pooling the stem features over its
// footprint; these embeddings query the flattened feature map through a
// single-head cross-attention whose keys carry normalised (y, x)
// coordinates. The attended vector, projected back to the guidance width,
// is added to the patch's own crop of the feature map to give F_g.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "glian/autograd.hpp"
#include "glian/cost.hpp"

namespace glian::gign {

inline constexpr const char* kGroup = "gign";

struct GignConfig {
  std::size_t width = 16;      // guidance channels, equal to the LCEN width
  std::size_t embed_dim = 32;  // query/key/value width
};

struct GignParams {
  GignConfig config;
  Parameter stem1_w, stem1_b, stem1_act;  // 3x3 stride 2, 3 -> C
  Parameter stem2_w, stem2_b, stem2_act;  // 3x3 stride 2, C -> C
  Parameter stem3_w, stem3_b, stem3_act;  // 1x1, C -> C
  Parameter query_w, query_b;             // [d,C]
  Parameter key_w;                        // [d,C+2]; a key bias cannot change the softmax
  Parameter value_w, value_b;             // [d,C]
  Parameter out_w, out_b;                 // [C,d]

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

GignParams make_gign(const GignConfig& config, std::uint64_t seed);

/// [3,H,W] -> [C, ceil(H/4), ceil(W/4)]. Requires H, W >= 4.
Var encode_global(Tape& tape, Var image, const GignParams& params);
Tensor encode_global(const Tensor& image, const GignParams& params);

/// [2,h,w] map of normalised row and column coordinates in [-1,1]
/// (0 along an axis of extent 1).
Tensor coordinate_map(std::size_t h, std::size_t w);

/// Top-left corners of the rows x cols patch footprints on the 1/4 map.
std::vector<std::pair<std::size_t, std::size_t>> footprint_corners(std::size_t rows,
                                                                   std::size_t cols,
                                                                   std::size_t patch_size);

/// Mean stem feature over each patch footprint -> [rows*cols, C]. The map
/// must cover exactly rows*P/4 by cols*P/4 positions.
Var patch_embeddings(Var global, std::size_t rows, std::size_t cols, std::size_t patch_size);

struct GaemOutput {
  Var guidance;      // [Np,C]
  Tensor attention;  // [Np,h*w], rows sum to 1
};

/// Cross-attention from patch embeddings [Np,C] to the positions of the
/// global map [C,h,w].
GaemOutput gaem_guidance(Tape& tape, Var embeddings, Var global, const GignParams& params);

/// Per-patch guidance maps [Np,C,P/4,P/4]: the footprint crop of the
/// global map plus the attended vector broadcast over space. An invalid
/// `attended` leaves the crop alone.
Var guidance_maps(Var global, Var attended, std::size_t rows, std::size_t cols,
                  std::size_t patch_size);

/// Layers run once per image of padded extent h x w split into np patches.
std::vector<cost::LayerInstance> describe(const GignParams& params, std::size_t h, std::size_t w,
                                          std::size_t np, bool use_gaem);

}  // namespace glian::gign
