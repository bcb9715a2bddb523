#pragma once

// Compute-cost accounting. FLOPs count multiplies and adds separately, so a
// k x k convolution costs 2*k*k*C_in*C_out*H_out*W_out; bias additions and
// other elementwise adds are not counted.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "glian/tensor.hpp"

namespace glian::cost {

enum class LayerKind { kConv, kCdcConv, kPrelu, kSigmoid, kFc, kPool, kAttention };

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  std::size_t kernel = 1;
  std::size_t in_channels = 0;   // fc: input features; attention: query/key dim
  std::size_t out_channels = 0;  // fc: output features; attention: value dim
  std::size_t stride = 1;
  std::size_t padding = 0;  // reflect
  double theta = 0.0;       // cdc only, in [0,1]
  bool bias = true;

  /// Throws std::invalid_argument on an even spatial kernel or theta outside [0,1].
  void validate() const;
};

/// A layer with its input extent resolved. `applications` is how many
/// times the layer runs (for example the number of patches reaching it);
/// it scales FLOPs but not parameters.
struct LayerInstance {
  std::string name;
  LayerSpec spec;
  std::size_t in_h = 0, in_w = 0;  // attention: in_h = queries, in_w = keys
  std::uint64_t applications = 1;
};

struct CostReport {
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
  /// per_patch_exit_depth[k] = patches that left at stage k+1.
  std::vector<std::uint64_t> per_patch_exit_depth;
};

std::uint64_t layer_params(const LayerSpec& spec);
/// FLOPs of a single application. Throws std::invalid_argument when the
/// input extent is unresolved (zero).
std::uint64_t layer_flops(const LayerInstance& layer);

CostReport count_cost(std::span<const LayerInstance> layers);

/// Sequential network description: spatial extents are propagated from
/// `input` ([C,H,W]) through each layer in order.
CostReport count_cost(std::span<const LayerSpec> layers, const Shape& input);

}  // namespace glian::cost
