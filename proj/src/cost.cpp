#include "glian/cost.hpp"

#include <stdexcept>

namespace glian::cost {

void LayerSpec::validate() const {
  const bool spatial = kind == LayerKind::kConv || kind == LayerKind::kCdcConv;
  if (spatial && kernel % 2 == 0) throw std::invalid_argument("spatial kernel size must be odd");
  if (kind == LayerKind::kCdcConv && !(theta >= 0.0 && theta <= 1.0)) {
    throw std::invalid_argument("cdc theta must lie in [0,1]");
  }
  if (stride == 0) throw std::invalid_argument("stride must be positive");
}

std::uint64_t layer_params(const LayerSpec& s) {
  switch (s.kind) {
    case LayerKind::kConv:
    case LayerKind::kCdcConv:
      return s.kernel * s.kernel * s.in_channels * s.out_channels + (s.bias ? s.out_channels : 0);
    case LayerKind::kFc:
      return s.in_channels * s.out_channels + (s.bias ? s.out_channels : 0);
    case LayerKind::kPrelu:
      return s.in_channels;
    case LayerKind::kSigmoid:
    case LayerKind::kPool:
    case LayerKind::kAttention:
      return 0;
  }
  return 0;
}

namespace {

std::size_t out_extent(std::size_t in, const LayerSpec& s) {
  return (in + 2 * s.padding - s.kernel) / s.stride + 1;
}

}  // namespace

std::uint64_t layer_flops(const LayerInstance& layer) {
  const auto& s = layer.spec;
  s.validate();
  if (s.kind != LayerKind::kFc && (layer.in_h == 0 || layer.in_w == 0)) {
    throw std::invalid_argument("layer '" + layer.name + "' has an unresolved input extent");
  }
  const std::uint64_t hw = static_cast<std::uint64_t>(layer.in_h) * layer.in_w;
  switch (s.kind) {
    case LayerKind::kConv:
    case LayerKind::kCdcConv: {
      if (layer.in_h + 2 * s.padding < s.kernel || layer.in_w + 2 * s.padding < s.kernel) {
        throw std::invalid_argument("layer '" + layer.name + "' kernel exceeds its input");
      }
      const std::uint64_t out = static_cast<std::uint64_t>(out_extent(layer.in_h, s)) *
                                out_extent(layer.in_w, s);
      return 2ull * s.kernel * s.kernel * s.in_channels * s.out_channels * out;
    }
    case LayerKind::kFc:
      return 2ull * s.in_channels * s.out_channels;
    case LayerKind::kPrelu:
    case LayerKind::kSigmoid:
    case LayerKind::kPool:
      return static_cast<std::uint64_t>(s.in_channels) * hw;
    case LayerKind::kAttention:
      // scores Q K^T plus the weighted sum over values
      return 2ull * layer.in_h * layer.in_w * (s.in_channels + s.out_channels);
  }
  return 0;
}

CostReport count_cost(std::span<const LayerInstance> layers) {
  CostReport r;
  for (const auto& l : layers) {
    r.params += layer_params(l.spec);
    r.flops += layer_flops(l) * l.applications;
  }
  return r;
}

CostReport count_cost(std::span<const LayerSpec> layers, const Shape& input) {
  if (input.size() != 3) throw std::invalid_argument("input shape must be [C,H,W]");
  std::vector<LayerInstance> resolved;
  std::size_t c = input[0], h = input[1], w = input[2];
  for (const auto& s : layers) {
    LayerInstance inst{"layer" + std::to_string(resolved.size()), s, h, w, 1};
    if (s.kind == LayerKind::kConv || s.kind == LayerKind::kCdcConv) {
      if (s.in_channels != c) throw std::invalid_argument("channel mismatch in description");
      layer_flops(inst);
      h = out_extent(h, s);
      w = out_extent(w, s);
      c = s.out_channels;
    } else if (s.kind == LayerKind::kPool) {
      h = w = 1;
    } else if (s.kind == LayerKind::kFc) {
      c = s.out_channels;
    }
    resolved.push_back(inst);
  }
  return count_cost(resolved);
}

}  // namespace glian::cost
