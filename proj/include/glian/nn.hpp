#pragma once

// Forward numerics for the layers and losses used by every network module.
// All functions are pure; batched inputs use [N,C,H,W] and unbatched [C,H,W].

#include <cstddef>
#include <optional>

#include "glian/tensor.hpp"

namespace glian::nn {

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;  // reflect padding on every edge
};

/// Cross-correlation with reflect padding. weight is [C_out,C_in,kh,kw],
/// bias (optional) is [C_out].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
              ConvOptions opts = {});

/// Central-difference convolution, stride 1, "same" reflect padding:
///   out(p0) = conv(input, weight)(p0) - theta * sum_i input_i(p0) * sum(weight[o,i])
Tensor cdc_conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
                  double theta);

/// Weight whose plain convolution equals the central-difference convolution
/// with `weight` (centre tap shifted by -theta * tap sum).
Tensor cdc_effective_weight(const Tensor& weight, double theta);

/// alpha holds one slope per channel (dimension 1 of a batched tensor,
/// dimension 0 otherwise) or a single shared slope.
Tensor prelu(const Tensor& x, const Tensor& alpha);

Tensor sigmoid(const Tensor& x);

enum class PoolMode { kAvg, kMax };

/// [C,H,W] -> [C]; [N,C,H,W] -> [N,C].
Tensor global_pool(const Tensor& t, PoolMode mode);

/// x is [n] or [N,n]; weight [m,n]; bias [m].
Tensor fully_connected(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct Attention {
  Tensor output;   // [Nq,dv]
  Tensor weights;  // [Nq,Nk], rows sum to one
};

/// Single-head scaled dot-product attention softmax(Q K^T / sqrt(d)) V.
Attention cross_attention(const Tensor& queries, const Tensor& keys, const Tensor& values);

/// Mean absolute difference.
double l1_loss(const Tensor& a, const Tensor& b);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double data_range = 1.0;
};

/// Gaussian-window SSIM over valid window positions, averaged over channels.
/// Accepts [H,W], [C,H,W] or [N,C,H,W] (every leading plane is a channel).
double ssim_index(const Tensor& a, const Tensor& b, SsimOptions opts = {});

/// -log softmax(logits)[label].
double cross_entropy(const Tensor& logits, std::size_t label);

/// Normalised 1-D Gaussian taps.
std::vector<double> gaussian_window(std::size_t size, double sigma);

}  // namespace glian::nn
