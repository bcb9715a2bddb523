#pragma once

// Backward kernels paired with the forward functions in glian/nn.hpp.

#include <cstddef>
#include <span>
#include <vector>

#include "glian/nn.hpp"
#include "glian/tensor.hpp"

namespace glian::kernels {

inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return static_cast<std::size_t>(-i);
  if (i >= static_cast<std::ptrdiff_t>(n)) return 2 * (n - 1) - static_cast<std::size_t>(i);
  return static_cast<std::size_t>(i);
}

struct ConvGrads {
  Tensor dx;  // empty when not requested
  Tensor dw;
  Tensor db;  // empty when the layer has no bias
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                          const Tensor& grad_out, nn::ConvOptions opts, bool need_dx);

/// Adjoint of cdc_effective_weight.
Tensor cdc_weight_backward(const Tensor& grad_effective, double theta);

struct PreluGrads {
  Tensor dx;
  Tensor dalpha;
};
PreluGrads prelu_backward(const Tensor& x, const Tensor& alpha, const Tensor& grad_out);

Tensor global_pool_backward(const Tensor& x, nn::PoolMode mode, const Tensor& grad_out);

struct LinearGrads {
  Tensor dx, dw, db;
};
LinearGrads fully_connected_backward(const Tensor& x, const Tensor& weight,
                                     const Tensor& grad_out);

struct AttentionGrads {
  Tensor dq, dk, dv;
};
AttentionGrads cross_attention_backward(const Tensor& queries, const Tensor& keys,
                                        const Tensor& values, const Tensor& weights,
                                        const Tensor& grad_out);

/// SSIM value and its gradient with respect to `a`.
struct SsimGrad {
  double value;
  Tensor da;
};
SsimGrad ssim_with_grad(const Tensor& a, const Tensor& b, nn::SsimOptions opts);

/// Mean cross entropy over rows of [N,K] logits, with gradient.
struct CrossEntropyGrad {
  double value;
  Tensor dlogits;
};
CrossEntropyGrad cross_entropy_batch(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace glian::kernels
