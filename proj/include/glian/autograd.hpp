#pragma once

// Reverse-mode differentiation over Tensor values.
//
// A Tape records every operation applied to Vars; backward() walks the tape
// in reverse and accumulates gradients into the Parameters that were read.
// Tapes are single-owner; independent tapes may be used from different
// threads as long as they do not share Parameters being written.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "glian/nn.hpp"
#include "glian/tensor.hpp"

namespace glian {

/// A named trainable tensor. `group` names the freezing unit it belongs to.
struct Parameter {
  std::string name;
  std::string group;
  Tensor value;
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(const Tensor& grad_out)>;

  /// With recording disabled the tape only evaluates values.
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var constant(Tensor value);
  /// Leaf reading `p` by reference; p must outlive the tape and stay
  /// unmodified until the tape is discarded.
  Var param(const Parameter& p);

  /// Registers an op result. `fn` receives d(loss)/d(result).
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, Backward fn);
  Var record(const char* op, Tensor value, const std::vector<Var>& inputs, Backward fn);

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }

  /// Adds g into the gradient slot of v (no-op for constants).
  void accumulate(Var v, const Tensor& g);

  /// Seeds d(loss)/d(loss)=1 for a single-element loss and propagates.
  void backward(Var loss);

  /// d(loss)/d(p) after backward(), summed over every leaf bound to p;
  /// zeros when p was not reached.
  Tensor gradient(const Parameter& p) const;
  /// True when backward() delivered a gradient to some leaf bound to p.
  bool reached(const Parameter& p) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;
    const Parameter* param = nullptr;
    bool needs_grad = false;
    Tensor grad;
    bool has_grad = false;
    Backward backward;
  };

  Var push(Node node);

  bool recording_;
  std::vector<Node> nodes_;
};

/// Differentiable counterparts of glian::nn plus the structural ops the
/// networks need. Every op checks its result for non-finite values.
namespace ag {

Var conv2d(Var x, Var weight, const Var* bias, nn::ConvOptions opts = {});
/// Stride 1, same-size reflect padding, no bias.
Var cdc_conv2d(Var x, Var weight, double theta);
Var prelu(Var x, Var alpha);
Var sigmoid(Var x);
Var global_pool(Var x, nn::PoolMode mode);
Var linear(Var x, Var weight, Var bias);
Var cross_attention(Var queries, Var keys, Var values);

Var add(Var a, Var b);
Var scale(Var a, double factor);
/// Clamps to [0,1]; gradient passes only where the input lies inside.
Var clamp01(Var x);
/// x [N,C,H,W] times s [N,C] broadcast over space.
Var mul_channels(Var x, Var s);
/// x [N,C,H,W] plus s [N,C] broadcast over space.
Var add_channels(Var x, Var s);
Var concat_channels(const std::vector<Var>& parts);
/// Rows of the leading (batch) axis, in the given order.
Var gather_batch(Var x, std::span<const std::size_t> rows);
/// Inverse of a set of gathers: part i lands at rows[i] of an n-row result.
Var scatter_batch(const std::vector<std::pair<Var, std::vector<std::size_t>>>& parts,
                  std::size_t n);
/// [C,h,w] -> [h*w, C].
Var to_tokens(Var map);
/// Equal-size windows of a [C,H,W] map -> [Nr,C,wh,ww]. Each window is
/// given by its top-left corner.
Var crop_windows(Var map, const std::vector<std::pair<std::size_t, std::size_t>>& corners,
                 std::size_t wh, std::size_t ww);
/// Row-major tiles [rows*cols,C,P,P] -> [C,out_h,out_w], cropped from the top-left.
Var assemble_tiles(Var tiles, std::size_t rows, std::size_t cols, std::size_t out_h,
                   std::size_t out_w);
/// [N,1] single logits -> [N,2] two-class logits {0, z}.
Var binary_logits(Var z);

Var sum(Var x);
Var mean(Var x);
/// sum(x .* weights) for a constant weight tensor.
Var weighted_sum(Var x, const Tensor& weights);

Var l1_loss(Var pred, const Tensor& target);
Var ssim(Var pred, const Tensor& target, nn::SsimOptions opts = {});
Var cross_entropy(Var logits, std::vector<std::size_t> labels);

}  // namespace ag
}  // namespace glian
