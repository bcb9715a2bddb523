#include "glian/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"

namespace glian {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(const Parameter& p) {
  Node n;
  n.ref = &p.value;
  n.param = &p;
  n.needs_grad = recording_;
  return push(std::move(n));
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  return record(op, std::move(value), std::vector<Var>(inputs), std::move(fn));
}

Var Tape::record(const char* op, Tensor value, const std::vector<Var>& inputs, Backward fn) {
  if (!value.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
  Node n;
  n.value = std::move(value);
  if (recording_) {
    n.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                               [this](Var v) { return nodes_[v.id()].needs_grad; });
    if (n.needs_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.ref ? *n.ref : n.value;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = nodes_[v.id()];
  if (!n.needs_grad) return;
  if (!n.has_grad) {
    if (g.shape() != value(v).shape()) {
      throw ShapeError("gradient shape " + shape_string(g.shape()) + " does not match value " +
                       shape_string(value(v).shape()));
    }
    n.grad = g;
    n.has_grad = true;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Tape::backward(Var loss) {
  if (!recording_) throw std::logic_error("backward() on a non-recording tape");
  if (value(loss).size() != 1) throw ShapeError("backward() needs a single-element loss");
  accumulate(loss, Tensor(value(loss).shape(), 1.0));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(n.grad);
    if (!n.param) n.grad = Tensor();
  }
}

Tensor Tape::gradient(const Parameter& p) const {
  Tensor g(p.value.shape());
  for (const Node& n : nodes_) {
    if (n.param != &p || !n.has_grad) continue;
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
  }
  return g;
}

bool Tape::reached(const Parameter& p) const {
  return std::any_of(nodes_.begin(), nodes_.end(),
                     [&](const Node& n) { return n.param == &p && n.has_grad; });
}

namespace ag {
namespace {

Tape& tape_of(Var v) { return v.tape(); }

}  // namespace

Var conv2d(Var x, Var weight, const Var* bias, nn::ConvOptions opts) {
  Tape& t = tape_of(x);
  Tensor out = nn::conv2d(x.value(), weight.value(), bias ? &bias->value() : nullptr, opts);
  const bool has_bias = bias != nullptr;
  const Var b = has_bias ? *bias : Var();
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(b);
  return t.record("conv2d", std::move(out), inputs, [x, weight, b, has_bias, opts](const Tensor& g) {
    Tape& tp = x.tape();
    auto grads = kernels::conv2d_backward(x.value(), weight.value(), has_bias, g, opts,
                                          tp.needs_grad(x));
    if (tp.needs_grad(x)) tp.accumulate(x, grads.dx);
    tp.accumulate(weight, grads.dw);
    if (has_bias) tp.accumulate(b, grads.db);
  });
}

Var cdc_conv2d(Var x, Var weight, double theta) {
  Tape& t = tape_of(x);
  Tensor eff = nn::cdc_effective_weight(weight.value(), theta);
  Var effective = t.record("cdc_weight", std::move(eff), {weight}, [weight, theta](const Tensor& g) {
    weight.tape().accumulate(weight, kernels::cdc_weight_backward(g, theta));
  });
  return conv2d(x, effective, nullptr, {1, weight.value().dim(2) / 2});
}

Var prelu(Var x, Var alpha) {
  return tape_of(x).record("prelu", nn::prelu(x.value(), alpha.value()), {x, alpha},
                           [x, alpha](const Tensor& g) {
                             auto grads = kernels::prelu_backward(x.value(), alpha.value(), g);
                             x.tape().accumulate(x, grads.dx);
                             x.tape().accumulate(alpha, grads.dalpha);
                           });
}

Var sigmoid(Var x) {
  Tape& t = tape_of(x);
  Tensor y = nn::sigmoid(x.value());
  Tensor saved = t.recording() ? y : Tensor();
  return t.record("sigmoid", std::move(y), {x}, [x, s = std::move(saved)](const Tensor& g) {
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * s[i] * (1.0 - s[i]);
    x.tape().accumulate(x, dx);
  });
}

Var global_pool(Var x, nn::PoolMode mode) {
  return tape_of(x).record("global_pool", nn::global_pool(x.value(), mode), {x},
                           [x, mode](const Tensor& g) {
                             x.tape().accumulate(x, kernels::global_pool_backward(x.value(), mode, g));
                           });
}

Var linear(Var x, Var weight, Var bias) {
  return tape_of(x).record(
      "linear", nn::fully_connected(x.value(), weight.value(), bias.value()), {x, weight, bias},
      [x, weight, bias](const Tensor& g) {
        auto grads = kernels::fully_connected_backward(x.value(), weight.value(), g);
        Tape& tp = x.tape();
        tp.accumulate(x, grads.dx);
        tp.accumulate(weight, grads.dw);
        tp.accumulate(bias, grads.db);
      });
}

Var cross_attention(Var queries, Var keys, Var values) {
  auto att = nn::cross_attention(queries.value(), keys.value(), values.value());
  Tensor weights = std::move(att.weights);
  return tape_of(queries).record(
      "cross_attention", std::move(att.output), {queries, keys, values},
      [queries, keys, values, weights = std::move(weights)](const Tensor& g) {
        auto grads = kernels::cross_attention_backward(queries.value(), keys.value(),
                                                       values.value(), weights, g);
        Tape& tp = queries.tape();
        tp.accumulate(queries, grads.dq);
        tp.accumulate(keys, grads.dk);
        tp.accumulate(values, grads.dv);
      });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ShapeError("add shape mismatch " + shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return tape_of(a).record("add", std::move(out), {a, b}, [a, b](const Tensor& g) {
    a.tape().accumulate(a, g);
    a.tape().accumulate(b, g);
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return tape_of(a).record("scale", std::move(out), {a}, [a, factor](const Tensor& g) {
    Tensor d = g;
    for (auto& v : d.data()) v *= factor;
    a.tape().accumulate(a, d);
  });
}

Var clamp01(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return tape_of(x).record("clamp01", std::move(out), {x}, [x](const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor d(g.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (xv[i] >= 0.0 && xv[i] <= 1.0) ? g[i] : 0.0;
    x.tape().accumulate(x, d);
  });
}

namespace {

Dims4 check_channel_operand(const Tensor& x, const Tensor& s) {
  const auto d = as_nchw(x);
  if (s.size() != d.n * d.c) {
    throw ShapeError("channel operand " + shape_string(s.shape()) + " does not match " +
                     shape_string(x.shape()));
  }
  return d;
}

}  // namespace

Var mul_channels(Var x, Var s) {
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  const auto d = check_channel_operand(xv, sv);
  const std::size_t plane = d.h * d.w;
  Tensor out(xv.shape());
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc)
    for (std::size_t i = 0; i < plane; ++i) out[nc * plane + i] = xv[nc * plane + i] * sv[nc];
  return tape_of(x).record("mul_channels", std::move(out), {x, s}, [x, s, d](const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& sv = s.value();
    const std::size_t plane = d.h * d.w;
    Tensor dx(xv.shape()), ds(sv.shape());
    for (std::size_t nc = 0; nc < d.n * d.c; ++nc)
      for (std::size_t i = 0; i < plane; ++i) {
        dx[nc * plane + i] = g[nc * plane + i] * sv[nc];
        ds[nc] += g[nc * plane + i] * xv[nc * plane + i];
      }
    x.tape().accumulate(x, dx);
    x.tape().accumulate(s, ds);
  });
}

Var add_channels(Var x, Var s) {
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  const auto d = check_channel_operand(xv, sv);
  const std::size_t plane = d.h * d.w;
  Tensor out = xv;
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc)
    for (std::size_t i = 0; i < plane; ++i) out[nc * plane + i] += sv[nc];
  return tape_of(x).record("add_channels", std::move(out), {x, s}, [x, s, d](const Tensor& g) {
    const std::size_t plane = d.h * d.w;
    Tensor ds(s.value().shape());
    for (std::size_t nc = 0; nc < d.n * d.c; ++nc)
      for (std::size_t i = 0; i < plane; ++i) ds[nc] += g[nc * plane + i];
    x.tape().accumulate(x, g);
    x.tape().accumulate(s, ds);
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const auto d0 = as_nchw(parts[0].value());
  std::size_t channels = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    const auto d = as_nchw(p.value());
    if (d.n != d0.n || d.h != d0.h || d.w != d0.w) throw ShapeError("concat extent mismatch");
    offsets.push_back(channels);
    channels += d.c;
  }
  const std::size_t plane = d0.h * d0.w;
  Tensor out(parts[0].value().rank() == 3 ? Shape{channels, d0.h, d0.w}
                                          : Shape{d0.n, channels, d0.h, d0.w});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    const std::size_t c = pv.size() / (d0.n * plane);
    for (std::size_t n = 0; n < d0.n; ++n)
      std::copy_n(pv.ptr() + n * c * plane, c * plane,
                  out.ptr() + (n * channels + offsets[k]) * plane);
  }
  return tape_of(parts[0]).record(
      "concat_channels", std::move(out), parts,
      [parts, offsets, channels, n = d0.n, plane](const Tensor& g) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
          Tape& tp = parts[k].tape();
          if (!tp.needs_grad(parts[k])) continue;
          const Tensor& pv = parts[k].value();
          const std::size_t c = pv.size() / (n * plane);
          Tensor d(pv.shape());
          for (std::size_t s = 0; s < n; ++s)
            std::copy_n(g.ptr() + (s * channels + offsets[k]) * plane, c * plane,
                        d.ptr() + s * c * plane);
          tp.accumulate(parts[k], d);
        }
      });
}

Var gather_batch(Var x, std::span<const std::size_t> rows) {
  const Tensor& xv = x.value();
  if (rows.empty()) throw ShapeError("gather of zero rows");
  const std::size_t n = xv.dim(0), row = xv.size() / n;
  Shape shape = xv.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ShapeError("gather row out of range");
    std::copy_n(xv.ptr() + rows[i] * row, row, out.ptr() + i * row);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return tape_of(x).record("gather_batch", std::move(out), {x}, [x, idx, row](const Tensor& g) {
    Tensor d(x.value().shape());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t k = 0; k < row; ++k) d[idx[i] * row + k] += g[i * row + k];
    x.tape().accumulate(x, d);
  });
}

Var scatter_batch(const std::vector<std::pair<Var, std::vector<std::size_t>>>& parts,
                  std::size_t n) {
  if (parts.empty()) throw ShapeError("scatter of zero parts");
  Shape shape = parts[0].first.value().shape();
  const std::size_t row = parts[0].first.value().size() / shape[0];
  shape[0] = n;
  Tensor out(shape);
  std::vector<bool> filled(n, false);
  std::vector<Var> inputs;
  for (const auto& [v, rows] : parts) {
    const Tensor& pv = v.value();
    if (pv.dim(0) != rows.size() || pv.size() / pv.dim(0) != row) {
      throw ShapeError("scatter part shape mismatch");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= n || filled[rows[i]]) throw ShapeError("scatter rows must be a partition");
      filled[rows[i]] = true;
      std::copy_n(pv.ptr() + i * row, row, out.ptr() + rows[i] * row);
    }
    inputs.push_back(v);
  }
  if (std::find(filled.begin(), filled.end(), false) != filled.end()) {
    throw ShapeError("scatter rows must cover every output row");
  }
  return tape_of(parts[0].first).record("scatter_batch", std::move(out), inputs,
                                        [parts, row](const Tensor& g) {
                                          for (const auto& [v, rows] : parts) {
                                            Tape& tp = v.tape();
                                            if (!tp.needs_grad(v)) continue;
                                            Tensor d(v.value().shape());
                                            for (std::size_t i = 0; i < rows.size(); ++i)
                                              std::copy_n(g.ptr() + rows[i] * row, row,
                                                          d.ptr() + i * row);
                                            tp.accumulate(v, d);
                                          }
                                        });
}

Var to_tokens(Var map) {
  const Tensor& mv = map.value();
  if (mv.rank() != 3) throw ShapeError("to_tokens expects [C,h,w]");
  const std::size_t c = mv.dim(0), hw = mv.dim(1) * mv.dim(2);
  Tensor out({hw, c});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < hw; ++p) out[p * c + ch] = mv[ch * hw + p];
  return tape_of(map).record("to_tokens", std::move(out), {map}, [map, c, hw](const Tensor& g) {
    Tensor d(map.value().shape());
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) d[ch * hw + p] = g[p * c + ch];
    map.tape().accumulate(map, d);
  });
}

Var crop_windows(Var map, const std::vector<std::pair<std::size_t, std::size_t>>& corners,
                 std::size_t wh, std::size_t ww) {
  const Tensor& mv = map.value();
  if (mv.rank() != 3) throw ShapeError("crop_windows expects [C,H,W]");
  if (corners.empty()) throw ShapeError("crop_windows needs at least one window");
  const std::size_t c = mv.dim(0), h = mv.dim(1), w = mv.dim(2);
  for (const auto& [y, x] : corners) {
    if (y + wh > h || x + ww > w) throw ShapeError("crop window exceeds map");
  }
  Tensor out({corners.size(), c, wh, ww});
  auto visit = [corners, c, h, w, wh, ww](auto&& fn) {
    for (std::size_t r = 0; r < corners.size(); ++r)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < wh; ++y)
          for (std::size_t x = 0; x < ww; ++x)
            fn(((r * c + ch) * wh + y) * ww + x,
               (ch * h + corners[r].first + y) * w + corners[r].second + x);
  };
  visit([&](std::size_t o, std::size_t i) { out[o] = mv[i]; });
  return tape_of(map).record("crop_windows", std::move(out), {map},
                             [map, visit](const Tensor& g) {
                               Tensor d(map.value().shape());
                               visit([&](std::size_t o, std::size_t i) { d[i] += g[o]; });
                               map.tape().accumulate(map, d);
                             });
}

Var assemble_tiles(Var tiles, std::size_t rows, std::size_t cols, std::size_t out_h,
                   std::size_t out_w) {
  const Tensor& tv = tiles.value();
  if (tv.rank() != 4 || tv.dim(0) != rows * cols || tv.dim(2) != tv.dim(3)) {
    throw ShapeError("assemble_tiles expects [rows*cols,C,P,P], got " + shape_string(tv.shape()));
  }
  const std::size_t c = tv.dim(1), p = tv.dim(2);
  if (out_h > rows * p || out_w > cols * p) throw ShapeError("assembled extent exceeds tiles");
  Tensor out({c, out_h, out_w});
  auto visit = [=](auto&& fn) {
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
          const std::size_t tile = (y / p) * cols + x / p;
          fn((ch * out_h + y) * out_w + x, ((tile * c + ch) * p + y % p) * p + x % p);
        }
  };
  visit([&](std::size_t o, std::size_t i) { out[o] = tv[i]; });
  return tape_of(tiles).record("assemble_tiles", std::move(out), {tiles},
                               [tiles, visit](const Tensor& g) {
                                 Tensor d(tiles.value().shape());
                                 visit([&](std::size_t o, std::size_t i) { d[i] = g[o]; });
                                 tiles.tape().accumulate(tiles, d);
                               });
}

Var binary_logits(Var z) {
  const Tensor& zv = z.value();
  if (zv.rank() != 2 || zv.dim(1) != 1) throw ShapeError("binary_logits expects [N,1]");
  const std::size_t n = zv.dim(0);
  Tensor out({n, 2});
  for (std::size_t i = 0; i < n; ++i) out[2 * i + 1] = zv[i];
  return tape_of(z).record("binary_logits", std::move(out), {z}, [z, n](const Tensor& g) {
    Tensor d({n, 1});
    for (std::size_t i = 0; i < n; ++i) d[i] = g[2 * i + 1];
    z.tape().accumulate(z, d);
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tape_of(x).record("sum", Tensor::scalar(s), {x}, [x](const Tensor& g) {
    x.tape().accumulate(x, Tensor(x.value().shape(), g[0]));
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var weighted_sum(Var x, const Tensor& weights) {
  const Tensor& xv = x.value();
  if (weights.size() != xv.size()) throw ShapeError("weighted_sum size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * weights[i];
  return tape_of(x).record("weighted_sum", Tensor::scalar(s), {x}, [x, weights](const Tensor& g) {
    Tensor d = weights.reshaped(x.value().shape());
    for (auto& v : d.data()) v *= g[0];
    x.tape().accumulate(x, d);
  });
}

Var l1_loss(Var pred, const Tensor& target) {
  const double value = nn::l1_loss(pred.value(), target);
  return tape_of(pred).record("l1_loss", Tensor::scalar(value), {pred}, [pred, target](const Tensor& g) {
    const Tensor& pv = pred.value();
    const double k = g[0] / static_cast<double>(pv.size());
    Tensor d(pv.shape());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double diff = pv[i] - target[i];
      d[i] = diff > 0.0 ? k : (diff < 0.0 ? -k : 0.0);
    }
    pred.tape().accumulate(pred, d);
  });
}

Var ssim(Var pred, const Tensor& target, nn::SsimOptions opts) {
  auto r = kernels::ssim_with_grad(pred.value(), target, opts);
  Tensor da = std::move(r.da);
  return tape_of(pred).record("ssim", Tensor::scalar(r.value), {pred},
                              [pred, da = std::move(da)](const Tensor& g) {
                                Tensor d = da;
                                for (auto& v : d.data()) v *= g[0];
                                pred.tape().accumulate(pred, d);
                              });
}

Var cross_entropy(Var logits, std::vector<std::size_t> labels) {
  auto r = kernels::cross_entropy_batch(logits.value(), labels);
  Tensor dl = std::move(r.dlogits);
  return tape_of(logits).record("cross_entropy", Tensor::scalar(r.value), {logits},
                                [logits, dl = std::move(dl)](const Tensor& g) {
                                  Tensor d = dl;
                                  for (auto& v : d.data()) v *= g[0];
                                  logits.tape().accumulate(logits, d);
                                });
}

}  // namespace ag
}  // namespace glian
