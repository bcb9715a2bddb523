#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "glian/nn.hpp"
#include "kernels.hpp"

namespace glian {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Eigen::Index ei(std::size_t v) { return static_cast<Eigen::Index>(v); }

// outer x channels x inner decomposition used by per-channel ops.
struct ChannelLayout {
  std::size_t outer, channels, inner;
};

ChannelLayout channel_layout(const Tensor& x) {
  switch (x.rank()) {
    case 1: return {1, x.dim(0), 1};
    case 2: return {x.dim(0), x.dim(1), 1};
    case 3: return {1, x.dim(0), x.dim(1) * x.dim(2)};
    case 4: return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
    default: throw ShapeError("unsupported rank for channel op: " + shape_string(x.shape()));
  }
}

double slope_for(const Tensor& alpha, std::size_t c) {
  return alpha.size() == 1 ? alpha[0] : alpha[c];
}

void check_alpha(const Tensor& alpha, const ChannelLayout& l) {
  if (alpha.size() != 1 && alpha.size() != l.channels) {
    throw ShapeError("prelu expects " + std::to_string(l.channels) + " slopes, got " +
                     std::to_string(alpha.size()));
  }
}

struct Linear2D {
  std::size_t rows, n;
};

Linear2D linear_layout(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  if (weight.rank() != 2) throw ShapeError("fc weight must be [m,n]");
  Linear2D l{};
  if (x.rank() == 1) {
    l = {1, x.dim(0)};
  } else if (x.rank() == 2) {
    l = {x.dim(0), x.dim(1)};
  } else {
    throw ShapeError("fc input must be [n] or [N,n], got " + shape_string(x.shape()));
  }
  if (weight.dim(1) != l.n) {
    throw ShapeError("fc weight expects " + std::to_string(weight.dim(1)) + " inputs, got " +
                     std::to_string(l.n));
  }
  if (bias && bias->size() != weight.dim(0)) throw ShapeError("fc bias size mismatch");
  return l;
}

}  // namespace

namespace nn {

Tensor prelu(const Tensor& x, const Tensor& alpha) {
  const auto l = channel_layout(x);
  check_alpha(alpha, l);
  Tensor out(x.shape());
  std::size_t i = 0;
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t c = 0; c < l.channels; ++c) {
      const double a = slope_for(alpha, c);
      for (std::size_t k = 0; k < l.inner; ++k, ++i) out[i] = x[i] >= 0.0 ? x[i] : a * x[i];
    }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    // Branches keep exp() from overflowing for large |v|.
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return out;
}

Tensor global_pool(const Tensor& t, PoolMode mode) {
  const auto d = as_nchw(t);
  const std::size_t plane = d.h * d.w;
  Tensor out(t.rank() == 3 ? Shape{d.c} : Shape{d.n, d.c});
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    const double* p = t.ptr() + nc * plane;
    if (mode == PoolMode::kAvg) {
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      out[nc] = s / static_cast<double>(plane);
    } else {
      out[nc] = *std::max_element(p, p + plane);
    }
  }
  return out;
}

Tensor fully_connected(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const auto l = linear_layout(x, weight, &bias);
  const std::size_t m = weight.dim(0);
  Tensor out(x.rank() == 1 ? Shape{m} : Shape{l.rows, m});
  ConstMapMat xm(x.ptr(), ei(l.rows), ei(l.n));
  ConstMapMat wm(weight.ptr(), ei(m), ei(l.n));
  MapMat om(out.ptr(), ei(l.rows), ei(m));
  om.noalias() = xm * wm.transpose();
  for (std::size_t r = 0; r < l.rows; ++r)
    for (std::size_t j = 0; j < m; ++j) om(ei(r), ei(j)) += bias[j];
  return out;
}

Attention cross_attention(const Tensor& queries, const Tensor& keys, const Tensor& values) {
  if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2) {
    throw ShapeError("attention operands must be rank 2");
  }
  const std::size_t nq = queries.dim(0), d = queries.dim(1);
  const std::size_t nk = keys.dim(0), dv = values.dim(1);
  if (keys.dim(1) != d) throw ShapeError("query/key dimension mismatch");
  if (values.dim(0) != nk) throw ShapeError("key/value count mismatch");

  Attention a{Tensor({nq, dv}), Tensor({nq, nk})};
  ConstMapMat q(queries.ptr(), ei(nq), ei(d));
  ConstMapMat k(keys.ptr(), ei(nk), ei(d));
  ConstMapMat v(values.ptr(), ei(nk), ei(dv));
  MapMat w(a.weights.ptr(), ei(nq), ei(nk));
  w.noalias() = (q * k.transpose()) / std::sqrt(static_cast<double>(d));
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    const double mx = w.row(r).maxCoeff();
    w.row(r) = (w.row(r).array() - mx).exp();
    w.row(r) /= w.row(r).sum();
  }
  MapMat o(a.output.ptr(), ei(nq), ei(dv));
  o.noalias() = w * v;
  return a;
}

double l1_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("l1_loss shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double cross_entropy(const Tensor& logits, std::size_t label) {
  const std::size_t labels[] = {label};
  return kernels::cross_entropy_batch(logits.reshaped({1, logits.size()}), labels).value;
}

}  // namespace nn

namespace kernels {

PreluGrads prelu_backward(const Tensor& x, const Tensor& alpha, const Tensor& grad_out) {
  const auto l = channel_layout(x);
  check_alpha(alpha, l);
  PreluGrads g{Tensor(x.shape()), Tensor(alpha.shape())};
  std::size_t i = 0;
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t c = 0; c < l.channels; ++c) {
      const double a = slope_for(alpha, c);
      double& da = g.dalpha[alpha.size() == 1 ? 0 : c];
      for (std::size_t k = 0; k < l.inner; ++k, ++i) {
        if (x[i] >= 0.0) {
          g.dx[i] = grad_out[i];
        } else {
          g.dx[i] = a * grad_out[i];
          da += x[i] * grad_out[i];
        }
      }
    }
  return g;
}

Tensor global_pool_backward(const Tensor& x, nn::PoolMode mode, const Tensor& grad_out) {
  const auto d = as_nchw(x);
  const std::size_t plane = d.h * d.w;
  Tensor dx(x.shape());
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    const double* p = x.ptr() + nc * plane;
    double* q = dx.ptr() + nc * plane;
    if (mode == nn::PoolMode::kAvg) {
      const double g = grad_out[nc] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) q[i] = g;
    } else {
      q[std::max_element(p, p + plane) - p] = grad_out[nc];
    }
  }
  return dx;
}

LinearGrads fully_connected_backward(const Tensor& x, const Tensor& weight,
                                     const Tensor& grad_out) {
  const auto l = linear_layout(x, weight, nullptr);
  const std::size_t m = weight.dim(0);
  LinearGrads g{Tensor(x.shape()), Tensor(weight.shape()), Tensor({m})};
  ConstMapMat xm(x.ptr(), ei(l.rows), ei(l.n));
  ConstMapMat wm(weight.ptr(), ei(m), ei(l.n));
  ConstMapMat gm(grad_out.ptr(), ei(l.rows), ei(m));
  MapMat(g.dx.ptr(), ei(l.rows), ei(l.n)).noalias() = gm * wm;
  MapMat(g.dw.ptr(), ei(m), ei(l.n)).noalias() = gm.transpose() * xm;
  for (std::size_t r = 0; r < l.rows; ++r)
    for (std::size_t j = 0; j < m; ++j) g.db[j] += gm(ei(r), ei(j));
  return g;
}

AttentionGrads cross_attention_backward(const Tensor& queries, const Tensor& keys,
                                        const Tensor& values, const Tensor& weights,
                                        const Tensor& grad_out) {
  const std::size_t nq = queries.dim(0), d = queries.dim(1);
  const std::size_t nk = keys.dim(0), dv = values.dim(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionGrads g{Tensor(queries.shape()), Tensor(keys.shape()), Tensor(values.shape())};
  ConstMapMat q(queries.ptr(), ei(nq), ei(d));
  ConstMapMat k(keys.ptr(), ei(nk), ei(d));
  ConstMapMat v(values.ptr(), ei(nk), ei(dv));
  ConstMapMat w(weights.ptr(), ei(nq), ei(nk));
  ConstMapMat go(grad_out.ptr(), ei(nq), ei(dv));
  MapMat(g.dv.ptr(), ei(nk), ei(dv)).noalias() = w.transpose() * go;
  RowMat dw = go * v.transpose();
  RowMat ds(ei(nq), ei(nk));
  for (Eigen::Index r = 0; r < ds.rows(); ++r) {
    const double dot = (dw.row(r).array() * w.row(r).array()).sum();
    ds.row(r) = w.row(r).array() * (dw.row(r).array() - dot);
  }
  MapMat(g.dq.ptr(), ei(nq), ei(d)).noalias() = scale * (ds * k);
  MapMat(g.dk.ptr(), ei(nk), ei(d)).noalias() = scale * (ds.transpose() * q);
  return g;
}

CrossEntropyGrad cross_entropy_batch(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects [N,K] logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (k < 2) throw ShapeError("cross_entropy needs at least two classes");
  if (labels.size() != n) throw ShapeError("cross_entropy label count mismatch");
  CrossEntropyGrad out{0.0, Tensor(logits.shape())};
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] >= k) {
      throw std::out_of_range("class label " + std::to_string(labels[r]) + " out of range [0," +
                              std::to_string(k) + ")");
    }
    const double* z = logits.ptr() + r * k;
    const double mx = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[j] - mx);
    const double log_denom = std::log(denom);
    out.value += -(z[labels[r]] - mx - log_denom);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(z[j] - mx - log_denom);
      out.dlogits[r * k + j] = (p - (j == labels[r] ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  out.value /= static_cast<double>(n);
  return out;
}

}  // namespace kernels
}  // namespace glian
