#include <Eigen/Core>

#include "glian/nn.hpp"
#include "kernels.hpp"

namespace glian {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t n, cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t stride, pad;
  std::size_t ho, wo;

  std::size_t patch_rows() const { return cin * kh * kw; }
  std::size_t out_pixels() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weight, nn::ConvOptions opts) {
  const auto d = as_nchw(input);
  if (weight.rank() != 4) {
    throw ShapeError("conv weight must be [C_out,C_in,kh,kw], got " + shape_string(weight.shape()));
  }
  if (weight.dim(1) != d.c) {
    throw ShapeError("conv weight expects " + std::to_string(weight.dim(1)) +
                     " input channels, input has " + std::to_string(d.c));
  }
  if (opts.stride == 0) throw ShapeError("conv stride must be positive");
  ConvGeometry g{d.n, d.c, d.h, d.w, weight.dim(0), weight.dim(2), weight.dim(3),
                 opts.stride, opts.pad, 0, 0};
  if (g.pad > 0 && (g.pad >= g.h || g.pad >= g.w)) {
    throw ShapeError("reflect padding " + std::to_string(g.pad) + " too large for " +
                     std::to_string(g.h) + "x" + std::to_string(g.w) + " input");
  }
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw ShapeError("kernel does not fit padded input");
  }
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  return g;
}

// Source row/column of every (kernel tap, output position) pair.
struct TapMaps {
  std::vector<std::size_t> ys;  // [kh][ho]
  std::vector<std::size_t> xs;  // [kw][wo]
};

TapMaps tap_maps(const ConvGeometry& g) {
  TapMaps m;
  m.ys.resize(g.kh * g.ho);
  m.xs.resize(g.kw * g.wo);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t k = 0; k < g.kh; ++k)
    for (std::size_t o = 0; o < g.ho; ++o)
      m.ys[k * g.ho + o] = kernels::reflect_index(
          static_cast<std::ptrdiff_t>(o * g.stride + k) - pad, g.h);
  for (std::size_t k = 0; k < g.kw; ++k)
    for (std::size_t o = 0; o < g.wo; ++o)
      m.xs[k * g.wo + o] = kernels::reflect_index(
          static_cast<std::ptrdiff_t>(o * g.stride + k) - pad, g.w);
  return m;
}

void im2col(const double* x, const ConvGeometry& g, const TapMaps& m, double* cols) {
  const std::size_t plane = g.h * g.w;
  double* dst = cols;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const double* src = x + c * plane;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const std::size_t* ys = &m.ys[ky * g.ho];
        const std::size_t* xs = &m.xs[kx * g.wo];
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const double* row = src + ys[oy] * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) *dst++ = row[xs[ox]];
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, const TapMaps& m, double* dx) {
  const std::size_t plane = g.h * g.w;
  const double* src = cols;
  for (std::size_t c = 0; c < g.cin; ++c) {
    double* dst = dx + c * plane;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const std::size_t* ys = &m.ys[ky * g.ho];
        const std::size_t* xs = &m.xs[kx * g.wo];
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          double* row = dst + ys[oy] * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) row[xs[ox]] += *src++;
        }
      }
    }
  }
}

Shape conv_out_shape(const Tensor& input, const ConvGeometry& g) {
  if (input.rank() == 3) return {g.cout, g.ho, g.wo};
  return {g.n, g.cout, g.ho, g.wo};
}

}  // namespace

namespace nn {

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias, ConvOptions opts) {
  const auto g = conv_geometry(input, weight, opts);
  if (bias && bias->size() != g.cout) {
    throw ShapeError("conv bias has " + std::to_string(bias->size()) + " entries, expected " +
                     std::to_string(g.cout));
  }
  Tensor out(conv_out_shape(input, g));
  const auto maps = tap_maps(g);
  const std::size_t k = g.patch_rows(), p = g.out_pixels();
  std::vector<double> cols(g.pointwise() ? 0 : k * p);
  ConstMapMat wmat(weight.ptr(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(k));
  for (std::size_t s = 0; s < g.n; ++s) {
    const double* x = input.ptr() + s * g.cin * g.h * g.w;
    const double* colptr = x;
    if (!g.pointwise()) {
      im2col(x, g, maps, cols.data());
      colptr = cols.data();
    }
    ConstMapMat cmat(colptr, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
    MapMat omat(out.ptr() + s * g.cout * p, static_cast<Eigen::Index>(g.cout),
                static_cast<Eigen::Index>(p));
    omat.noalias() = wmat * cmat;
    if (bias) {
      for (std::size_t o = 0; o < g.cout; ++o) omat.row(static_cast<Eigen::Index>(o)).array() += (*bias)[o];
    }
  }
  return out;
}

Tensor cdc_effective_weight(const Tensor& weight, double theta) {
  if (weight.rank() != 4) throw ShapeError("cdc weight must be rank 4");
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("cdc theta must lie in [0,1]");
  const std::size_t cout = weight.dim(0), cin = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("cdc kernel size must be odd");
  Tensor eff = weight;
  const std::size_t taps = kh * kw, centre = (kh / 2) * kw + kw / 2;
  for (std::size_t oi = 0; oi < cout * cin; ++oi) {
    double sum = 0.0;
    for (std::size_t t = 0; t < taps; ++t) sum += weight[oi * taps + t];
    eff[oi * taps + centre] -= theta * sum;
  }
  return eff;
}

Tensor cdc_conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias, double theta) {
  const auto eff = cdc_effective_weight(weight, theta);
  return conv2d(input, eff, bias, {1, weight.dim(2) / 2});
}

}  // namespace nn

namespace kernels {

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                          const Tensor& grad_out, nn::ConvOptions opts, bool need_dx) {
  const auto g = conv_geometry(input, weight, opts);
  if (grad_out.shape() != conv_out_shape(input, g)) {
    throw ShapeError("conv grad_out shape " + shape_string(grad_out.shape()) + " mismatch");
  }
  ConvGrads grads;
  grads.dw = Tensor(weight.shape());
  if (has_bias) grads.db = Tensor({g.cout});
  if (need_dx) grads.dx = Tensor(input.shape());

  const auto maps = tap_maps(g);
  const std::size_t k = g.patch_rows(), p = g.out_pixels();
  std::vector<double> cols(g.pointwise() ? 0 : k * p);
  std::vector<double> dcols(need_dx && !g.pointwise() ? k * p : 0);
  ConstMapMat wmat(weight.ptr(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(k));
  MapMat dwmat(grads.dw.ptr(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(k));
  for (std::size_t s = 0; s < g.n; ++s) {
    const double* x = input.ptr() + s * g.cin * g.h * g.w;
    const double* colptr = x;
    if (!g.pointwise()) {
      im2col(x, g, maps, cols.data());
      colptr = cols.data();
    }
    ConstMapMat cmat(colptr, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
    ConstMapMat gmat(grad_out.ptr() + s * g.cout * p, static_cast<Eigen::Index>(g.cout),
                     static_cast<Eigen::Index>(p));
    dwmat.noalias() += gmat * cmat.transpose();
    if (has_bias) {
      for (std::size_t o = 0; o < g.cout; ++o) grads.db[o] += gmat.row(static_cast<Eigen::Index>(o)).sum();
    }
    if (need_dx) {
      double* dx = grads.dx.ptr() + s * g.cin * g.h * g.w;
      if (g.pointwise()) {
        MapMat dxmat(dx, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        dxmat.noalias() += wmat.transpose() * gmat;
      } else {
        MapMat dcmat(dcols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        dcmat.noalias() = wmat.transpose() * gmat;
        col2im_add(dcols.data(), g, maps, dx);
      }
    }
  }
  return grads;
}

Tensor cdc_weight_backward(const Tensor& grad_effective, double theta) {
  const std::size_t cout = grad_effective.dim(0), cin = grad_effective.dim(1);
  const std::size_t kh = grad_effective.dim(2), kw = grad_effective.dim(3);
  const std::size_t taps = kh * kw, centre = (kh / 2) * kw + kw / 2;
  Tensor dw = grad_effective;
  for (std::size_t oi = 0; oi < cout * cin; ++oi) {
    const double gc = grad_effective[oi * taps + centre];
    for (std::size_t t = 0; t < taps; ++t) dw[oi * taps + t] -= theta * gc;
  }
  return dw;
}

}  // namespace kernels
}  // namespace glian
