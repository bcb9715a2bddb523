#include <cmath>
#include <stdexcept>

#include "glian/nn.hpp"
#include "kernels.hpp"

namespace glian {
namespace {

struct Planes {
  std::size_t count, h, w;
};

Planes planes_of(const Tensor& t) {
  if (t.rank() < 2) throw ShapeError("ssim expects an image with at least two dimensions");
  const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  return {t.size() / (h * w), h, w};
}

// Valid-mode separable Gaussian filtering of one h x w plane.
class ValidFilter {
 public:
  ValidFilter(std::size_t h, std::size_t w, const std::vector<double>& taps)
      : h_(h), w_(w), k_(taps.size()), ho_(h - k_ + 1), wo_(w - k_ + 1), taps_(taps),
        tmp_(h * wo_) {}

  std::size_t out_h() const { return ho_; }
  std::size_t out_w() const { return wo_; }

  void apply(const double* in, double* out) {
    for (std::size_t y = 0; y < h_; ++y)
      for (std::size_t x = 0; x < wo_; ++x) {
        double s = 0.0;
        for (std::size_t t = 0; t < k_; ++t) s += taps_[t] * in[y * w_ + x + t];
        tmp_[y * wo_ + x] = s;
      }
    for (std::size_t y = 0; y < ho_; ++y)
      for (std::size_t x = 0; x < wo_; ++x) {
        double s = 0.0;
        for (std::size_t t = 0; t < k_; ++t) s += taps_[t] * tmp_[(y + t) * wo_ + x];
        out[y * wo_ + x] = s;
      }
  }

  // out (h x w) = adjoint applied to g (ho x wo); overwrites out.
  void adjoint(const double* g, double* out) {
    std::fill(tmp_.begin(), tmp_.end(), 0.0);
    for (std::size_t y = 0; y < ho_; ++y)
      for (std::size_t t = 0; t < k_; ++t)
        for (std::size_t x = 0; x < wo_; ++x) tmp_[(y + t) * wo_ + x] += taps_[t] * g[y * wo_ + x];
    std::fill(out, out + h_ * w_, 0.0);
    for (std::size_t y = 0; y < h_; ++y)
      for (std::size_t x = 0; x < wo_; ++x)
        for (std::size_t t = 0; t < k_; ++t) out[y * w_ + x + t] += taps_[t] * tmp_[y * wo_ + x];
  }

 private:
  std::size_t h_, w_, k_, ho_, wo_;
  std::vector<double> taps_;
  std::vector<double> tmp_;
};

kernels::SsimGrad ssim_impl(const Tensor& a, const Tensor& b, nn::SsimOptions opts,
                            bool want_grad) {
  if (a.shape() != b.shape()) {
    throw ShapeError("ssim shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const auto pl = planes_of(a);
  if (pl.h < opts.window || pl.w < opts.window) {
    throw ShapeError("image " + std::to_string(pl.h) + "x" + std::to_string(pl.w) +
                     " is smaller than the " + std::to_string(opts.window) + "-pixel SSIM window");
  }
  const double c1 = std::pow(0.01 * opts.data_range, 2);
  const double c2 = std::pow(0.03 * opts.data_range, 2);
  ValidFilter filter(pl.h, pl.w, nn::gaussian_window(opts.window, opts.sigma));
  const std::size_t hw = pl.h * pl.w, no = filter.out_h() * filter.out_w();
  const double norm = 1.0 / static_cast<double>(no * pl.count);

  kernels::SsimGrad out{0.0, want_grad ? Tensor(a.shape()) : Tensor()};
  std::vector<double> sq(hw), ma(no), mb(no), qaa(no), qbb(no), qab(no);
  std::vector<double> d_ma(no), d_qaa(no), d_qab(no), back(hw);
  for (std::size_t p = 0; p < pl.count; ++p) {
    const double* pa = a.ptr() + p * hw;
    const double* pb = b.ptr() + p * hw;
    filter.apply(pa, ma.data());
    filter.apply(pb, mb.data());
    for (std::size_t i = 0; i < hw; ++i) sq[i] = pa[i] * pa[i];
    filter.apply(sq.data(), qaa.data());
    for (std::size_t i = 0; i < hw; ++i) sq[i] = pb[i] * pb[i];
    filter.apply(sq.data(), qbb.data());
    for (std::size_t i = 0; i < hw; ++i) sq[i] = pa[i] * pb[i];
    filter.apply(sq.data(), qab.data());

    for (std::size_t i = 0; i < no; ++i) {
      const double saa = qaa[i] - ma[i] * ma[i];
      const double sbb = qbb[i] - mb[i] * mb[i];
      const double sab = qab[i] - ma[i] * mb[i];
      const double a1 = 2.0 * ma[i] * mb[i] + c1;
      const double a2 = 2.0 * sab + c2;
      const double b1 = ma[i] * ma[i] + mb[i] * mb[i] + c1;
      const double b2 = saa + sbb + c2;
      const double s = (a1 * a2) / (b1 * b2);
      out.value += s;
      if (want_grad) {
        d_ma[i] = norm * ((2.0 * mb[i] * a2 - 2.0 * mb[i] * a1) / (b1 * b2) -
                          s * (2.0 * ma[i] / b1 - 2.0 * ma[i] / b2));
        d_qaa[i] = norm * (-s / b2);
        d_qab[i] = norm * (2.0 * a1 / (b1 * b2));
      }
    }
    if (want_grad) {
      double* da = out.da.ptr() + p * hw;
      filter.adjoint(d_ma.data(), back.data());
      for (std::size_t i = 0; i < hw; ++i) da[i] = back[i];
      filter.adjoint(d_qaa.data(), back.data());
      for (std::size_t i = 0; i < hw; ++i) da[i] += 2.0 * pa[i] * back[i];
      filter.adjoint(d_qab.data(), back.data());
      for (std::size_t i = 0; i < hw; ++i) da[i] += pb[i] * back[i];
    }
  }
  out.value /= static_cast<double>(no * pl.count);
  return out;
}

}  // namespace

namespace nn {

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  if (size == 0 || sigma <= 0.0) throw std::invalid_argument("invalid Gaussian window");
  std::vector<double> taps(size);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - centre;
    taps[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += taps[i];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

double ssim_index(const Tensor& a, const Tensor& b, SsimOptions opts) {
  return ssim_impl(a, b, opts, false).value;
}

}  // namespace nn

namespace kernels {

SsimGrad ssim_with_grad(const Tensor& a, const Tensor& b, nn::SsimOptions opts) {
  return ssim_impl(a, b, opts, true);
}

}  // namespace kernels
}  // namespace glian
