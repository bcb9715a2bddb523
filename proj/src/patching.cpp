#include "glian/patching.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "kernels.hpp"

namespace glian::patching {

void check_rgb(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("expected an RGB image [3,H,W], got " + shape_string(image.shape()));
  }
}

Tensor PatchGrid::patch(std::size_t index) const {
  if (index >= count()) throw std::out_of_range("patch index out of range");
  const std::size_t n = 3 * patch_size * patch_size;
  std::vector<double> data(patches.ptr() + index * n, patches.ptr() + (index + 1) * n);
  return Tensor({3, patch_size, patch_size}, std::move(data));
}

void PatchGrid::set_patch(std::size_t index, const Tensor& patch) {
  if (index >= count()) throw std::out_of_range("patch index out of range");
  if (patch.shape() != Shape{3, patch_size, patch_size}) {
    throw ShapeError("patch must be [3," + std::to_string(patch_size) + "," +
                     std::to_string(patch_size) + "], got " + shape_string(patch.shape()));
  }
  std::copy_n(patch.ptr(), patch.size(), patches.ptr() + index * patch.size());
}

Tensor pad_to_multiple(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3) throw ShapeError("pad_to_multiple expects [C,H,W]");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::size_t ph = (h + patch_size - 1) / patch_size * patch_size;
  const std::size_t pw = (w + patch_size - 1) / patch_size * patch_size;
  if (ph - h >= h || pw - w >= w) {
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) +
                     " too small to reflect-pad to patch size " + std::to_string(patch_size));
  }
  Tensor out({c, ph, pw});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < ph; ++y) {
      const std::size_t sy = kernels::reflect_index(static_cast<std::ptrdiff_t>(y), h);
      for (std::size_t x = 0; x < pw; ++x) {
        const std::size_t sx = kernels::reflect_index(static_cast<std::ptrdiff_t>(x), w);
        out[(ch * ph + y) * pw + x] = image[(ch * h + sy) * w + sx];
      }
    }
  return out;
}

PatchGrid split_patches(const Tensor& image, std::size_t patch_size) {
  check_rgb(image);
  if (patch_size < 8 || patch_size % 4 != 0) {
    throw std::invalid_argument("patch size must be a multiple of 4 and at least 8, got " +
                                std::to_string(patch_size));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h < patch_size || w < patch_size) {
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) +
                     " is smaller than patch size " + std::to_string(patch_size));
  }
  PatchGrid g;
  g.patch_size = patch_size;
  g.height = h;
  g.width = w;
  g.rows = (h + patch_size - 1) / patch_size;
  g.cols = (w + patch_size - 1) / patch_size;
  g.pad_bottom = g.padded_height() - h;
  g.pad_right = g.padded_width() - w;

  const Tensor padded = pad_to_multiple(image, patch_size);
  const std::size_t pw = g.padded_width(), ph = g.padded_height();
  g.patches = Tensor({g.count(), 3, patch_size, patch_size});
  double* dst = g.patches.ptr();
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t col = 0; col < g.cols; ++col)
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < patch_size; ++y) {
          const double* src = padded.ptr() + (ch * ph + r * patch_size + y) * pw + col * patch_size;
          dst = std::copy_n(src, patch_size, dst);
        }
  return g;
}

Tensor merge_patches(const PatchGrid& grid) {
  const std::size_t p = grid.patch_size;
  if (grid.patches.shape() != Shape{grid.count(), 3, p, p}) {
    throw ShapeError("patch grid holds " + shape_string(grid.patches.shape()) + ", expected [" +
                     std::to_string(grid.count()) + ",3," + std::to_string(p) + "," +
                     std::to_string(p) + "]");
  }
  if (grid.height + grid.pad_top + grid.pad_bottom != grid.padded_height() ||
      grid.width + grid.pad_left + grid.pad_right != grid.padded_width()) {
    throw ShapeError("patch grid padding is inconsistent with its extent");
  }
  Tensor out({3, grid.height, grid.width});
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < grid.height; ++y) {
      const std::size_t py = y + grid.pad_top;
      for (std::size_t x = 0; x < grid.width; ++x) {
        const std::size_t px = x + grid.pad_left;
        const std::size_t tile = (py / p) * grid.cols + px / p;
        out[(ch * grid.height + y) * grid.width + x] =
            grid.patches[((tile * 3 + ch) * p + py % p) * p + px % p];
      }
    }
  return out;
}

Tensor luma(const Tensor& image) {
  check_rgb(image);
  const std::size_t h = image.dim(1), w = image.dim(2), n = h * w;
  Tensor y({h, w});
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = kLumaWeights[0] * image[i] + kLumaWeights[1] * image[n + i] +
           kLumaWeights[2] * image[2 * n + i];
  }
  return y;
}

double mean_brightness(const Tensor& patch) {
  const Tensor y = luma(patch);
  double s = 0.0;
  for (double v : y.data()) s += v;
  return s / static_cast<double>(y.size());
}

void Thresholds::validate() const {
  if (!(0.0 < t1 && t1 < t2 && t2 < t3 && t3 < 1.0)) {
    throw std::invalid_argument("brightness thresholds must satisfy 0 < t1 < t2 < t3 < 1, got " +
                                std::to_string(t1) + "," + std::to_string(t2) + "," +
                                std::to_string(t3));
  }
}

int classify_brightness_level(double value, const Thresholds& thresholds) {
  thresholds.validate();
  if (value < thresholds.t1) return 0;
  if (value < thresholds.t2) return 1;
  if (value < thresholds.t3) return 2;
  return 3;
}

std::vector<RegionHistogram> brightness_histogram(const Tensor& image, std::size_t region_rows,
                                                  std::size_t region_cols, std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("histogram needs at least two bins");
  const Tensor y = luma(image);
  const std::size_t h = y.dim(0), w = y.dim(1);
  if (region_rows == 0 || region_cols == 0 || region_rows > h || region_cols > w) {
    throw std::invalid_argument("region grid must be between 1x1 and the image extent");
  }
  std::vector<RegionHistogram> table;
  for (std::size_t r = 0; r < region_rows; ++r)
    for (std::size_t c = 0; c < region_cols; ++c) {
      RegionHistogram hist{r * region_cols + c, std::vector<double>(bins, 0.0)};
      const std::size_t y0 = r * h / region_rows, y1 = (r + 1) * h / region_rows;
      const std::size_t x0 = c * w / region_cols, x1 = (c + 1) * w / region_cols;
      for (std::size_t yy = y0; yy < y1; ++yy)
        for (std::size_t xx = x0; xx < x1; ++xx) {
          const double v = std::clamp(y[yy * w + xx], 0.0, 1.0);
          const auto bin = std::min(static_cast<std::size_t>(v * static_cast<double>(bins)), bins - 1);
          hist.frequency[bin] += 1.0;
        }
      const double total = static_cast<double>((y1 - y0) * (x1 - x0));
      for (auto& f : hist.frequency) f /= total;
      table.push_back(std::move(hist));
    }
  return table;
}

void write_histogram_table(std::ostream& out, const std::vector<RegionHistogram>& table) {
  out << "region,bin_lower,frequency\n";
  for (const auto& h : table) {
    const double width = 1.0 / static_cast<double>(h.frequency.size());
    for (std::size_t b = 0; b < h.frequency.size(); ++b) {
      out << h.region << ',' << static_cast<double>(b) * width << ',' << h.frequency[b] << '\n';
    }
  }
}

}  // namespace glian::patching
