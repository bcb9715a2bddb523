#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include "glian/tensor.hpp"

namespace glian::patching {

/// Rec.601 luma weights used as the brightness channel.
inline constexpr std::array<double, 3> kLumaWeights{0.299, 0.587, 0.114};

/// Non-overlapping tiling of a reflect-padded RGB image.
///
/// Padding is applied on the bottom and right edges only, so tile (r, c)
/// starts at pixel (r*P, c*P) of both the padded and the original image.
struct PatchGrid {
  std::size_t patch_size = 0;
  std::size_t rows = 0, cols = 0;
  std::size_t height = 0, width = 0;  // original image extent
  std::size_t pad_top = 0, pad_left = 0, pad_bottom = 0, pad_right = 0;
  Tensor patches;  // [rows*cols, 3, P, P], row-major tile order

  std::size_t count() const { return rows * cols; }
  std::size_t padded_height() const { return rows * patch_size; }
  std::size_t padded_width() const { return cols * patch_size; }

  Tensor patch(std::size_t index) const;
  void set_patch(std::size_t index, const Tensor& patch);
};

/// Throws ShapeError unless `image` is [3,H,W].
void check_rgb(const Tensor& image);

/// Reflect-pads the bottom/right edges of a [C,H,W] image to multiples of P.
Tensor pad_to_multiple(const Tensor& image, std::size_t patch_size);

/// Requires P >= 8, P a multiple of 4 and an image at least P pixels on each side.
PatchGrid split_patches(const Tensor& image, std::size_t patch_size);
Tensor merge_patches(const PatchGrid& grid);

/// Per-pixel luma of a [3,H,W] image as a [H,W] tensor.
Tensor luma(const Tensor& image);
double mean_brightness(const Tensor& patch);

struct Thresholds {
  double t1 = 0.25, t2 = 0.5, t3 = 0.75;

  /// Throws std::invalid_argument unless 0 < t1 < t2 < t3 < 1.
  void validate() const;
};

/// 0 = darkest, 3 = brightest; every interval is half-open [t_k, t_k+1).
int classify_brightness_level(double value, const Thresholds& thresholds);

struct RegionHistogram {
  std::size_t region = 0;        // row-major region id
  std::vector<double> frequency;  // one entry per bin, sums to 1
};

/// Luma histograms over an R x C grid of image regions with `bins` equal bins on [0,1].
std::vector<RegionHistogram> brightness_histogram(const Tensor& image, std::size_t region_rows,
                                                  std::size_t region_cols, std::size_t bins);

/// "region,bin_lower,frequency" rows with a header line.
void write_histogram_table(std::ostream& out, const std::vector<RegionHistogram>& table);

}  // namespace glian::patching
