#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "glian/tensor.hpp"

namespace glian::metrics {

/// Reported for identical images instead of +inf.
inline constexpr double kPsnrCap = 99.0;

double psnr(const Tensor& a, const Tensor& b, double data_range = 1.0);

/// SSIM with the default 11-tap Gaussian window.
double ssim(const Tensor& a, const Tensor& b);

/// Mean over block x block tiles of the luma image (edge tiles may be
/// smaller) of 20 log10((max + eps) / (min + eps)).
double eme(const Tensor& image, std::size_t block = 8, double eps = 1e-4);

/// Lightness order error: over ordered pairs (i, j), i != j, of sampled
/// pixels, the fraction whose max-RGB order relation (>=) differs between
/// the two images, times 1000. `samples` = 0 uses every pixel.
double loe(const Tensor& original, const Tensor& enhanced, std::size_t samples = 500,
           std::uint64_t seed = 0);

struct ImageMetrics {
  std::string filename;
  double psnr = 0.0, ssim = 0.0, eme = 0.0, loe = 0.0;
};

struct MetricsReport {
  std::vector<ImageMetrics> rows;

  /// Arithmetic means; filename is "mean".
  ImageMetrics mean() const;
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// PSNR/SSIM of pred vs ref, EME of pred, LOE of pred vs original, for
/// every filename present in all three directories. Unmatched filename
/// sets are an error that lists the differences.
MetricsReport evaluate_pairs(const std::filesystem::path& pred, const std::filesystem::path& ref,
                             const std::filesystem::path& original);

/// "filename,psnr,ssim,eme,loe" rows; means follow on a '#' comment line.
void write_report_csv(std::ostream& out, const MetricsReport& report);
void write_report_table(std::ostream& out, const MetricsReport& report);

}  // namespace glian::metrics
