#include "glian/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "glian/image_io.hpp"
#include "glian/nn.hpp"
#include "glian/patching.hpp"

namespace glian::metrics {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

std::vector<double> lightness(const Tensor& image) {
  patching::check_rgb(image);
  const std::size_t n = image.dim(1) * image.dim(2);
  std::vector<double> l(n);
  const auto d = image.data();
  for (std::size_t i = 0; i < n; ++i) l[i] = std::max({d[i], d[n + i], d[2 * n + i]});
  return l;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double data_range) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw ShapeError("psnr of empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(data_range * data_range / mse));
}

double ssim(const Tensor& a, const Tensor& b) { return nn::ssim_index(a, b); }

double eme(const Tensor& image, std::size_t block, double eps) {
  if (block == 0) throw std::invalid_argument("eme block size must be positive");
  const Tensor y = patching::luma(image);
  const std::size_t h = y.dim(0), w = y.dim(1);
  double total = 0.0;
  std::size_t blocks = 0;
  for (std::size_t by = 0; by < h; by += block)
    for (std::size_t bx = 0; bx < w; bx += block) {
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t yy = by; yy < std::min(h, by + block); ++yy)
        for (std::size_t xx = bx; xx < std::min(w, bx + block); ++xx) {
          const double v = y[yy * w + xx];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      total += 20.0 * std::log10((hi + eps) / (lo + eps));
      ++blocks;
    }
  return total / static_cast<double>(blocks);
}

double loe(const Tensor& original, const Tensor& enhanced, std::size_t samples,
           std::uint64_t seed) {
  require_same_shape(original, enhanced, "loe");
  const auto lo = lightness(original), le = lightness(enhanced);
  std::vector<std::size_t> idx(lo.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (samples != 0 && samples < idx.size()) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < samples; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(samples);
  }
  const std::size_t m = idx.size();
  if (m < 2) return 0.0;
  std::uint64_t disagree = 0;
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      if (a == b) continue;
      const std::size_t i = idx[a], j = idx[b];
      disagree += (lo[i] >= lo[j]) != (le[i] >= le[j]);
    }
  return 1000.0 * static_cast<double>(disagree) / static_cast<double>(m * (m - 1));
}

ImageMetrics MetricsReport::mean() const {
  if (rows.empty()) throw EvaluationError("report has no images");
  ImageMetrics m{"mean"};
  for (const auto& r : rows) {
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.eme += r.eme;
    m.loe += r.loe;
  }
  const double n = static_cast<double>(rows.size());
  m.psnr /= n;
  m.ssim /= n;
  m.eme /= n;
  m.loe /= n;
  return m;
}

namespace {

std::set<std::string> image_names(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw EvaluationError(dir.string() + ": not a directory");
  std::set<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && io::is_image_file(e.path())) names.insert(e.path().filename().string());
  }
  return names;
}

}  // namespace

MetricsReport evaluate_pairs(const std::filesystem::path& pred, const std::filesystem::path& ref,
                             const std::filesystem::path& original) {
  const std::map<std::string, std::set<std::string>> sets{
      {"pred", image_names(pred)}, {"ref", image_names(ref)}, {"orig", image_names(original)}};
  std::set<std::string> all;
  for (const auto& [_, s] : sets) all.insert(s.begin(), s.end());
  std::string missing;
  for (const auto& name : all)
    for (const auto& [dir, s] : sets)
      if (!s.count(name)) missing += "\n  " + name + " missing from " + dir;
  if (!missing.empty()) throw EvaluationError("unmatched filenames:" + missing);
  if (all.empty()) throw EvaluationError("no images to evaluate");

  MetricsReport report;
  for (const auto& name : all) {
    const Tensor p = io::read_image(pred / name);
    const Tensor r = io::read_image(ref / name);
    const Tensor o = io::read_image(original / name);
    require_same_shape(p, r, name.c_str());
    require_same_shape(p, o, name.c_str());
    report.rows.push_back({name, psnr(p, r), ssim(p, r), eme(p), loe(o, p)});
  }
  return report;
}

void write_report_csv(std::ostream& out, const MetricsReport& report) {
  auto row = [&](const ImageMetrics& m) {
    out << m.filename << ',' << m.psnr << ',' << m.ssim << ',' << m.eme << ',' << m.loe << '\n';
  };
  out << std::setprecision(10) << "filename,psnr,ssim,eme,loe\n";
  for (const auto& r : report.rows) row(r);
  out << "# ";
  row(report.mean());
}

void write_report_table(std::ostream& out, const MetricsReport& report) {
  std::size_t width = 8;
  for (const auto& r : report.rows) width = std::max(width, r.filename.size());
  auto row = [&](const ImageMetrics& m) {
    out << std::left << std::setw(static_cast<int>(width)) << m.filename << std::right << std::fixed
        << std::setprecision(4) << std::setw(10) << m.psnr << std::setw(10) << m.ssim
        << std::setw(10) << m.eme << std::setw(10) << m.loe << '\n';
  };
  out << std::left << std::setw(static_cast<int>(width)) << "filename" << std::right << std::setw(10)
      << "PSNR" << std::setw(10) << "SSIM" << std::setw(10) << "EME" << std::setw(10) << "LOE" << '\n';
  for (const auto& r : report.rows) row(r);
  out << std::string(width + 40, '-') << '\n';
  row(report.mean());
  out.unsetf(std::ios::fixed);
}

}  // namespace glian::metrics
