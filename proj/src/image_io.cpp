#include "glian/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace glian::io {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

Tensor from_interleaved(const std::vector<unsigned char>& px, std::size_t h, std::size_t w,
                        std::size_t channels, double maxval) {
  Tensor t({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t src = (y * w + x) * channels + (channels == 1 ? 0 : c);
        t.at(c, y, x) = px[src] / maxval;
      }
  return t;
}

std::vector<unsigned char> to_interleaved(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("images are written from [3,H,W], got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> px(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) px[(y * w + x) * 3 + c] = to_byte(image.at(c, y, x));
  return px;
}

Tensor read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ImageError(path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> px(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError(path.string() + ": " + msg);
  }
  return from_interleaved(px, img.height, img.width, 3, 255.0);
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  const auto px = to_interleaved(image);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(2));
  img.height = static_cast<png_uint_32>(image.dim(1));
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, px.data(), 0, nullptr)) {
    throw ImageError(path.string() + ": " + img.message);
  }
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

Tensor read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError(path.string() + ": cannot open");
  const std::string magic = pnm_token(in);
  if (magic != "P6" && magic != "P5") throw ImageError(path.string() + ": not a binary PPM/PGM");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pnm_token(in));
    h = std::stoul(pnm_token(in));
    maxval = std::stoul(pnm_token(in));
  } catch (const std::exception&) {
    throw ImageError(path.string() + ": malformed header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw ImageError(path.string() + ": unsupported header (8-bit images only)");
  }
  const std::size_t channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> px(w * h * channels);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (static_cast<std::size_t>(in.gcount()) != px.size()) {
    throw ImageError(path.string() + ": truncated pixel data");
  }
  return from_interleaved(px, h, w, channels, static_cast<double>(maxval));
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  const auto px = to_interleaved(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError(path.string() + ": cannot open for writing");
  out << "P6\n" << image.dim(2) << ' ' << image.dim(1) << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw ImageError(path.string() + ": write failed");
}

}  // namespace

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

bool is_image_file(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

Tensor read_image(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
  throw ImageError(path.string() + ": unsupported image extension");
}

void write_image(const std::filesystem::path& path, const Tensor& image) {
  const auto ext = lower_extension(path);
  if (ext == ".png") return write_png(path, image);
  if (ext == ".ppm") return write_ppm(path, image);
  throw ImageError(path.string() + ": unsupported output extension (use .png or .ppm)");
}

}  // namespace glian::io
