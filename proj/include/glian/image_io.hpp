#pragma once

#include <filesystem>
#include <stdexcept>

#include "glian/tensor.hpp"

namespace glian::io {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads an 8-bit PNG or a binary PPM/PGM (P6/P5) as [3,H,W] in [0,1].
/// Grey images are replicated across the three channels.
Tensor read_image(const std::filesystem::path& path);

/// Writes [3,H,W] values clamped to [0,1], rounded to the nearest 8-bit
/// level. The format follows the extension (.png, .ppm).
void write_image(const std::filesystem::path& path, const Tensor& image);

/// 8-bit quantisation used on save: round(clamp(v,0,1) * 255).
unsigned char to_byte(double v);

bool is_image_file(const std::filesystem::path& path);

}  // namespace glian::io
