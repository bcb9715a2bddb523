#pragma once

// Synthetic training data shared by the training tests and the acceptance run.

#include <algorithm>
#include <cmath>

#include "glian/training.hpp"
#include "support/oracles.hpp"

namespace fixture {

using glian::Tensor;

/// Textured patch whose luma sits near `level`: a smooth ramp plus noise.
inline Tensor textured(oracle::Gen& g, std::size_t h, std::size_t w, double level, double spread = 0.05) {
  Tensor t({3, h, w});
  const double phase = g.uniform(0, 6.3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double ramp = spread * std::sin(phase + 0.4 * static_cast<double>(x + 2 * y));
        t.at(c, y, x) = std::clamp(level + ramp + g.uniform(-0.01, 0.01), 0.0, 1.0);
      }
  return t;
}

/// Low-light pair: a textured reference and its darkened, gamma-bent copy.
inline glian::train::ImagePair dark_pair(oracle::Gen& g, std::size_t h, std::size_t w, double gain = 0.25,
                                         double gamma = 1.5) {
  glian::train::ImagePair p;
  p.name = "pair";
  p.high = g.image(h, w, 0.15, 0.95);
  p.low = Tensor(p.high.shape());
  for (std::size_t i = 0; i < p.high.size(); ++i) {
    p.low[i] = std::clamp(gain * std::pow(p.high[i], gamma) + g.uniform(-0.01, 0.01), 0.0, 1.0);
  }
  return p;
}

/// Pair whose low image is already well exposed, so every patch is level 3.
inline glian::train::ImagePair bright_pair(oracle::Gen& g, std::size_t h, std::size_t w) {
  glian::train::ImagePair p;
  p.name = "bright";
  p.high = g.image(h, w, 0.85, 1.0);
  p.low = Tensor(p.high.shape());
  for (std::size_t i = 0; i < p.high.size(); ++i) p.low[i] = 0.95 * p.high[i];
  return p;
}

/// Exit data separable by brightness: dark patches (luma <= 0.3) are "not
/// exit", bright ones (>= 0.6) are "exit", half of each.
inline glian::train::ExitDataset separable_exit_data(oracle::Gen& g, std::size_t n, std::size_t patch) {
  glian::train::ExitDataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const bool bright = i % 2 == 0;
    const double level = bright ? g.uniform(0.6, 0.9) : g.uniform(0.05, 0.3);
    d.patches.push_back(textured(g, patch, patch, level));
    d.labels.push_back(bright ? glian::train::kExit : glian::train::kNotExit);
  }
  return d;
}

}  // namespace fixture
