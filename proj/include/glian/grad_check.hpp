#pragma once

// Central-difference verification of analytic gradients.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "glian/autograd.hpp"

namespace glian {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// When non-zero, at most this many elements per parameter are probed
  /// (a seeded sample); the relative error is taken over the probed ones.
  std::size_t max_elements = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  double relative_error = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  bool finite = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  bool passed = true;
  std::string failure;  // names the first offending parameter
};

/// `loss` builds a single-element loss on a fresh tape, reading every
/// checked parameter through Tape::param. Each parameter is perturbed in
/// place and restored bit-exactly afterwards.
GradCheckReport grad_check(const std::function<Var(Tape&)>& loss,
                           const std::vector<Parameter*>& params,
                           const GradCheckOptions& options = {});

}  // namespace glian
