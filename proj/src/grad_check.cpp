#include "glian/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace glian {
namespace {

double evaluate(const std::function<Var(Tape&)>& loss) {
  Tape tape(false);
  Var l = loss(tape);
  if (l.value().size() != 1) throw ShapeError("grad_check loss must be a single element");
  return l.value()[0];
}

std::vector<std::size_t> probe_indices(std::size_t n, const GradCheckOptions& o, std::size_t salt) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (o.max_elements == 0 || o.max_elements >= n) return idx;
  std::mt19937_64 rng(o.seed * 1000003 + salt);
  for (std::size_t i = 0; i < o.max_elements; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(o.max_elements);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(const std::function<Var(Tape&)>& loss,
                           const std::vector<Parameter*>& params, const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
    for (const auto* p : params) analytic.push_back(tape.gradient(*p));
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    GradCheckEntry e;
    e.name = p.name;
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : probe_indices(p.value.size(), options, k)) {
      const double saved = p.value[i];
      p.value[i] = saved + options.step;
      const double up = evaluate(loss);
      p.value[i] = saved - options.step;
      const double down = evaluate(loss);
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      if (!std::isfinite(a) || !std::isfinite(numeric)) e.finite = false;
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    e.analytic_norm = std::sqrt(a2);
    e.numeric_norm = std::sqrt(n2);
    const double scale = std::max({e.analytic_norm, e.numeric_norm, 1e-12});
    e.relative_error = e.finite ? std::sqrt(diff2) / scale : INFINITY;
    if (scale == 1e-12) e.relative_error = 0.0;  // both gradients vanish
    report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
    if (report.passed && (!e.finite || e.relative_error > options.tolerance)) {
      report.passed = false;
      report.failure = e.finite ? p.name + ": relative error " + std::to_string(e.relative_error)
                                : p.name + ": non-finite gradient";
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace glian
