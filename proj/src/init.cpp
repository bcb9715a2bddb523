#include "glian/init.hpp"

#include <cmath>

namespace glian {

Parameter ParamFactory::uniform(const std::string& name, Shape shape, double bound) {
  Tensor t(std::move(shape));
  // Drawn from raw 53-bit integers so the stream does not depend on the
  // standard library's distribution implementation.
  for (auto& v : t.data()) {
    const double u = static_cast<double>(rng_() >> 11) * (1.0 / 9007199254740992.0);
    v = (2.0 * u - 1.0) * bound;
  }
  return Parameter(name, group_, std::move(t));
}

Parameter ParamFactory::conv_weight(const std::string& name, std::size_t out, std::size_t in,
                                    std::size_t k, double gain) {
  const double fan_in = static_cast<double>(in * k * k);
  return uniform(name, {out, in, k, k}, gain * std::sqrt(6.0 / fan_in));
}

Parameter ParamFactory::fc_weight(const std::string& name, std::size_t out, std::size_t in,
                                  double gain) {
  return uniform(name, {out, in}, gain * std::sqrt(6.0 / static_cast<double>(in)));
}

Parameter ParamFactory::constant(const std::string& name, Shape shape, double value) {
  return Parameter(name, group_, Tensor(std::move(shape), value));
}

}  // namespace glian
