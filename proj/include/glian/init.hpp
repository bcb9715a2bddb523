#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "glian/autograd.hpp"

namespace glian {

/// Creates named parameters for one freezing group from a seeded stream.
class ParamFactory {
 public:
  ParamFactory(std::uint64_t seed, std::string group) : rng_(seed), group_(std::move(group)) {}

  void set_group(std::string group) { group_ = std::move(group); }

  /// He-uniform convolution weight [out,in,k,k].
  Parameter conv_weight(const std::string& name, std::size_t out, std::size_t in, std::size_t k,
                        double gain = 1.0);
  /// He-uniform fully connected weight [out,in].
  Parameter fc_weight(const std::string& name, std::size_t out, std::size_t in, double gain = 1.0);
  Parameter constant(const std::string& name, Shape shape, double value);

 private:
  Parameter uniform(const std::string& name, Shape shape, double bound);

  std::mt19937_64 rng_;
  std::string group_;
};

}  // namespace glian
