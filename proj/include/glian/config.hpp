#pragma once

// INI configuration mirroring ModelConfig and TrainConfig:
//
//   [model]  width theta patch_size embed_dim tau use_ldm use_gign use_gaem use_refine
//   [train]  stage learning_rate batch_size epochs iterations lambda_l1 lambda_ce
//            lambda_ssim seed exit_min_level val_fraction target_psnr checkpoint_every
//   [data]   manifest fixed_thresholds
//   [output] dir
//
// Unknown sections or keys are rejected. GLIAN_SEED, when set, replaces
// train.seed.

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "glian/model.hpp"
#include "glian/training.hpp"

namespace glian {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Config {
  ModelConfig model;
  train::TrainConfig train;
  std::string manifest;
  /// Level thresholds 0.25/0.5/0.75 instead of the manifest's quartiles.
  bool fixed_thresholds = false;
  std::string output_dir = "runs";

  /// Model config with the seed taken from train.seed.
  ModelConfig model_config() const;
  void validate() const;
};

/// Applies "section.key" = value. Throws ConfigError on an unknown key or
/// an unparsable value.
void set_option(Config& config, const std::string& key, const std::string& value);
std::string get_option(const Config& config, const std::string& key);
std::vector<std::string> option_keys();

Config parse_config(std::istream& in);
Config load_config(const std::filesystem::path& path);
std::string to_ini(const Config& config);

/// Honours GLIAN_SEED; returns true when it changed the seed.
bool apply_environment(Config& config);

}  // namespace glian
