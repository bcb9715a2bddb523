#pragma once

// Paired dataset layout: <root>/low/<name> and <root>/high/<name>.
// The manifest records the patch-brightness quartiles used as level
// thresholds, the patch size and a seeded train/validation split.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "glian/patching.hpp"
#include "glian/training.hpp"

namespace glian::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Manifest {
  std::string root;
  std::size_t patch_size = 16;
  patching::Thresholds thresholds;
  std::vector<std::string> train, val;
  std::array<std::uint64_t, 4> level_counts{};  // patches per level over all images
};

std::string to_json(const Manifest& manifest);
Manifest parse_manifest(const std::string& json);
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Linear-interpolation quantile of unsorted values, q in [0,1].
double quantile(std::vector<double> values, double q);

/// Sorted names present in both low/ and high/. Throws DataError listing
/// every unpaired name when the two sets differ or are empty.
std::vector<std::string> paired_names(const std::filesystem::path& root);

/// Quartile thresholds over every low-light patch mean brightness, level
/// counts under those thresholds, and a seeded split.
Manifest prepare_data(const std::filesystem::path& root, std::size_t patch_size, double val_fraction,
                      std::uint64_t seed);

std::vector<train::ImagePair> load_pairs(const Manifest& manifest, const std::vector<std::string>& names);

}  // namespace glian::data
