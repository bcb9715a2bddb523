#include "glian/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "glian/image_io.hpp"

namespace glian::data {
namespace {

using nlohmann::json;

std::set<std::string> image_names(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError(dir.string() + ": missing directory");
  std::set<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && io::is_image_file(e.path())) names.insert(e.path().filename().string());
  }
  return names;
}

}  // namespace

std::string to_json(const Manifest& m) {
  json j;
  j["root"] = m.root;
  j["patch_size"] = m.patch_size;
  j["thresholds"] = {m.thresholds.t1, m.thresholds.t2, m.thresholds.t3};
  j["train"] = m.train;
  j["val"] = m.val;
  j["level_counts"] = m.level_counts;
  return j.dump(2) + "\n";
}

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  try {
    const json j = json::parse(text);
    m.root = j.at("root").get<std::string>();
    m.patch_size = j.at("patch_size").get<std::size_t>();
    const auto t = j.at("thresholds").get<std::vector<double>>();
    if (t.size() != 3) throw DataError("manifest needs exactly three thresholds");
    m.thresholds = {t[0], t[1], t[2]};
    m.train = j.at("train").get<std::vector<std::string>>();
    m.val = j.at("val").get<std::vector<std::string>>();
    if (j.contains("level_counts")) m.level_counts = j.at("level_counts").get<std::array<std::uint64_t, 4>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  try {
    m.thresholds.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("manifest thresholds: ") + e.what());
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return parse_manifest(s.str());
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << to_json(manifest);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile order must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<std::string> paired_names(const std::filesystem::path& root) {
  const auto low = image_names(root / "low"), high = image_names(root / "high");
  std::string problems;
  for (const auto& n : low)
    if (!high.count(n)) problems += "\n  high/" + n + " missing";
  for (const auto& n : high)
    if (!low.count(n)) problems += "\n  low/" + n + " missing";
  if (!problems.empty()) throw DataError("unpaired images:" + problems);
  if (low.empty()) throw DataError(root.string() + ": no image pairs found");
  return {low.begin(), low.end()};
}

Manifest prepare_data(const std::filesystem::path& root, std::size_t patch_size, double val_fraction,
                      std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("val_fraction must lie in [0,1)");
  const auto names = paired_names(root);
  std::vector<double> brightness;
  std::string unreadable;
  for (const auto& n : names) {
    try {
      const Tensor low = io::read_image(root / "low" / n);
      const Tensor high = io::read_image(root / "high" / n);
      if (low.shape() != high.shape()) {
        unreadable += "\n  " + n + ": low/high sizes differ";
        continue;
      }
      const auto grid = patching::split_patches(low, patch_size);
      for (std::size_t k = 0; k < grid.count(); ++k) brightness.push_back(patching::mean_brightness(grid.patch(k)));
    } catch (const std::exception& e) {
      unreadable += "\n  " + n + ": " + e.what();
    }
  }
  if (!unreadable.empty()) throw DataError("unusable images:" + unreadable);

  Manifest m;
  m.root = std::filesystem::absolute(root).lexically_normal().string();
  m.patch_size = patch_size;
  m.thresholds = {quantile(brightness, 0.25), quantile(brightness, 0.5), quantile(brightness, 0.75)};
  try {
    m.thresholds.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("patch brightness quartiles are degenerate: ") + e.what());
  }
  for (double b : brightness) ++m.level_counts[patching::classify_brightness_level(b, m.thresholds)];

  std::vector<std::string> order = names;
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::size_t n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(order.size())));
  n_val = std::min(n_val, order.size() - 1);
  m.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  m.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(m.val.begin(), m.val.end());
  std::sort(m.train.begin(), m.train.end());
  return m;
}

std::vector<train::ImagePair> load_pairs(const Manifest& manifest, const std::vector<std::string>& names) {
  std::vector<train::ImagePair> pairs;
  const std::filesystem::path root = manifest.root;
  for (const auto& n : names) {
    pairs.push_back({n, io::read_image(root / "low" / n), io::read_image(root / "high" / n)});
  }
  return pairs;
}

}  // namespace glian::data
