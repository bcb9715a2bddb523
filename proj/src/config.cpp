#include "glian/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace glian {
namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": cannot parse '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

template <class T>
std::string show(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string show(bool v) { return v ? "true" : "false"; }

struct Option {
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

template <class T>
Option field(std::string key, T Config::*part, auto member) {
  using V = std::remove_reference_t<decltype(std::declval<T&>().*member)>;
  return {key, [=](const Config& c) { return show((c.*part).*member); },
          [=](Config& c, const std::string& text) {
            if constexpr (std::is_same_v<V, bool>) {
              (c.*part).*member = parse_bool(key, text);
            } else {
              (c.*part).*member = parse_number<V>(key, text);
            }
          }};
}

Option text_field(std::string key, std::string Config::*member) {
  return {key, [=](const Config& c) { return c.*member; },
          [=](Config& c, const std::string& text) { c.*member = text; }};
}

const std::vector<Option>& options() {
  static const std::vector<Option> table = [] {
    using M = ModelConfig;
    using T = train::TrainConfig;
    const auto model = &Config::model;
    const auto tr = &Config::train;
    return std::vector<Option>{
        field("model.width", model, &M::width),
        field("model.theta", model, &M::theta),
        field("model.patch_size", model, &M::patch_size),
        field("model.embed_dim", model, &M::embed_dim),
        field("model.tau", model, &M::tau),
        field("model.use_ldm", model, &M::use_ldm),
        field("model.use_gign", model, &M::use_gign),
        field("model.use_gaem", model, &M::use_gaem),
        field("model.use_refine", model, &M::use_refine),
        field("train.stage", tr, &T::stage),
        field("train.learning_rate", tr, &T::learning_rate),
        field("train.batch_size", tr, &T::batch_size),
        field("train.epochs", tr, &T::epochs),
        field("train.iterations", tr, &T::iterations),
        field("train.lambda_l1", tr, &T::lambda_l1),
        field("train.lambda_ce", tr, &T::lambda_ce),
        field("train.lambda_ssim", tr, &T::lambda_ssim),
        field("train.seed", tr, &T::seed),
        field("train.exit_min_level", tr, &T::exit_min_level),
        field("train.val_fraction", tr, &T::val_fraction),
        field("train.target_psnr", tr, &T::target_psnr),
        field("train.checkpoint_every", tr, &T::checkpoint_every),
        text_field("data.manifest", &Config::manifest),
        {"data.fixed_thresholds", [](const Config& c) { return show(c.fixed_thresholds); },
         [](Config& c, const std::string& text) { c.fixed_thresholds = parse_bool("data.fixed_thresholds", text); }},
        text_field("output.dir", &Config::output_dir),
    };
  }();
  return table;
}

const Option& find_option(const std::string& key) {
  for (const auto& o : options())
    if (o.key == key) return o;
  throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

ModelConfig Config::model_config() const {
  ModelConfig m = model;
  m.seed = train.seed;
  return m;
}

void Config::validate() const {
  try {
    model.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void set_option(Config& config, const std::string& key, const std::string& value) {
  find_option(key).set(config, value);
}

std::string get_option(const Config& config, const std::string& key) {
  return find_option(key).get(config);
}

std::vector<std::string> option_keys() {
  std::vector<std::string> keys;
  for (const auto& o : options()) keys.push_back(o.key);
  return keys;
}

Config parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  Config config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' lies outside any section");
    for (const auto& [key, value] : body) set_option(config, section + "." + key, value.data());
  }
  config.validate();
  return config;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration " + path.string());
  return parse_config(in);
}

std::string to_ini(const Config& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& o : options()) {
    const auto dot = o.key.find('.');
    const std::string s = o.key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    out << o.key.substr(dot + 1) << " = " << o.get(config) << '\n';
  }
  return out.str();
}

bool apply_environment(Config& config) {
  const char* seed = std::getenv("GLIAN_SEED");
  if (!seed || !*seed) return false;
  set_option(config, "train.seed", seed);
  return true;
}

}  // namespace glian
