// glian: command-line front end over the C interface.
//
// Exit codes: 0 success, 1 runtime failure, 2 precondition or
// configuration failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "glian/glian.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitPrecondition = 2;

int exit_code(glian_status s) {
  switch (s) {
    case GLIAN_OK: return 0;
    case GLIAN_ERR_ARGUMENT:
    case GLIAN_ERR_PRECONDITION: return kExitPrecondition;
    default: return kExitRuntime;
  }
}

int report(glian_status s, const char* verb) {
  if (s != GLIAN_OK) {
    std::cerr << "glian " << verb << ": " << glian_status_name(s) << ": " << glian_last_error() << '\n';
  }
  return exit_code(s);
}

struct OwnedString {
  char* text = nullptr;
  ~OwnedString() { glian_string_free(text); }
};

struct ConfigHandle {
  glian_config* ptr = nullptr;
  ~ConfigHandle() { glian_config_destroy(ptr); }
};

struct ModelHandle {
  glian_model* ptr = nullptr;
  ~ModelHandle() { glian_model_destroy(ptr); }
};

/// Loads `path` (or the defaults) and applies "key=value" overrides.
glian_status build_config(const std::string& path, const std::vector<std::string>& overrides,
                          ConfigHandle& out) {
  glian_status s = path.empty() ? glian_config_create(&out.ptr) : glian_config_load(path.c_str(), &out.ptr);
  if (s != GLIAN_OK) return s;
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "glian: --set expects key=value, got '" << kv << "'\n";
      return GLIAN_ERR_ARGUMENT;
    }
    s = glian_config_set(out.ptr, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (s != GLIAN_OK) return s;
  }
  return GLIAN_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-wise low-light enhancement with early exits"};
  app.require_subcommand(1);

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data", "Scan a paired low/ high/ directory and write a manifest");
  std::string prep_in, prep_out;
  std::size_t prep_patch = 16;
  double prep_val = 0.2;
  std::uint64_t prep_seed = 0;
  prep->add_option("--input", prep_in, "Dataset root holding low/ and high/")->required();
  prep->add_option("--output", prep_out, "Manifest path (JSON)")->required();
  prep->add_option("--patch-size", prep_patch, "Patch size in pixels")->capture_default_str();
  prep->add_option("--val-fraction", prep_val, "Fraction of pairs held out")->capture_default_str();
  prep->add_option("--seed", prep_seed, "Split seed")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Run one training stage");
  int tr_stage = 0;
  std::string tr_config;
  std::vector<std::string> tr_set;
  bool tr_resume = false, tr_print = false;
  tr->add_option("--stage", tr_stage, "Stage 1, 2 or 3")->check(CLI::Range(1, 3));
  tr->add_option("--config", tr_config, "INI configuration file");
  tr->add_option("--set", tr_set, "Override a key, e.g. train.iterations=100");
  tr->add_flag("--resume", tr_resume, "Continue from this stage's checkpoint");
  tr->add_flag("--print-config", tr_print, "Print the effective configuration and exit");

  // enhance
  auto* en = app.add_subcommand("enhance", "Enhance one image");
  std::string en_in, en_out, en_ckpt, en_config, en_exits;
  bool en_no_exit = false;
  en->add_option("--input", en_in, "Input image (.png, .ppm)")->required();
  en->add_option("--output", en_out, "Output image (.png, .ppm)")->required();
  en->add_option("--checkpoint", en_ckpt, "Model checkpoint");
  en->add_option("--config", en_config, "Configuration (default: the checkpoint's own snapshot)");
  en->add_flag("--no-early-exit", en_no_exit, "Run every patch through all four stages");
  en->add_option("--exits", en_exits, "Write per-patch exit stages and FLOPs to this file");

  // eval
  auto* ev = app.add_subcommand("eval", "Compute PSNR, SSIM, EME and LOE over directories");
  std::string ev_pred, ev_ref, ev_orig, ev_report;
  ev->add_option("--pred", ev_pred, "Enhanced images")->required();
  ev->add_option("--ref", ev_ref, "Reference images")->required();
  ev->add_option("--orig", ev_orig, "Original low-light images")->required();
  ev->add_option("--report", ev_report, "CSV report path");

  // patch-hist
  auto* ph = app.add_subcommand("patch-hist", "Region brightness histograms of an image");
  std::string ph_in, ph_out, ph_regions = "2x2";
  std::size_t ph_bins = 16;
  ph->add_option("--input", ph_in, "Input image")->required();
  ph->add_option("--regions", ph_regions, "Region grid RxC")->capture_default_str();
  ph->add_option("--bins", ph_bins, "Histogram bins")->capture_default_str();
  ph->add_option("--output", ph_out, "CSV table path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitPrecondition;
  }

  if (*prep) {
    OwnedString summary;
    const auto s = glian_prepare_data(prep_in.c_str(), prep_out.c_str(), prep_patch, prep_val, prep_seed,
                                      &summary.text);
    if (s == GLIAN_OK) std::cout << summary.text;
    return report(s, "prepare-data");
  }

  if (*tr) {
    ConfigHandle cfg;
    if (auto s = build_config(tr_config, tr_set, cfg); s != GLIAN_OK) return report(s, "train");
    if (tr_stage != 0) {
      if (auto s = glian_config_set(cfg.ptr, "train.stage", std::to_string(tr_stage).c_str()); s != GLIAN_OK) {
        return report(s, "train");
      }
    }
    if (tr_print) {
      OwnedString text;
      const auto s = glian_config_to_text(cfg.ptr, &text.text);
      if (s == GLIAN_OK) std::cout << text.text;
      return report(s, "train");
    }
    if (tr_stage == 0 && tr_config.empty()) {
      std::cerr << "glian train: --stage is required without --config\n";
      return kExitPrecondition;
    }
    OwnedString summary;
    const auto s = glian_train(cfg.ptr, tr_resume ? 1 : 0, &summary.text);
    if (s == GLIAN_OK) std::cout << summary.text;
    return report(s, "train");
  }

  if (*en) {
    ConfigHandle cfg;
    if (!en_config.empty()) {
      if (auto s = build_config(en_config, {}, cfg); s != GLIAN_OK) return report(s, "enhance");
    }
    ModelHandle model;
    glian_status s;
    if (en_ckpt.empty()) {
      if (!cfg.ptr && (s = glian_config_create(&cfg.ptr)) != GLIAN_OK) return report(s, "enhance");
      std::cerr << "glian enhance: no --checkpoint given, using freshly initialised parameters\n";
      s = glian_model_create(cfg.ptr, &model.ptr);
    } else {
      s = glian_model_load(cfg.ptr, en_ckpt.c_str(), &model.ptr);
    }
    if (s != GLIAN_OK) return report(s, "enhance");
    glian_enhance_stats stats{};
    s = glian_enhance_file(model.ptr, en_in.c_str(), en_out.c_str(), en_no_exit ? 0 : 1,
                           en_exits.empty() ? nullptr : en_exits.c_str(), &stats);
    if (s == GLIAN_OK) {
      std::printf("%llu patches, mean exit stage %.3f, exits per stage %llu/%llu/%llu/%llu, %.4f GFLOPs\n",
                  static_cast<unsigned long long>(stats.patches), stats.mean_exit_stage,
                  static_cast<unsigned long long>(stats.exits[0]), static_cast<unsigned long long>(stats.exits[1]),
                  static_cast<unsigned long long>(stats.exits[2]), static_cast<unsigned long long>(stats.exits[3]),
                  static_cast<double>(stats.flops) * 1e-9);
    }
    return report(s, "enhance");
  }

  if (*ev) {
    OwnedString table;
    const auto s = glian_evaluate_dirs(ev_pred.c_str(), ev_ref.c_str(), ev_orig.c_str(),
                                       ev_report.empty() ? nullptr : ev_report.c_str(), &table.text);
    if (s == GLIAN_OK) std::cout << table.text;
    return report(s, "eval");
  }

  if (*ph) {
    std::size_t rows = 0, cols = 0;
    char sep = 0;
    char trailing = 0;
    if (std::sscanf(ph_regions.c_str(), "%zu%c%zu%c", &rows, &sep, &cols, &trailing) != 3 ||
        (sep != 'x' && sep != 'X')) {
      std::cerr << "glian patch-hist: --regions expects RxC, got '" << ph_regions << "'\n";
      return kExitPrecondition;
    }
    return report(glian_patch_hist(ph_in.c_str(), rows, cols, ph_bins, ph_out.c_str()), "patch-hist");
  }
  return kExitPrecondition;
}
