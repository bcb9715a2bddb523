#include "glian/glian.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "glian/config.hpp"
#include "glian/dataset.hpp"
#include "glian/image_io.hpp"
#include "glian/metrics.hpp"
#include "glian/model.hpp"
#include "glian/patching.hpp"
#include "glian/training.hpp"

struct glian_config {
  glian::Config config;
};

struct glian_model {
  glian::Model model;
};

namespace {

namespace fs = std::filesystem;
using namespace glian;

thread_local std::string g_last_error;

class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

glian_status fail(glian_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <class Fn>
glian_status guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return GLIAN_OK;
  } catch (const PreconditionError& e) {
    return fail(GLIAN_ERR_PRECONDITION, e.what());
  } catch (const ckpt::CheckpointError& e) {
    return fail(e.kind() == ckpt::ErrorKind::kIo ? GLIAN_ERR_IO : GLIAN_ERR_FORMAT, e.what());
  } catch (const io::ImageError& e) {
    return fail(GLIAN_ERR_IO, e.what());
  } catch (const data::DataError& e) {
    return fail(GLIAN_ERR_FORMAT, e.what());
  } catch (const metrics::EvaluationError& e) {
    return fail(GLIAN_ERR_IO, e.what());
  } catch (const NumericError& e) {
    return fail(GLIAN_ERR_NUMERIC, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(GLIAN_ERR_ARGUMENT, e.what());
  } catch (const std::out_of_range& e) {
    return fail(GLIAN_ERR_ARGUMENT, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(GLIAN_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(GLIAN_ERR_INTERNAL, e.what());
  }
}

char* duplicate(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw std::invalid_argument(std::string(what) + " must not be null");
}

// --- training workflow -----------------------------------------------------------

fs::path checkpoint_path(const Config& c, int stage) {
  return fs::path(c.output_dir) / ("stage" + std::to_string(stage) + ".ckpt");
}

struct RunState {
  Model model;
  train::Adam adam;
  std::set<int> stages;      // provenance before this run
  std::size_t start = 0;     // iterations already done in this stage
};

RunState initial_state(const Config& c, bool resume) {
  const int stage = c.train.stage;
  RunState s{make_model(c.model_config()), train::Adam({c.train.learning_rate}), {}, 0};
  auto load = [&](const fs::path& p) {
    auto info = train::load_checkpoint(p, s.model, &s.adam);
    s.stages = info.stages;
    return info;
  };
  if (resume) {
    const auto own = checkpoint_path(c, stage);
    if (!fs::exists(own)) throw PreconditionError("--resume: no checkpoint at " + own.string());
    auto info = load(own);
    const auto it = info.metadata.find("stage");
    if (it == info.metadata.end() || it->second != std::to_string(stage)) {
      throw PreconditionError(own.string() + " was not written by stage " + std::to_string(stage));
    }
    s.stages.erase(stage);
    s.start = info.iteration;
    return s;
  }
  if (stage == 2 && fs::exists(checkpoint_path(c, 1))) load(checkpoint_path(c, 1));
  if (stage == 3) {
    const auto prior = checkpoint_path(c, 2);
    if (!fs::exists(prior)) {
      throw PreconditionError("stage 3 requires the stage-2 checkpoint " + prior.string() +
                              " (itself trained from stage 1)");
    }
    load(prior);
    if (!s.stages.count(1) || !s.stages.count(2)) {
      throw PreconditionError(prior.string() + " covers stages {" + train::format_stages(s.stages) +
                              "}; stage 3 needs stages 1 and 2");
    }
  }
  return s;
}

std::string train_workflow(const Config& c, bool resume) {
  c.validate();
  if (c.manifest.empty()) throw std::invalid_argument("data.manifest is not set");
  const auto manifest = data::load_manifest(c.manifest);
  if (manifest.patch_size != c.model.patch_size) {
    throw std::invalid_argument("manifest patch size " + std::to_string(manifest.patch_size) +
                                " differs from model.patch_size " + std::to_string(c.model.patch_size));
  }
  const int stage = c.train.stage;
  const patching::Thresholds thresholds = c.fixed_thresholds ? patching::Thresholds{} : manifest.thresholds;
  RunState state = initial_state(c, resume);
  fs::create_directories(c.output_dir);

  const fs::path log_path = fs::path(c.output_dir) / ("stage" + std::to_string(stage) + ".log");
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw io::ImageError("cannot write " + log_path.string());
  if (!resume) log << train::kLogHeader << '\n';

  std::set<int> provenance = state.stages;
  provenance.insert(stage);
  auto save = [&](std::size_t iteration) {
    train::save_checkpoint(checkpoint_path(c, stage), state.model, &state.adam,
                           {{"stage", std::to_string(stage)},
                            {"stages", train::format_stages(provenance)},
                            {"iteration", std::to_string(iteration)},
                            {"config", to_ini(c)}});
  };
  train::Hooks hooks;
  hooks.on_step = [&](const train::LogEntry& e) {
    log << train::format_log(e) << '\n';
    if (c.train.checkpoint_every && e.iteration % c.train.checkpoint_every == 0) save(e.iteration);
  };

  const auto train_pairs = data::load_pairs(manifest, manifest.train);
  std::ostringstream summary;
  train::StageResult r;
  if (stage == 1) {
    const auto ds = train::make_patch_dataset(train_pairs, manifest.patch_size, thresholds);
    r = train::run_stage1(state.model, state.adam, ds, c.train, state.start, hooks);
  } else if (stage == 2) {
    const auto ds = train::make_exit_dataset(
        train::make_patch_dataset(train_pairs, manifest.patch_size, thresholds), c.train.exit_min_level);
    train::ExitDataset train_set = ds, val_set;
    if (!manifest.val.empty()) {
      val_set = train::make_exit_dataset(
          train::make_patch_dataset(data::load_pairs(manifest, manifest.val), manifest.patch_size, thresholds),
          c.train.exit_min_level);
    } else {
      std::tie(train_set, val_set) = train::split_exit_dataset(ds, c.train.val_fraction, c.train.seed);
    }
    r = train::run_stage2(state.model, state.adam, train_set, val_set, c.train, state.start, hooks);
    summary << "held-out accuracy " << r.accuracy << '\n';
  } else {
    r = train::run_stage3(state.model, state.adam, train_pairs, c.train, state.start, hooks);
    summary << "training PSNR " << r.psnr << " dB\n";
  }
  save(r.iterations);
  for (const auto& w : r.warnings) summary << "warning: " << w << '\n';
  summary << "stage " << stage << ": " << r.iterations << " iterations, final loss " << r.final_loss
          << ", checkpoint " << checkpoint_path(c, stage).string() << '\n';
  return summary.str();
}

}  // namespace

extern "C" {

const char* glian_last_error(void) { return g_last_error.c_str(); }

const char* glian_status_name(glian_status status) {
  switch (status) {
    case GLIAN_OK: return "ok";
    case GLIAN_ERR_ARGUMENT: return "invalid argument";
    case GLIAN_ERR_IO: return "i/o error";
    case GLIAN_ERR_FORMAT: return "format error";
    case GLIAN_ERR_PRECONDITION: return "precondition failed";
    case GLIAN_ERR_NUMERIC: return "numeric error";
    case GLIAN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void glian_string_free(char* text) { delete[] text; }

glian_status glian_config_create(glian_config** out) {
  return guard([&] {
    require(out, "out");
    auto* c = new glian_config{};
    apply_environment(c->config);
    *out = c;
  });
}

glian_status glian_config_load(const char* path, glian_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    auto c = std::make_unique<glian_config>(glian_config{load_config(path)});
    apply_environment(c->config);
    *out = c.release();
  });
}

glian_status glian_config_set(glian_config* config, const char* key, const char* value) {
  return guard([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    set_option(config->config, key, value);
  });
}

glian_status glian_config_get(const glian_config* config, const char* key, char** value) {
  return guard([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    *value = duplicate(get_option(config->config, key));
  });
}

glian_status glian_config_to_text(const glian_config* config, char** text) {
  return guard([&] {
    require(config, "config");
    require(text, "text");
    *text = duplicate(to_ini(config->config));
  });
}

void glian_config_destroy(glian_config* config) { delete config; }

glian_status glian_model_create(const glian_config* config, glian_model** out) {
  return guard([&] {
    require(config, "config");
    require(out, "out");
    config->config.validate();
    *out = new glian_model{make_model(config->config.model_config())};
  });
}

glian_status glian_model_load(const glian_config* config, const char* path, glian_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    const auto archive = ckpt::read_archive(path);
    Config cfg;
    if (config) {
      cfg = config->config;
    } else if (auto it = archive.metadata.find("config"); it != archive.metadata.end()) {
      std::istringstream snapshot(it->second);
      cfg = parse_config(snapshot);
    }
    cfg.validate();
    auto m = std::make_unique<glian_model>(glian_model{make_model(cfg.model_config())});
    train::restore_archive(archive, m->model, nullptr);
    *out = m.release();
  });
}

glian_status glian_model_save(const glian_model* model, const char* path) {
  return guard([&] {
    require(model, "model");
    require(path, "path");
    train::save_checkpoint(path, model->model, nullptr, {});
  });
}

uint64_t glian_model_param_count(const glian_model* model) {
  return model ? model->model.parameter_count() : 0;
}

void glian_model_destroy(glian_model* model) { delete model; }

glian_status glian_enhance_file(const glian_model* model, const char* input, const char* output,
                                int early_exit, const char* exits_path, glian_enhance_stats* stats) {
  return guard([&] {
    require(model, "model");
    require(input, "input");
    require(output, "output");
    const Tensor image = io::read_image(input);
    const std::size_t p = model->model.config.patch_size;
    if (image.dim(1) < p || image.dim(2) < p) {
      throw std::invalid_argument(std::string(input) + ": " + std::to_string(image.dim(2)) + "x" +
                                  std::to_string(image.dim(1)) + " is smaller than the " +
                                  std::to_string(p) + "-pixel patch size");
    }
    const auto e = enhance_image(image, model->model, early_exit != 0);
    io::write_image(output, e.image);
    if (exits_path) {
      std::ofstream out(exits_path);
      if (!out) throw io::ImageError(std::string("cannot write ") + exits_path);
      out << "rows=" << e.rows << " cols=" << e.cols << " flops=" << e.cost.flops
          << " early_exit=" << (early_exit ? 1 : 0) << '\n';
      for (std::size_t r = 0; r < e.rows; ++r) {
        for (std::size_t c = 0; c < e.cols; ++c) out << (c ? " " : "") << e.exit_stage[r * e.cols + c];
        out << '\n';
      }
    }
    if (stats) {
      *stats = {};
      stats->flops = e.cost.flops;
      stats->patches = e.exit_stage.size();
      double sum = 0.0;
      for (auto s : e.exit_stage) {
        ++stats->exits[s - 1];
        sum += static_cast<double>(s);
      }
      stats->mean_exit_stage = sum / static_cast<double>(e.exit_stage.size());
    }
  });
}

glian_status glian_prepare_data(const char* root, const char* manifest_path, size_t patch_size,
                                double val_fraction, uint64_t seed, char** summary) {
  return guard([&] {
    require(root, "root");
    require(manifest_path, "manifest_path");
    const auto m = data::prepare_data(root, patch_size, val_fraction, seed);
    data::save_manifest(manifest_path, m);
    if (summary) {
      std::ostringstream s;
      std::uint64_t total = 0;
      for (auto n : m.level_counts) total += n;
      s << m.train.size() + m.val.size() << " pairs (" << m.train.size() << " train, " << m.val.size()
        << " val), " << total << " patches of " << patch_size << " px\n";
      s << "thresholds " << m.thresholds.t1 << ' ' << m.thresholds.t2 << ' ' << m.thresholds.t3 << '\n';
      for (int l = 0; l < 4; ++l) s << "level " << l << ": " << m.level_counts[l] << " patches\n";
      *summary = duplicate(s.str());
    }
  });
}

glian_status glian_train(const glian_config* config, int resume, char** summary) {
  return guard([&] {
    require(config, "config");
    const std::string s = train_workflow(config->config, resume != 0);
    if (summary) *summary = duplicate(s);
  });
}

glian_status glian_evaluate_dirs(const char* pred_dir, const char* ref_dir, const char* orig_dir,
                                 const char* report_path, char** table) {
  return guard([&] {
    require(pred_dir, "pred_dir");
    require(ref_dir, "ref_dir");
    require(orig_dir, "orig_dir");
    const auto report = metrics::evaluate_pairs(pred_dir, ref_dir, orig_dir);
    if (report_path) {
      std::ofstream out(report_path);
      if (!out) throw metrics::EvaluationError(std::string("cannot write ") + report_path);
      metrics::write_report_csv(out, report);
    }
    if (table) {
      std::ostringstream s;
      metrics::write_report_table(s, report);
      *table = duplicate(s.str());
    }
  });
}

glian_status glian_patch_hist(const char* input, size_t region_rows, size_t region_cols, size_t bins,
                              const char* output_path) {
  return guard([&] {
    require(input, "input");
    require(output_path, "output_path");
    const auto hist = patching::brightness_histogram(io::read_image(input), region_rows, region_cols, bins);
    std::ofstream out(output_path);
    if (!out) throw io::ImageError(std::string("cannot write ") + output_path);
    patching::write_histogram_table(out, hist);
  });
}

}  // extern "C"
