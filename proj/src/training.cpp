#include "glian/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "glian/metrics.hpp"

namespace glian::train {
namespace {

constexpr const char* kMomentM = "adam.m/";
constexpr const char* kMomentV = "adam.v/";
constexpr const char* kMomentStep = "adam.step/";

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

/// Sample indices of optimizer step `iteration`: block `iteration mod B` of
/// the permutation for epoch `iteration div B`, B = ceil(n / batch).
std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::uint64_t seed,
                                       std::size_t iteration) {
  const std::size_t per_epoch = (n + batch - 1) / batch;
  const std::size_t epoch = iteration / per_epoch, block = iteration % per_epoch;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + epoch);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  const auto first = perm.begin() + static_cast<std::ptrdiff_t>(block * batch);
  const auto last = perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, (block + 1) * batch));
  return {first, last};
}

std::uint64_t stage_seed(const TrainConfig& c, int stage) {
  return c.seed * 31 + static_cast<std::uint64_t>(stage);
}

/// Steps every reached parameter whose group is in `groups` (all when empty).
void apply_updates(Tape& tape, Model& model, Adam& adam, const std::set<std::string>& groups) {
  for (Parameter* p : model.parameters()) {
    if (!groups.empty() && !groups.count(p->group)) continue;
    if (!tape.reached(*p)) continue;
    adam.step(*p, tape.gradient(*p));
  }
}

Tensor stack(const std::vector<Tensor>& items, std::span<const std::size_t> rows) {
  const Shape& s = items[rows.front()].shape();
  Shape shape{rows.size()};
  shape.insert(shape.end(), s.begin(), s.end());
  Tensor out(shape);
  const std::size_t n = items[rows.front()].size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& t = items[rows[i]];
    if (t.shape() != s) throw ShapeError("cannot stack tensors of different shapes");
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return out;
}

template <class Step>
StageResult drive(int stage, std::size_t samples, const TrainConfig& config,
                  std::size_t start_iteration, const Hooks& hooks, Step&& step) {
  StageResult result;
  const std::size_t total = planned_iterations(config, samples);
  result.iterations = start_iteration;
  for (std::size_t it = start_iteration; it < total; ++it) {
    const auto rows = batch_indices(samples, config.batch_size, stage_seed(config, stage), it);
    LogEntry e = step(rows);
    e.iteration = it + 1;
    e.stage = stage;
    e.lr = config.learning_rate;
    result.final_loss = e.loss;
    result.iterations = it + 1;
    result.log.push_back(e);
    if (hooks.on_step) hooks.on_step(e);
    if (hooks.should_stop && hooks.should_stop(it + 1)) break;
  }
  return result;
}

}  // namespace

std::set<std::string> trainable_mask(int level) {
  if (level < 0 || level > 3) throw std::out_of_range("brightness level must lie in 0..3");
  std::set<std::string> groups;
  for (std::size_t k = 1; k <= exit_for_level(level); ++k) groups.insert(lcen::stage_group(k));
  return groups;
}

std::size_t exit_for_level(int level) {
  if (level < 0 || level > 3) throw std::out_of_range("brightness level must lie in 0..3");
  return static_cast<std::size_t>(4 - level);
}

void check_mask_nesting() {
  for (int level = 3; level > 0; --level) {
    const auto inner = trainable_mask(level), outer = trainable_mask(level - 1);
    if (inner.size() >= outer.size() || !std::includes(outer.begin(), outer.end(), inner.begin(), inner.end())) {
      throw std::logic_error("trainable masks are not strictly nested");
    }
  }
}

void adam_step(Tensor& value, const Tensor& grad, Moments& mo, const AdamOptions& o,
               const std::string& name) {
  if (grad.shape() != value.shape()) throw ShapeError("gradient shape mismatch for " + name);
  if (!grad.all_finite()) throw NumericError("non-finite gradient for " + name);
  if (mo.m.empty()) {
    mo.m = Tensor(value.shape());
    mo.v = Tensor(value.shape());
  }
  if (mo.m.shape() != value.shape() || mo.v.shape() != value.shape()) {
    throw ShapeError("moment shape mismatch for " + name);
  }
  ++mo.step;
  const double t = static_cast<double>(mo.step);
  const double c1 = 1.0 - std::pow(o.beta1, t), c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < value.size(); ++i) {
    mo.m[i] = o.beta1 * mo.m[i] + (1.0 - o.beta1) * grad[i];
    mo.v[i] = o.beta2 * mo.v[i] + (1.0 - o.beta2) * grad[i] * grad[i];
    value[i] -= o.lr * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + o.eps);
  }
}

void Adam::step(Parameter& p, const Tensor& grad) {
  adam_step(p.value, grad, state_[p.name], options_, p.name);
}

void TrainConfig::validate() const {
  if (stage < 1 || stage > 3) throw std::invalid_argument("stage must be 1, 2 or 3");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (iterations == 0 && epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (!(lambda_l1 >= 0.0 && lambda_ce >= 0.0 && lambda_ssim >= 0.0)) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (exit_min_level < 0 || exit_min_level > 4) throw std::invalid_argument("exit_min_level must lie in 0..4");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("val_fraction must lie in [0,1)");
  if (target_psnr < 0.0) throw std::invalid_argument("target_psnr must be non-negative");
}

std::string format_log(const LogEntry& e) {
  std::ostringstream s;
  s.precision(10);
  s << e.iteration << ',' << e.stage << ',' << e.loss << ',' << e.lr << ',' << e.metric;
  return s.str();
}

std::size_t planned_iterations(const TrainConfig& config, std::size_t samples) {
  if (config.iterations > 0) return config.iterations;
  return config.epochs * ((samples + config.batch_size - 1) / config.batch_size);
}

// --- Stage I -------------------------------------------------------------------

PatchDataset make_patch_dataset(const std::vector<ImagePair>& pairs, std::size_t patch_size,
                                const patching::Thresholds& thresholds) {
  thresholds.validate();
  PatchDataset d;
  d.patch_size = patch_size;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pr = pairs[i];
    if (pr.low.shape() != pr.high.shape()) {
      throw ShapeError(pr.name + ": low/high resolution mismatch " + shape_string(pr.low.shape()) +
                       " vs " + shape_string(pr.high.shape()));
    }
    d.low.push_back(patching::split_patches(pr.low, patch_size));
    d.high.push_back(patching::split_patches(pr.high, patch_size));
    d.low_padded.push_back(patching::pad_to_multiple(pr.low, patch_size));
    for (std::size_t k = 0; k < d.low.back().count(); ++k) {
      const int level =
          patching::classify_brightness_level(patching::mean_brightness(d.low.back().patch(k)), thresholds);
      d.samples.push_back({i, k, level});
    }
  }
  return d;
}

PatchDataset filter_levels(PatchDataset data, const std::function<bool(int)>& keep) {
  std::erase_if(data.samples, [&](const PatchSample& s) { return !keep(s.level); });
  return data;
}

StageResult run_stage1(Model& model, Adam& adam, const PatchDataset& data, const TrainConfig& config,
                       std::size_t start_iteration, const Hooks& hooks) {
  config.validate();
  check_mask_nesting();
  if (data.samples.empty()) throw std::invalid_argument("stage I dataset is empty");
  if (data.patch_size != model.config.patch_size) {
    throw std::invalid_argument("dataset patch size differs from the model patch size");
  }
  adam.options().lr = config.learning_rate;
  const std::size_t p = data.patch_size;

  return drive(1, data.samples.size(), config, start_iteration, hooks, [&](const std::vector<std::size_t>& rows) {
    Tape tape;
    const std::size_t b = rows.size();
    Tensor low({b, 3, p, p}), high({b, 3, p, p});
    std::vector<std::size_t> forced(b);
    std::set<std::string> groups{gign::kGroup};
    std::map<std::size_t, std::vector<std::size_t>> by_image;  // image -> batch positions
    for (std::size_t i = 0; i < b; ++i) {
      const auto& s = data.samples[rows[i]];
      const Tensor lp = data.low[s.image].patch(s.index), hp = data.high[s.image].patch(s.index);
      std::copy(lp.data().begin(), lp.data().end(), low.data().begin() + static_cast<std::ptrdiff_t>(i * lp.size()));
      std::copy(hp.data().begin(), hp.data().end(), high.data().begin() + static_cast<std::ptrdiff_t>(i * hp.size()));
      forced[i] = exit_for_level(s.level);
      for (const auto& g : trainable_mask(s.level)) groups.insert(g);
      by_image[s.image].push_back(i);
    }

    Var guidance;
    if (model.config.use_gign) {
      std::vector<std::pair<Var, std::vector<std::size_t>>> parts;
      for (const auto& [image, positions] : by_image) {
        const auto& grid = data.low[image];
        Var all = guidance_for(tape, data.low_padded[image], grid.rows, grid.cols, model);
        std::vector<std::size_t> tiles;
        for (auto pos : positions) tiles.push_back(data.samples[rows[pos]].index);
        parts.emplace_back(ag::gather_batch(all, tiles), positions);
      }
      guidance = ag::scatter_batch(parts, b);
    }

    lcen::ExitControl control;
    control.early_exit = false;
    control.forced_stage = forced;
    auto out = lcen::lcen_forward(tape, tape.constant(std::move(low)), guidance, model.lcen, control);
    Var loss = ag::scale(ag::l1_loss(out.estimate, high), config.lambda_l1);
    tape.backward(loss);
    apply_updates(tape, model, adam, groups);
    LogEntry e;
    e.loss = loss.value()[0];
    return e;
  });
}

// --- Stage II ------------------------------------------------------------------

ExitDataset make_exit_dataset(const PatchDataset& data, int exit_min_level) {
  ExitDataset d;
  for (const auto& s : data.samples) {
    d.patches.push_back(data.low[s.image].patch(s.index));
    d.labels.push_back(s.level >= exit_min_level ? kExit : kNotExit);
    d.patches.push_back(data.high[s.image].patch(s.index));
    d.labels.push_back(kExit);
  }
  return d;
}

std::pair<ExitDataset, ExitDataset> split_exit_dataset(const ExitDataset& data, double val_fraction,
                                                       std::uint64_t seed) {
  const std::size_t n = data.patches.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  std::pair<ExitDataset, ExitDataset> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_val ? out.second : out.first;
    dst.patches.push_back(data.patches[perm[i]]);
    dst.labels.push_back(data.labels[perm[i]]);
  }
  return out;
}

double exit_accuracy(const lcen::LdmParams& ldm, const ExitDataset& data, double tau) {
  if (data.patches.empty()) throw std::invalid_argument("accuracy of an empty dataset");
  std::vector<std::size_t> rows(data.patches.size());
  std::iota(rows.begin(), rows.end(), 0);
  const auto prob = lcen::ldm_probabilities(stack(data.patches, rows), ldm);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < prob.size(); ++i) correct += (prob[i] >= tau ? kExit : kNotExit) == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(prob.size());
}

StageResult run_stage2(Model& model, Adam& adam, const ExitDataset& train, const ExitDataset& val,
                       const TrainConfig& config, std::size_t start_iteration, const Hooks& hooks) {
  config.validate();
  if (train.patches.empty()) throw std::invalid_argument("stage II dataset is empty");
  if (train.patches.size() != train.labels.size()) throw std::invalid_argument("patch/label count mismatch");
  adam.options().lr = config.learning_rate;
  std::vector<std::string> warnings;
  const auto exits = std::count(train.labels.begin(), train.labels.end(), kExit);
  if (exits == 0 || static_cast<std::size_t>(exits) == train.labels.size()) {
    warnings.push_back("stage II training data holds a single class");
  }
  const std::set<std::string> groups{"ldm"};

  auto result = drive(2, train.patches.size(), config, start_iteration, hooks, [&](const std::vector<std::size_t>& rows) {
    Tape tape;
    std::vector<std::size_t> labels;
    for (auto r : rows) labels.push_back(train.labels[r]);
    Var z = lcen::ldm_logits(tape, tape.constant(stack(train.patches, rows)), model.ldm);
    Var loss = ag::scale(ag::cross_entropy(ag::binary_logits(z), labels), config.lambda_ce);
    tape.backward(loss);
    apply_updates(tape, model, adam, groups);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) correct += (z.value()[i] >= 0.0 ? kExit : kNotExit) == labels[i];
    LogEntry e;
    e.loss = loss.value()[0];
    e.metric = static_cast<double>(correct) / static_cast<double>(rows.size());
    return e;
  });
  result.warnings = std::move(warnings);
  result.accuracy = val.patches.empty() ? exit_accuracy(model.ldm, train) : exit_accuracy(model.ldm, val);
  return result;
}

// --- Stage III -----------------------------------------------------------------

Var stage3_loss(Var output, const Tensor& target, const TrainConfig& config) {
  Var l1 = ag::scale(ag::l1_loss(output, target), config.lambda_l1);
  if (config.lambda_ssim == 0.0) return l1;
  // lambda * (1 - SSIM)
  Var s = ag::scale(ag::ssim(output, target), -config.lambda_ssim);
  Var one = output.tape().constant(Tensor::scalar(config.lambda_ssim));
  return ag::add(l1, ag::add(one, s));
}

StageResult run_stage3(Model& model, Adam& adam, const std::vector<ImagePair>& pairs,
                       const TrainConfig& config, std::size_t start_iteration, const Hooks& hooks) {
  config.validate();
  if (pairs.empty()) throw std::invalid_argument("stage III needs at least one image pair");
  for (const auto& pr : pairs) {
    if (pr.low.shape() != pr.high.shape()) {
      throw ShapeError(pr.name + ": low/high resolution mismatch " + shape_string(pr.low.shape()) +
                       " vs " + shape_string(pr.high.shape()));
    }
  }
  adam.options().lr = config.learning_rate;
  double last_psnr = 0.0;
  Hooks inner = hooks;
  inner.should_stop = [&](std::size_t it) {
    if (config.target_psnr > 0.0 && last_psnr >= config.target_psnr) return true;
    return hooks.should_stop && hooks.should_stop(it);
  };

  auto result = drive(3, pairs.size(), config, start_iteration, inner, [&](const std::vector<std::size_t>& rows) {
    Tape tape;
    std::vector<Var> losses;
    double psnr_sum = 0.0;
    for (auto r : rows) {
      auto out = pipeline_forward(tape, pairs[r].low, model, {true, {}, true});
      losses.push_back(stage3_loss(out.image, pairs[r].high, config));
      psnr_sum += metrics::psnr(out.image.value(), pairs[r].high);
    }
    Var loss = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) loss = ag::add(loss, losses[i]);
    loss = ag::scale(loss, 1.0 / static_cast<double>(losses.size()));
    tape.backward(loss);
    apply_updates(tape, model, adam, {});
    LogEntry e;
    e.loss = loss.value()[0];
    e.metric = last_psnr = psnr_sum / static_cast<double>(rows.size());
    return e;
  });
  result.psnr = last_psnr;
  return result;
}

// --- checkpoints ---------------------------------------------------------------

std::string format_stages(const std::set<int>& stages) {
  std::string s;
  for (int k : stages) s += (s.empty() ? "" : ",") + std::to_string(k);
  return s;
}

std::set<int> parse_stages(const std::string& text) {
  std::set<int> out;
  std::istringstream in(text);
  for (std::string tok; std::getline(in, tok, ',');) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    const int k = std::stoi(tok, &used);
    if (used != tok.size() || k < 1 || k > 3) throw std::invalid_argument("bad stage list '" + text + "'");
    out.insert(k);
  }
  return out;
}

ckpt::Archive make_archive(const Model& model, const Adam* adam,
                           std::map<std::string, std::string> metadata) {
  ckpt::Archive a;
  a.metadata = std::move(metadata);
  for (const auto* p : model.parameters()) a.tensors.emplace_back(p->name, p->value);
  if (adam) {
    for (const auto& [name, mo] : adam->state()) {
      a.tensors.emplace_back(kMomentM + name, mo.m);
      a.tensors.emplace_back(kMomentV + name, mo.v);
      a.tensors.emplace_back(kMomentStep + name, Tensor::scalar(static_cast<double>(mo.step)));
    }
  }
  return a;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam* adam,
                     std::map<std::string, std::string> metadata) {
  ckpt::write_archive(path, make_archive(model, adam, std::move(metadata)));
}

CheckpointInfo restore_archive(const ckpt::Archive& archive, Model& model, Adam* adam) {
  using ckpt::CheckpointError;
  using ckpt::ErrorKind;
  std::set<std::string> known;
  for (Parameter* p : model.parameters()) {
    known.insert(p->name);
    const Tensor* t = archive.find(p->name);
    if (!t) throw CheckpointError(ErrorKind::kNameMismatch, "missing tensor '" + p->name + "'");
    if (t->shape() != p->value.shape()) {
      throw CheckpointError(ErrorKind::kShapeMismatch, "'" + p->name + "' is " + shape_string(t->shape()) +
                                                           ", model expects " + shape_string(p->value.shape()));
    }
  }
  for (const auto& [name, t] : archive.tensors) {
    std::string base = name;
    for (const char* prefix : {kMomentM, kMomentV, kMomentStep}) {
      if (starts_with(name, prefix)) base = name.substr(std::char_traits<char>::length(prefix));
    }
    if (!known.count(base)) throw CheckpointError(ErrorKind::kNameMismatch, "unexpected tensor '" + name + "'");
  }

  CheckpointInfo info;
  info.metadata = archive.metadata;
  if (auto it = archive.metadata.find("stages"); it != archive.metadata.end()) info.stages = parse_stages(it->second);
  if (auto it = archive.metadata.find("iteration"); it != archive.metadata.end()) {
    info.iteration = std::stoull(it->second);
  }
  for (Parameter* p : model.parameters()) p->value = *archive.find(p->name);
  if (adam) adam->state().clear();
  for (Parameter* p : model.parameters()) {
    const Tensor* m = archive.find(kMomentM + p->name);
    const Tensor* v = archive.find(kMomentV + p->name);
    const Tensor* s = archive.find(kMomentStep + p->name);
    if (!m || !v || !s) {
      info.fresh_moments.push_back(p->name);
      continue;
    }
    if (m->shape() != p->value.shape() || v->shape() != p->value.shape() || s->size() != 1) {
      throw CheckpointError(ErrorKind::kShapeMismatch, "moments of '" + p->name + "' do not match");
    }
    if (adam) adam->state()[p->name] = {*m, *v, static_cast<std::uint64_t>((*s)[0])};
  }
  return info;
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, Model& model, Adam* adam) {
  return restore_archive(ckpt::read_archive(path), model, adam);
}

}  // namespace glian::train
