#pragma once

// Three-stage optimisation.
//
//   Stage I   LCEN (+ GIGN) per patch, each patch's L1 loss taken at the
//             exit paired with its brightness level; only the stages that
//             level may touch are updated.
//   Stage II  LDM as a binary exit classifier (cross-entropy).
//   Stage III whole pipeline with early exit, L1 + (1 - SSIM).
//
// Batches are drawn from a permutation derived from (seed, epoch), so the
// trajectory depends only on the seed and the iteration index and a
// resumed run replays an uninterrupted one exactly.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "glian/checkpoint.hpp"
#include "glian/model.hpp"
#include "glian/patching.hpp"

namespace glian::train {

/// Stage groups updated for a patch of brightness level 0 (darkest) .. 3.
std::set<std::string> trainable_mask(int level);
/// Exit stage (1-based) a level-`level` patch is trained through.
std::size_t exit_for_level(int level);
/// Throws std::logic_error unless mask(3) < mask(2) < mask(1) < mask(0).
void check_mask_nesting();

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct Moments {
  Tensor m, v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of `value` in place. Throws NumericError
/// on a non-finite gradient or a shape mismatch with the moments.
void adam_step(Tensor& value, const Tensor& grad, Moments& moments, const AdamOptions& options,
               const std::string& name = "parameter");

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// Creates zero moments on first use of `p`.
  void step(Parameter& p, const Tensor& grad);

  AdamOptions& options() { return options_; }
  std::map<std::string, Moments>& state() { return state_; }
  const std::map<std::string, Moments>& state() const { return state_; }

 private:
  AdamOptions options_;
  std::map<std::string, Moments> state_;
};

struct TrainConfig {
  int stage = 1;
  double learning_rate = 1e-4;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  /// Total optimizer steps; 0 derives it from epochs.
  std::size_t iterations = 0;
  double lambda_l1 = 1.0;
  double lambda_ce = 1.0;
  double lambda_ssim = 0.5;
  std::uint64_t seed = 0;
  /// Stage II: low-light patches at this level or brighter count as "exit".
  int exit_min_level = 3;
  double val_fraction = 0.2;
  /// Stage III stops once the mean training PSNR reaches this (0 = never).
  double target_psnr = 0.0;
  std::size_t checkpoint_every = 0;

  /// Throws std::invalid_argument on negative weights, a zero batch and so on.
  void validate() const;
};

struct LogEntry {
  std::size_t iteration = 0;  // 1-based optimizer step
  int stage = 0;
  double loss = 0.0;
  double lr = 0.0;
  double metric = 0.0;  // stage II: batch accuracy, stage III: batch PSNR
};

/// "iteration,stage,loss,lr,metric"
std::string format_log(const LogEntry& e);
inline constexpr const char* kLogHeader = "iteration,stage,loss,lr,metric";

struct Hooks {
  std::function<void(const LogEntry&)> on_step;
  /// Called after step `iteration`; returning true stops training there.
  std::function<bool(std::size_t iteration)> should_stop;
};

struct StageResult {
  std::size_t iterations = 0;  // optimizer steps completed, including resumed ones
  double final_loss = 0.0;
  double accuracy = 0.0;  // stage II held-out accuracy
  double psnr = 0.0;      // stage III training PSNR at the last step
  std::vector<LogEntry> log;
  std::vector<std::string> warnings;
};

struct ImagePair {
  std::string name;
  Tensor low, high;
};

// --- Stage I -------------------------------------------------------------------

struct PatchSample {
  std::size_t image = 0;
  std::size_t index = 0;  // tile index inside the image grid
  int level = 0;
};

struct PatchDataset {
  std::size_t patch_size = 0;
  std::vector<Tensor> low_padded;  // per image, for GIGN
  std::vector<patching::PatchGrid> low, high;
  std::vector<PatchSample> samples;
};

/// Splits every pair into patches and labels each low patch by its mean
/// brightness.
PatchDataset make_patch_dataset(const std::vector<ImagePair>& pairs, std::size_t patch_size,
                                const patching::Thresholds& thresholds);

/// Keeps only samples whose level passes `keep`.
PatchDataset filter_levels(PatchDataset data, const std::function<bool(int)>& keep);

StageResult run_stage1(Model& model, Adam& adam, const PatchDataset& data, const TrainConfig& config,
                       std::size_t start_iteration = 0, const Hooks& hooks = {});

// --- Stage II ------------------------------------------------------------------

inline constexpr std::size_t kNotExit = 0;
inline constexpr std::size_t kExit = 1;

struct ExitDataset {
  std::vector<Tensor> patches;  // [3,P,P]
  std::vector<std::size_t> labels;
};

/// Ground-truth patches are "exit"; low-light patches are "exit" when their
/// level is at least `exit_min_level`, "not exit" otherwise.
ExitDataset make_exit_dataset(const PatchDataset& data, int exit_min_level);

/// Seeded split into (train, held-out).
std::pair<ExitDataset, ExitDataset> split_exit_dataset(const ExitDataset& data, double val_fraction,
                                                       std::uint64_t seed);

/// Fraction of patches whose exit decision (p >= tau) matches the label.
double exit_accuracy(const lcen::LdmParams& ldm, const ExitDataset& data, double tau = 0.5);

StageResult run_stage2(Model& model, Adam& adam, const ExitDataset& train, const ExitDataset& val,
                       const TrainConfig& config, std::size_t start_iteration = 0,
                       const Hooks& hooks = {});

// --- Stage III -----------------------------------------------------------------

/// L = l1 * L1(out, gt) + ls * (1 - SSIM(out, gt)) on a recorded pipeline output.
Var stage3_loss(Var output, const Tensor& target, const TrainConfig& config);

StageResult run_stage3(Model& model, Adam& adam, const std::vector<ImagePair>& pairs,
                       const TrainConfig& config, std::size_t start_iteration = 0,
                       const Hooks& hooks = {});

/// Total optimizer steps for a dataset of `samples` items.
std::size_t planned_iterations(const TrainConfig& config, std::size_t samples);

// --- checkpoints ---------------------------------------------------------------

struct CheckpointInfo {
  std::map<std::string, std::string> metadata;
  std::vector<std::string> fresh_moments;  // parameters without stored moments
  std::set<int> stages;                    // provenance
  std::size_t iteration = 0;
};

/// Parameters, Adam moments (adam.m/, adam.v/, adam.step/ prefixes) and
/// metadata (including "stages" and "iteration").
ckpt::Archive make_archive(const Model& model, const Adam* adam,
                           std::map<std::string, std::string> metadata);
void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam* adam,
                     std::map<std::string, std::string> metadata);

/// Restores every model parameter (all must be present with matching
/// shapes) and whatever moments the file holds.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, Model& model, Adam* adam);
CheckpointInfo restore_archive(const ckpt::Archive& archive, Model& model, Adam* adam);

std::string format_stages(const std::set<int>& stages);
std::set<int> parse_stages(const std::string& text);

}  // namespace glian::train
