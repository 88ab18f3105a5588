#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lstmcf/dataset.hpp"
#include "lstmcf/error.hpp"
#include "lstmcf/metrics.hpp"
#include "lstmcf/network.hpp"

namespace lstmcf {

struct SgdConfig {
  double lr_new = 1e-2;
  double lr_pretrained_analog = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 1;
  std::size_t epochs = 10;
  enum class Schedule { constant, step } schedule = Schedule::constant;
  double step_gamma = 0.1;
  std::size_t step_every = 0;  // epochs between decays
  double clip_norm = 0.0;      // 0 disables global-norm clipping

  bool operator==(const SgdConfig&) const = default;
  void validate() const;
  // Rate for a group during the given 0-based epoch.
  double learning_rate(ParamGroup g, std::size_t epoch) const;
};

struct TrainState {
  std::map<std::string, Tensor> velocity;
  std::size_t epoch = 0;  // completed epochs
  double running_loss = 0.0;
};

// For every parameter with rate lr:
//   g' = g + weight_decay * w
//   v  = momentum * v - lr * g'
//   w  = w + v
// A missing gradient buffer counts as zero. Non-finite gradients abort the
// step before any parameter changes and name the offending tensor.
void sgd_step(TrainState& state, const std::vector<Param>& params, const SgdConfig& cfg, std::size_t epoch);

// One network input, cropped and encoded.
struct Example {
  std::string id;
  Tensor rgb, hha;       // 3 x n x n
  LabelMap grid_labels;  // G x G training targets
  LabelMap labels;       // n x n
};

Example prepare_example(const RgbdSample& s, const ModelConfig& cfg, CropPolicy policy, std::uint64_t crop_seed);
std::vector<Example> load_examples(const Manifest& m, const ModelConfig& cfg, CropPolicy policy, std::uint64_t seed);

double example_loss(const LstmCfModel& model, const Example& ex);

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainHooks {
  std::function<void(const EpochReport&)> on_epoch;
};

// Runs epochs state.epoch + 1 .. cfg.epochs. The visiting order of epoch e
// is a shuffle drawn from Rng(seed, e). Throws NumericError on a
// non-finite loss or gradient, leaving parameters at their last good step.
std::vector<EpochReport> train(const LstmCfModel& model, TrainState& state, const std::vector<Example>& data,
                               const SgdConfig& cfg, std::uint64_t seed, const TrainHooks& hooks = {});

enum class EvalResolution { grid, input };
ConfusionMatrix evaluate(const LstmCfModel& model, const std::vector<Example>& data,
                         EvalResolution res = EvalResolution::input);

// ---- checkpoints -------------------------------------------------------------

class CheckpointMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::uint32_t version = kVersion;
  std::string config_text;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> optimizer;  // "v/<param>", "state.epoch", "state.running_loss"
};

Checkpoint make_checkpoint(const LstmCfModel& model, const TrainState& state, const std::string& config_text);
// Copies values into the model and state. Any name or shape difference
// throws CheckpointMismatch listing every difference.
void restore_checkpoint(const Checkpoint& ckpt, const LstmCfModel& model, TrainState* state = nullptr);

// Layout: "LSCF", u32 version, u32 length + config text, u32 count + records,
// u32 count + optimizer records. Record: u32 length + name, u32 rank,
// u32 dims, f64 values. All integers and values little-endian.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lstmcf
