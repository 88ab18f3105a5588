#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lstmcf/dataset.hpp"
#include "lstmcf/network.hpp"
#include "lstmcf/tensor.hpp"
#include "lstmcf/trainer.hpp"

namespace lstmcf {

struct DataConfig {
  std::filesystem::path train_manifest, test_manifest;
  CropPolicy crop_policy = CropPolicy::center;  // crop size is model.input_size
  bool operator==(const DataConfig&) const = default;
};

struct RunSettings {
  std::uint64_t seed = 0;
  Precision precision = Precision::f64;
  std::filesystem::path out = "out";
  std::size_t checkpoint_every = 0;  // epochs; 0 writes only the initial and final checkpoints
  EvalResolution eval_resolution = EvalResolution::input;
  bool operator==(const RunSettings&) const = default;
};

struct RunConfig {
  ModelConfig model = default_model_config();
  SgdConfig optim;
  DataConfig data;
  RunSettings run;
  bool operator==(const RunConfig&) const = default;
};

// Flat `section.key = value` lines; `#` starts a comment. Unknown or
// repeated keys raise ConfigError naming the line. Relative paths are
// resolved against base_dir. Blocks are written out:kernel:stride:padding:dilation:pool
// and separated by commas. model.variant sets all ablation flags at once;
// later model.ablation.* lines adjust them.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
// Every key, one per line, in a fixed order. parse_run_config(to_text(c)) == c.
std::string to_text(const RunConfig& c);
std::vector<std::string> run_config_keys();

}  // namespace lstmcf
