#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lstmcf/config.hpp"
#include "lstmcf/pnm.hpp"

namespace lstmcf {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitNumeric = 3 };

struct GlobalOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<Precision> precision;
  std::optional<std::filesystem::path> out;
};

// The config file (or defaults) with the command-line overrides applied.
RunConfig resolve_config(const GlobalOptions& g);

// Class i is always drawn in palette_color(i): the PASCAL VOC colormap
// (bits of i spread over the high bits of r, g, b), so all 256 values get
// distinct colors.
std::array<std::uint8_t, 3> palette_color(std::uint8_t cls);
PnmImage colorize(const LabelMap& labels);
// Inverse of colorize; throws FormatError on a color outside the palette.
LabelMap decode_colorized(const PnmImage& img);

struct ExperimentResult {
  JaccardScores scores;
  std::vector<EpochReport> epochs;
};

// Trains a fresh model (seeded with cfg.run.seed) and evaluates it on test.
ExperimentResult train_and_evaluate(const RunConfig& cfg, const std::vector<Example>& train_set,
                                    const std::vector<Example>& test_set);

struct AblationRow {
  Variant variant;
  std::optional<JaccardScores> scores;  // empty when the run failed
  std::string status;                   // "ok" or the failure message
};

// The full model and the seven ablation variants, same seed and budget.
// A failing variant is recorded and the rest still run.
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::vector<Example>& train_set,
                                      const std::vector<Example>& test_set, std::ostream* progress = nullptr);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

// Commands. Each writes its outputs under the resolved run.out directory,
// prints a summary to `out` and returns an ExitCode. Errors are reported
// on `err` and mapped to exit codes by run_command.
struct GenDataArgs {
  std::filesystem::path spec;  // empty: built-in default scene
  std::size_t count = 10;
  double split = 0.0;  // > 0 also writes train.txt / test.txt
};
struct EvalArgs {
  std::optional<std::filesystem::path> checkpoint;  // empty: freshly initialized model
  std::optional<std::filesystem::path> manifest;    // default data.test_manifest
  bool oracle = false;                              // ground truth scored against itself
};
struct LabelArgs {
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path rgb, depth;
};
struct GradcheckArgs {
  bool inject_fault = false;
};

int cmd_gen_data(const GlobalOptions& g, const GenDataArgs& a, std::ostream& out);
int cmd_train(const GlobalOptions& g, std::ostream& out);
int cmd_eval(const GlobalOptions& g, const EvalArgs& a, std::ostream& out);
int cmd_label(const GlobalOptions& g, const LabelArgs& a, std::ostream& out);
int cmd_gradcheck(const GlobalOptions& g, const GradcheckArgs& a, std::ostream& out);
int cmd_ablate(const GlobalOptions& g, std::ostream& out);

// Runs fn and maps exceptions to exit codes: ConfigError, FormatError,
// ShapeError and filesystem errors give 2, NumericError gives 3.
int run_command(const std::function<int()>& fn, std::ostream& err);

}  // namespace lstmcf
