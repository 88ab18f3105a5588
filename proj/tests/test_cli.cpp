#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "lstmcf/commands.hpp"
#include "lstmcf/pnm.hpp"

using namespace lstmcf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("lstmcf_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// Runs the built binary; returns its exit code and leaves stdout+stderr in `output`.
int run_cli(const std::string& args, std::string* output = nullptr) {
  const auto log = fs::temp_directory_path() / ("lstmcf_cli_" + std::to_string(::getpid())) / "last.log";
  const std::string cmd = std::string(LSTMCF_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small dataset shared by the command tests.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const auto d = fresh_dir("data");
    GlobalOptions g;
    g.out = d;
    g.seed = 5;
    std::ostringstream out;
    EXPECT_EQ(cmd_gen_data(g, {{}, 6, 0.5}, out), kExitOk);
    return d;
  }();
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& extra) {
  const auto p = dir / "run.cfg";
  std::ofstream(p) << "model.hidden = 2\n"
                   << (extra.find("optim.epochs") == std::string::npos ? "optim.epochs = 2\n" : "")
                   << "data.train_manifest = " << (dataset() / "train.txt").string() << '\n'
                   << "data.test_manifest = " << (dataset() / "test.txt").string() << '\n'
                   << extra;
  return p;
}

GlobalOptions opts(const fs::path& config, const fs::path& out) {
  GlobalOptions g;
  g.config = config;
  g.out = out;
  return g;
}

}  // namespace

TEST(GenData, ManifestFilesAndFrequencies) {
  const auto m = read_manifest(dataset() / "manifest.txt");
  ASSERT_EQ(m.entries.size(), 6u);
  std::vector<LabelMap> maps;
  for (std::size_t i = 0; i < m.entries.size(); ++i) maps.push_back(m.load(i).labels);
  double total = 0.0;
  for (double f : class_frequencies(maps, m.classes.size())) total += f;
  EXPECT_NEAR(total, 1.0, 1e-9);
  const auto tr = read_manifest(dataset() / "train.txt"), te = read_manifest(dataset() / "test.txt");
  EXPECT_EQ(tr.entries.size() + te.entries.size(), 6u);
  const std::string freq = slurp(dataset() / "class_freq.tsv");
  EXPECT_NE(freq.find("total\t1.000000"), std::string::npos) << freq;
}

TEST(GenData, SameSeedSameBytes) {
  const auto a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  std::ostringstream out;
  for (const auto& d : {a, b}) {
    GlobalOptions g;
    g.out = d;
    g.seed = 77;
    ASSERT_EQ(cmd_gen_data(g, {{}, 3, 0.0}, out), kExitOk);
  }
  for (const char* f : {"manifest.txt", "rgb/s00002.ppm", "depth/s00002.pgm", "labels/s00002.pgm"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(GenData, BadSpecIsUsageError) {
  const auto d = fresh_dir("badspec");
  std::ofstream(d / "bad.spec") << "room.width = wide\n";
  EXPECT_EQ(run_cli("--out " + (d / "o").string() + " gen-data --count 2 --spec " + (d / "bad.spec").string()), 2);
}

TEST(Train, ZeroEpochsWritesInitialCheckpointOnly) {
  const auto d = fresh_dir("zero");
  std::ostringstream out;
  ASSERT_EQ(cmd_train(opts(write_config(d, "optim.epochs = 0\n"), d / "o"), out), kExitOk);
  EXPECT_TRUE(fs::exists(d / "o/checkpoints/epoch_0000.ckpt"));
  EXPECT_FALSE(fs::exists(d / "o/final.ckpt"));
  EXPECT_EQ(slurp(d / "o/loss.tsv"), "epoch\tmean_loss\n");
}

TEST(Train, SameSeedSameLogsAndCheckpoints) {
  const auto d = fresh_dir("repro");
  const auto cfg = write_config(d, "run.checkpoint_every = 1\n");
  std::ostringstream out;
  ASSERT_EQ(cmd_train(opts(cfg, d / "a"), out), kExitOk);
  ASSERT_EQ(cmd_train(opts(cfg, d / "b"), out), kExitOk);
  EXPECT_EQ(slurp(d / "a/loss.tsv"), slurp(d / "b/loss.tsv"));
  for (const char* f : {"final.ckpt", "checkpoints/epoch_0001.ckpt", "config.txt"})
    EXPECT_EQ(slurp(d / "a" / f), slurp(d / "b" / f)) << f;
  const auto ck = load_checkpoint(d / "a/final.ckpt");
  EXPECT_EQ(parse_run_config(ck.config_text).model, load_run_config(cfg).model);
}

TEST(Train, DivergenceExitsThreeAndKeepsCheckpoint) {
  const auto d = fresh_dir("diverge");
  const auto cfg = write_config(d, "optim.lr_new = 1e200\noptim.lr_pretrained_analog = 1e200\n");
  std::string log;
  EXPECT_EQ(run_cli("--config " + cfg.string() + " --out " + (d / "o").string() + " train", &log), 3) << log;
  EXPECT_NE(log.find("last good checkpoint"), std::string::npos) << log;
  EXPECT_TRUE(fs::exists(d / "o/checkpoints/epoch_0000.ckpt"));
}

TEST(Train, ConfigErrorsExitTwo) {
  const auto d = fresh_dir("cfgerr");
  std::ofstream(d / "typo.cfg") << "model.hiden = 2\n";
  std::string log;
  EXPECT_EQ(run_cli("--config " + (d / "typo.cfg").string() + " --out " + (d / "o").string() + " train", &log), 2);
  EXPECT_NE(log.find("model.hiden"), std::string::npos) << log;
  EXPECT_EQ(run_cli("train --no-such-flag"), 2);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("--help"), 0);
}

TEST(Eval, OracleScoresOne) {
  const auto d = fresh_dir("oracle");
  std::ostringstream out;
  EvalArgs a;
  a.oracle = true;
  ASSERT_EQ(cmd_eval(opts(write_config(d, ""), d / "o"), a, out), kExitOk);
  EXPECT_NE(out.str().find("mean paper-Jaccard: 1.000000"), std::string::npos) << out.str();
  EXPECT_TRUE(fs::exists(d / "o/report.txt"));
  EXPECT_TRUE(fs::exists(d / "o/report.tsv"));
}

TEST(Eval, ZeroModelPredictsClassZero) {
  const auto d = fresh_dir("zeromodel");
  const auto cfg = write_config(d, "model.rgb.init = zeros\nmodel.depth.init = zeros\nmodel.new_conv_init = zeros\n"
                                   "model.lstm_init = zeros\n");
  std::ostringstream out;
  ASSERT_EQ(cmd_eval(opts(cfg, d / "o"), {}, out), kExitOk);
  std::ifstream tsv(d / "o/report.tsv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(tsv, line)) {
    std::istringstream in(line);
    std::string idx, name, paper;
    std::getline(in, idx, '\t');
    std::getline(in, name, '\t');
    std::getline(in, paper, '\t');
    if (paper == "undefined") continue;
    EXPECT_EQ(std::stod(paper), idx == "0" ? 1.0 : 0.0) << line;
    ++rows;
  }
  EXPECT_GT(rows, 1u);
}

TEST(Eval, DeterministicAndArchitectureChecked) {
  const auto d = fresh_dir("evalck");
  const auto cfg = write_config(d, "");
  std::ostringstream out;
  ASSERT_EQ(cmd_train(opts(cfg, d / "t"), out), kExitOk);
  EvalArgs a;
  a.checkpoint = d / "t/final.ckpt";
  ASSERT_EQ(cmd_eval(opts(cfg, d / "e1"), a, out), kExitOk);
  ASSERT_EQ(cmd_eval(opts(cfg, d / "e2"), a, out), kExitOk);
  EXPECT_EQ(slurp(d / "e1/report.tsv"), slurp(d / "e2/report.tsv"));

  std::ofstream(d / "wide.cfg") << "model.hidden = 3\n";
  std::string log;
  EXPECT_EQ(run_cli("--config " + (d / "wide.cfg").string() + " --out " + (d / "e3").string() + " eval --manifest " +
                        (dataset() / "test.txt").string() + " --checkpoint " + (d / "t/final.ckpt").string(),
                    &log),
            2);
  EXPECT_NE(log.find("shape differs"), std::string::npos) << log;
}

TEST(Label, PaletteIsFixed) {
  EXPECT_EQ(palette_color(0), (std::array<std::uint8_t, 3>{0, 0, 0}));
  EXPECT_EQ(palette_color(1), (std::array<std::uint8_t, 3>{128, 0, 0}));
  EXPECT_EQ(palette_color(2), (std::array<std::uint8_t, 3>{0, 128, 0}));
  EXPECT_EQ(palette_color(5), (std::array<std::uint8_t, 3>{128, 0, 128}));
  EXPECT_EQ(palette_color(8), (std::array<std::uint8_t, 3>{64, 0, 0}));
  LabelMap all(16, 16);
  for (std::size_t i = 0; i < 256; ++i) all.labels[i] = static_cast<std::uint8_t>(i);
  EXPECT_EQ(decode_colorized(colorize(all)).labels, all.labels);
}

TEST(Label, WritesMapAndColorizedImage) {
  const auto d = fresh_dir("label");
  const auto cfg = write_config(d, "");
  const auto m = read_manifest(dataset() / "manifest.txt");
  const auto paths = m.resolve(m.entries[0]);
  std::ostringstream out;
  LabelArgs a;
  a.rgb = paths.rgb;
  a.depth = paths.depth;
  ASSERT_EQ(cmd_label(opts(cfg, d / "o"), a, out), kExitOk);
  const auto stem = paths.rgb.stem().string();
  const PnmImage pgm = read_pnm(d / "o" / (stem + "_labels.pgm"));
  const PnmImage ppm = read_pnm(d / "o" / (stem + "_color.ppm"));
  EXPECT_EQ(pgm.width, 64u);
  for (auto v : pgm.samples) EXPECT_LT(v, 6);
  const LabelMap back = decode_colorized(ppm);
  EXPECT_TRUE(std::equal(back.labels.begin(), back.labels.end(), pgm.samples.begin()));

  EXPECT_EQ(run_cli("--config " + cfg.string() + " --out " + (d / "x").string() + " label --rgb " +
                    (d / "missing.ppm").string() + " --depth " + paths.depth.string()),
            2);
}

TEST(Gradcheck, PassesAndNegativeControlFails) {
  const auto d = fresh_dir("gradcheck");
  std::ofstream(d / "g.cfg") << "model.hidden = 2\nmodel.classes = 3\n";
  const auto start = std::chrono::steady_clock::now();
  std::string log;
  EXPECT_EQ(run_cli("--config " + (d / "g.cfg").string() + " --out " + (d / "o").string() + " gradcheck", &log), 0)
      << log;
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);
  EXPECT_NE(slurp(d / "o/gradcheck.tsv").find("end_to_end"), std::string::npos);
  EXPECT_EQ(run_cli("--config " + (d / "g.cfg").string() + " --out " + (d / "o").string() + " gradcheck --inject-fault",
                    &log),
            1);
  EXPECT_NE(log.find("fault_injection"), std::string::npos);
}

TEST(Ablate, EightRowsInTableOrder) {
  const auto d = fresh_dir("ablate");
  const auto cfg = write_config(d, "optim.epochs = 1\n");
  std::ostringstream out;
  ASSERT_EQ(cmd_ablate(opts(cfg, d / "o"), out), kExitOk) << out.str();
  std::ifstream tsv(d / "o/ablation.tsv");
  std::string line;
  std::getline(tsv, line);
  std::size_t row = 0;
  while (std::getline(tsv, line)) {
    std::istringstream in(line);
    std::string idx, name, score, acc, status;
    std::getline(in, idx, '\t');
    std::getline(in, name, '\t');
    std::getline(in, score, '\t');
    std::getline(in, acc, '\t');
    std::getline(in, status, '\t');
    ASSERT_LT(row, 8u);
    EXPECT_EQ(name, variant_name(kAblationVariants[row]));
    EXPECT_EQ(status, "ok");
    const double s = std::stod(score);
    EXPECT_TRUE(s >= 0.0 && s <= 1.0);
    ++row;
  }
  EXPECT_EQ(row, 8u);
}

TEST(Ablate, FailedRowsAreRecorded) {
  RunConfig cfg;
  cfg.model.hidden = 2;
  const auto rows = run_ablation(cfg, {}, {});
  ASSERT_EQ(rows.size(), 8u);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.scores.has_value());
    EXPECT_NE(r.status.find("failed"), std::string::npos);
  }
  const std::string table = format_ablation_table(rows);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 9);
}
