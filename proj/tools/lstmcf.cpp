#include <CLI11.hpp>

#include <iostream>

#include "lstmcf/commands.hpp"

using namespace lstmcf;

int main(int argc, char** argv) {
  CLI::App app{"LSTM-CF RGB-D scene labeling"};
  app.require_subcommand(1);
  GlobalOptions g;
  std::string config, out, precision;
  std::uint64_t seed = 0;
  auto* config_opt = app.add_option("--config", config, "run config file (section.key = value lines)")
                         ->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "overrides run.seed");
  auto* prec_opt = app.add_option("--precision", precision, "overrides run.precision")->check(CLI::IsMember({"32", "64"}));
  auto* out_opt = app.add_option("--out", out, "output directory (overrides run.out)");
  for (auto* o : {config_opt, seed_opt, prec_opt, out_opt}) o->configurable(false);
  app.fallthrough();

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic RGB-D dataset and manifest");
  gen_cmd->add_option("--spec", gen.spec, "scene spec file (default: built-in furnished room)")->check(CLI::ExistingFile);
  gen_cmd->add_option("--count", gen.count, "number of samples")->required();
  gen_cmd->add_option("--split", gen.split, "train fraction; also writes train.txt and test.txt");

  auto* train_cmd = app.add_subcommand("train", "train a model; writes loss.tsv and checkpoints");

  EvalArgs eval;
  std::string eval_ckpt, eval_manifest;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint and write metric reports");
  auto* eval_ckpt_opt = eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint (default: freshly initialized model)");
  auto* eval_man_opt = eval_cmd->add_option("--manifest", eval_manifest, "manifest (default: data.test_manifest)");
  eval_cmd->add_flag("--oracle", eval.oracle, "score ground truth against itself");

  LabelArgs label;
  std::string label_ckpt;
  auto* label_cmd = app.add_subcommand("label", "label one RGB-D image and write a colorized map");
  auto* label_ckpt_opt = label_cmd->add_option("--checkpoint", label_ckpt, "checkpoint (default: freshly initialized model)");
  label_cmd->add_option("--rgb", label.rgb, "RGB image (P6)")->required();
  label_cmd->add_option("--depth", label.depth, "depth image (16-bit P5, millimeters)")->required();

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every op family and the model");
  grad_cmd->add_flag("--inject-fault", grad.inject_fault, "add a component with a wrong derivative");

  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate the full model and the seven ablations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (*config_opt) g.config = config;
  if (*seed_opt) g.seed = seed;
  if (*prec_opt) g.precision = precision == "32" ? Precision::f32 : Precision::f64;
  if (*out_opt) g.out = out;
  if (*eval_ckpt_opt) eval.checkpoint = eval_ckpt;
  if (*eval_man_opt) eval.manifest = eval_manifest;
  if (*label_ckpt_opt) label.checkpoint = label_ckpt;

  return run_command(
      [&] {
        if (*gen_cmd) return cmd_gen_data(g, gen, std::cout);
        if (*train_cmd) return cmd_train(g, std::cout);
        if (*eval_cmd) return cmd_eval(g, eval, std::cout);
        if (*label_cmd) return cmd_label(g, label, std::cout);
        if (*grad_cmd) return cmd_gradcheck(g, grad, std::cout);
        if (*ablate_cmd) return cmd_ablate(g, std::cout);
        return static_cast<int>(kExitUsage);
      },
      std::cerr);
}
