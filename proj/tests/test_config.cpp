#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "lstmcf/config.hpp"

using namespace lstmcf;

TEST(RunConfig, DefaultsRoundTrip) {
  const RunConfig c;
  const RunConfig back = parse_run_config(to_text(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(to_text(back), to_text(c));
}

TEST(RunConfig, EveryKeyIsWritten) {
  const std::string text = to_text(RunConfig{});
  for (const auto& k : run_config_keys()) EXPECT_NE(text.find(k + " = "), std::string::npos) << k;
}

TEST(RunConfig, ParsesValuesAndComments) {
  const auto c = parse_run_config(R"(
# toy
model.hidden = 8   # d
model.classes = 5
model.variant = no_depth
model.lstm_init = uniform:0.2
optim.lr_new = 0.05
optim.schedule = step
optim.step_every = 4
data.crop_policy = random
data.train_manifest = data/train.txt
run.seed = 12345678901234
run.precision = 32
run.eval_resolution = grid
)",
                                  "/base");
  EXPECT_EQ(c.model.hidden, 8u);
  EXPECT_EQ(c.model.classes, 5u);
  EXPECT_EQ(c.model.ablation, flags_for(Variant::no_depth));
  EXPECT_EQ(c.model.lstm_init, InitSpec::uniform(-0.2, 0.2));
  EXPECT_EQ(c.optim.lr_new, 0.05);
  EXPECT_EQ(c.optim.schedule, SgdConfig::Schedule::step);
  EXPECT_EQ(c.data.crop_policy, CropPolicy::random);
  EXPECT_EQ(c.data.train_manifest, std::filesystem::path("/base/data/train.txt"));
  EXPECT_EQ(c.run.seed, 12345678901234u);
  EXPECT_EQ(c.run.precision, Precision::f32);
  EXPECT_EQ(c.run.eval_resolution, EvalResolution::grid);
  EXPECT_EQ(parse_run_config(to_text(c)), c);
}

TEST(RunConfig, FlagsAfterVariantAdjustIt) {
  const auto c = parse_run_config("model.variant = no_fusion\nmodel.ablation.disable_fusion_layer = false\n");
  EXPECT_EQ(c.model.ablation, AblationFlags{});
  EXPECT_NE(to_text(c).find("model.variant = full"), std::string::npos);
}

TEST(RunConfig, RejectsTyposAndBadValues) {
  for (const char* bad : {"model.hiden = 8", "model.hidden = 8\nmodel.hidden = 9", "model.hidden = eight",
                          "model.hidden", "optim.momentum = 1.5", "run.precision = 16", "model.variant = nothing",
                          "model.rgb.blocks = 8:3:1", "model.lstm_init = gaussian", "data.crop_policy = corner",
                          "model.rgb.taps = 2,3", "model.hidden = -1"})
    EXPECT_THROW(parse_run_config(bad), ConfigError) << bad;
  try {
    parse_run_config("# first\n\nmodel.hidden = 2\nmodel.hiden = 8\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("model.hiden"), std::string::npos) << e.what();
  }
}

TEST(RunConfig, FullScaleThroughText) {
  const auto c = parse_run_config("data.crop_size = 426\nmodel.grid = 54\nmodel.hidden = 100\nmodel.classes = 37\n"
                                  "model.head_channels = 64\n"
                                  "model.rgb.blocks = 64:3:1:1:1:2, 128:3:1:1:1:2, 256:3:1:1:1:2, 512:3:1:2:2:0, "
                                  "512:3:1:2:2:0, 512:3:1:2:2:0, 64:3:1:2:2:0\n"
                                  "model.depth.blocks = 64:3:1:1:1:2, 64:3:1:1:1:2, 64:3:1:1:1:2\n");
  const auto census = shape_census(c.model);
  EXPECT_EQ(census.ctx_rgb, (Shape{200, 54, 54}));
  EXPECT_EQ(census.fusion_input, (Shape{400, 54, 54}));
  EXPECT_EQ(census.fusion_output, (Shape{200, 54, 54}));
}

TEST(RunConfig, SnapshotReproducesArchitecture) {
  for (Variant v : kAblationVariants) {
    RunConfig c;
    c.model.hidden = 3;
    c.model.ablation = flags_for(v);
    const auto back = parse_run_config(to_text(c));
    const auto a = shape_census(c.model), b = shape_census(back.model);
    EXPECT_EQ(a.parameters, b.parameters) << variant_name(v);
    EXPECT_EQ(a.head_input, b.head_input) << variant_name(v);
    EXPECT_EQ(a.fusion_input, b.fusion_input) << variant_name(v);
  }
}

TEST(RunConfig, LoadResolvesRelativeToFile) {
  const auto dir = std::filesystem::temp_directory_path() / "lstmcf_config_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "a.cfg") << "data.test_manifest = sets/test.txt\n";
  EXPECT_EQ(load_run_config(dir / "a.cfg").data.test_manifest, dir / "sets/test.txt");
  EXPECT_THROW(load_run_config(dir / "missing.cfg"), ConfigError);
}
