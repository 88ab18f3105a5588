#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lstmcf/random.hpp"
#include "lstmcf/trainer.hpp"

using namespace lstmcf;

namespace {

std::vector<Example> toy_examples(const ModelConfig& cfg, std::size_t n, std::uint64_t seed) {
  std::vector<Example> out;
  const SceneSpec spec = default_scene_spec();
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(prepare_example(generate_scene(spec, seed + i, "s" + std::to_string(i)), cfg, CropPolicy::center, 0));
  return out;
}

ModelConfig small_config() {
  ModelConfig c = default_model_config();
  c.hidden = 2;
  return c;
}

std::vector<double> flat_params(const LstmCfModel& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

Param scalar_param(const std::string& name, double w, double g, ParamGroup group = ParamGroup::new_layers) {
  Tensor t = Tensor::scalar(w);
  t.grad_mut()[0] = g;
  return {name, t, group};
}

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("lstmcf_trainer_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST(Sgd, HandExample) {
  SgdConfig cfg;
  cfg.lr_new = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.0;
  TrainState st;
  auto p = scalar_param("w", 1.0, 0.5);
  sgd_step(st, {p}, cfg, 0);
  EXPECT_DOUBLE_EQ(st.velocity.at("w").item(), -0.05);
  EXPECT_DOUBLE_EQ(p.tensor.item(), 0.95);
}

TEST(Sgd, NoMomentumIsGradientDescent) {
  SgdConfig cfg;
  cfg.lr_new = 0.25;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  TrainState st;
  auto p = scalar_param("w", 2.0, 3.0);
  for (int i = 0; i < 3; ++i) sgd_step(st, {p}, cfg, 0);
  EXPECT_DOUBLE_EQ(p.tensor.item(), 2.0 - 3 * 0.25 * 3.0);
}

TEST(Sgd, WeightDecayAloneIsGeometric) {
  SgdConfig cfg;
  cfg.lr_new = 0.1;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.5;
  TrainState st;
  auto p = scalar_param("w", 3.0, 0.0);
  for (int k = 1; k <= 20; ++k) {
    sgd_step(st, {p}, cfg, 0);
    EXPECT_NEAR(p.tensor.item(), 3.0 * std::pow(1.0 - 0.1 * 0.5, k), 1e-13);
  }
}

TEST(Sgd, MatchesScalarOracle) {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    SgdConfig cfg;
    cfg.lr_new = rng.uniform(1e-4, 0.5);
    cfg.lr_pretrained_analog = rng.uniform(1e-5, 0.1);
    cfg.momentum = rng.uniform(0.0, 0.99);
    cfg.weight_decay = rng.uniform(0.0, 0.01);
    const ParamGroup group = trial % 2 ? ParamGroup::pretrained_analog : ParamGroup::new_layers;
    const double lr = group == ParamGroup::pretrained_analog ? cfg.lr_pretrained_analog : cfg.lr_new;
    Tensor w(Shape{5});
    for (auto& x : w.data()) x = rng.gaussian(1.0);
    std::vector<double> ow(w.data().begin(), w.data().end()), ov(5, 0.0);
    TrainState st;
    for (int step = 0; step < 4; ++step) {
      for (std::size_t i = 0; i < 5; ++i) w.grad_mut()[i] = rng.gaussian(1.0);
      for (std::size_t i = 0; i < 5; ++i) {
        const double gi = w.grad()[i] + cfg.weight_decay * ow[i];
        ov[i] = cfg.momentum * ov[i] - lr * gi;
        ow[i] += ov[i];
      }
      sgd_step(st, {Param{"w", w, group}}, cfg, 0);
      for (std::size_t i = 0; i < 5; ++i) {
        ASSERT_NEAR(w.data()[i], ow[i], 1e-12);
        ASSERT_NEAR(st.velocity.at("w").data()[i], ov[i], 1e-12);
      }
    }
  }
}

TEST(Sgd, ZeroGradientNoDecayIsInvariant) {
  SgdConfig cfg;
  cfg.weight_decay = 0.0;
  TrainState st;
  auto p = scalar_param("w", 0.123456789, 0.0);
  Param missing{"m", Tensor(Shape{3}, 0.75), ParamGroup::pretrained_analog};
  for (int i = 0; i < 10; ++i) sgd_step(st, {p, missing}, cfg, 0);
  EXPECT_EQ(p.tensor.item(), 0.123456789);
  for (double v : missing.tensor.data()) EXPECT_EQ(v, 0.75);
}

TEST(Sgd, NonFiniteGradientNamesParameter) {
  SgdConfig cfg;
  TrainState st;
  auto good = scalar_param("good", 1.0, 0.5);
  auto bad = scalar_param("head.weight", 1.0, std::nan(""));
  try {
    sgd_step(st, {good, bad}, cfg, 0);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("head.weight"), std::string::npos);
  }
  EXPECT_EQ(good.tensor.item(), 1.0);
}

TEST(Sgd, ClipBoundsTheStep) {
  SgdConfig cfg;
  cfg.lr_new = 1.0;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.clip_norm = 1.0;
  TrainState st;
  auto a = scalar_param("a", 0.0, 3.0);
  auto b = scalar_param("b", 0.0, 4.0);
  sgd_step(st, {a, b}, cfg, 0);
  EXPECT_DOUBLE_EQ(a.tensor.item(), -0.6);
  EXPECT_DOUBLE_EQ(b.tensor.item(), -0.8);
}

TEST(Sgd, ScheduleAndValidation) {
  SgdConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.learning_rate(ParamGroup::new_layers, 7), 1e-2);
  EXPECT_DOUBLE_EQ(cfg.learning_rate(ParamGroup::pretrained_analog, 7), 1e-4);
  cfg.schedule = SgdConfig::Schedule::step;
  cfg.step_every = 3;
  cfg.step_gamma = 0.5;
  EXPECT_DOUBLE_EQ(cfg.learning_rate(ParamGroup::new_layers, 2), 1e-2);
  EXPECT_DOUBLE_EQ(cfg.learning_rate(ParamGroup::new_layers, 3), 5e-3);
  EXPECT_DOUBLE_EQ(cfg.learning_rate(ParamGroup::new_layers, 7), 2.5e-3);
  SgdConfig bad;
  bad.momentum = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = SgdConfig{};
  bad.lr_new = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = SgdConfig{};
  bad.weight_decay = -1e-3;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Train, ZeroLearningRateFreezesModel) {
  const ModelConfig mc = small_config();
  const auto model = LstmCfModel::create(mc, 3);
  const auto data = toy_examples(mc, 2, 10);
  const auto before = flat_params(model);
  SgdConfig cfg;
  cfg.lr_new = cfg.lr_pretrained_analog = 0.0;
  cfg.weight_decay = 0.0;
  cfg.epochs = 3;
  TrainState st;
  const auto reports = train(model, st, data, cfg, 1);
  ASSERT_EQ(reports.size(), 3u);
  EXPECT_EQ(reports[0].mean_loss, reports[2].mean_loss);
  EXPECT_EQ(flat_params(model), before);
}

TEST(Train, ReproducibleLossCurve) {
  const ModelConfig mc = small_config();
  const auto data = toy_examples(mc, 3, 20);
  SgdConfig cfg;
  cfg.epochs = 3;
  auto run = [&] {
    const auto model = LstmCfModel::create(mc, 5);
    TrainState st;
    std::vector<double> losses;
    for (const auto& r : train(model, st, data, cfg, 9)) losses.push_back(r.mean_loss);
    return std::make_pair(losses, flat_params(model));
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const ModelConfig mc = small_config();
  const auto data = toy_examples(mc, 3, 30);
  SgdConfig cfg;
  cfg.epochs = 3;
  const auto full = LstmCfModel::create(mc, 7);
  TrainState fs;
  train(full, fs, data, cfg, 4);

  const auto part = LstmCfModel::create(mc, 7);
  TrainState ps;
  SgdConfig first = cfg;
  first.epochs = 1;
  train(part, ps, data, first, 4);
  const auto dir = temp_dir("resume");
  save_checkpoint(dir / "e1.ckpt", make_checkpoint(part, ps, "x"));
  const auto resumed = LstmCfModel::create(mc, 99);
  TrainState rs;
  restore_checkpoint(load_checkpoint(dir / "e1.ckpt"), resumed, &rs);
  EXPECT_EQ(rs.epoch, 1u);
  train(resumed, rs, data, cfg, 4);
  EXPECT_EQ(flat_params(resumed), flat_params(full));
  EXPECT_EQ(rs.running_loss, fs.running_loss);
}

TEST(Train, SmallStepsDoNotIncreaseLoss) {
  const ModelConfig mc = small_config();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto model = LstmCfModel::create(mc, seed);
    const auto data = toy_examples(mc, 1, 100 + seed);
    SgdConfig cfg;
    cfg.lr_new = cfg.lr_pretrained_analog = 1e-4;
    cfg.epochs = 1;
    TrainState st;
    double prev = example_loss(model, data[0]);
    for (int step = 0; step < 10; ++step) {
      st.epoch = 0;
      train(model, st, data, cfg, seed);
      const double now = example_loss(model, data[0]);
      EXPECT_LE(now, prev) << "seed " << seed << " step " << step;
      prev = now;
    }
  }
}

TEST(Train, RejectsEmptyDataAndClassMismatch) {
  const ModelConfig mc = small_config();
  const auto model = LstmCfModel::create(mc, 0);
  TrainState st;
  EXPECT_THROW(train(model, st, {}, SgdConfig{}, 0), ConfigError);
  Manifest m;
  m.classes = {"a", "b"};
  EXPECT_THROW(load_examples(m, mc, CropPolicy::center, 0), ConfigError);
}

TEST(Train, EvaluateCountsEveryPixel) {
  const ModelConfig mc = small_config();
  const auto model = LstmCfModel::create(mc, 0);
  const auto data = toy_examples(mc, 2, 40);
  const auto full = evaluate(model, data, EvalResolution::input);
  const auto grid = evaluate(model, data, EvalResolution::grid);
  EXPECT_EQ(full.total() + full.ignored(), 2u * mc.input_size * mc.input_size);
  EXPECT_EQ(grid.total() + grid.ignored(), 2u * mc.grid * mc.grid);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ModelConfig mc = small_config();
  const auto model = LstmCfModel::create(mc, 11);
  TrainState st;
  st.epoch = 4;
  st.running_loss = 0.1 + 0.2;
  for (const auto& p : model.parameters()) {
    Tensor v(p.tensor.shape());
    for (auto& x : v.data()) x = std::nextafter(1.0 / 3.0, 1.0);
    st.velocity[p.name] = v;
  }
  const auto dir = temp_dir("roundtrip");
  const auto ck = make_checkpoint(model, st, "model.hidden = 2\n");
  save_checkpoint(dir / "a.ckpt", ck);
  const auto back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.config_text, ck.config_text);
  ASSERT_EQ(back.params.size(), ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    EXPECT_EQ(back.params[i].first, ck.params[i].first);
    EXPECT_EQ(back.params[i].second.shape(), ck.params[i].second.shape());
    EXPECT_TRUE(std::equal(back.params[i].second.data().begin(), back.params[i].second.data().end(),
                           ck.params[i].second.data().begin()));
  }
  const auto other = LstmCfModel::create(mc, 12);
  TrainState os;
  restore_checkpoint(back, other, &os);
  EXPECT_EQ(flat_params(other), flat_params(model));
  EXPECT_EQ(os.epoch, 4u);
  EXPECT_EQ(os.running_loss, st.running_loss);
  EXPECT_EQ(os.velocity.size(), st.velocity.size());
  save_checkpoint(dir / "b.ckpt", make_checkpoint(other, os, "model.hidden = 2\n"));
  auto bytes = [](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  };
  EXPECT_EQ(bytes(dir / "a.ckpt"), bytes(dir / "b.ckpt"));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const ModelConfig mc = small_config();
  const auto model = LstmCfModel::create(mc, 1);
  const auto dir = temp_dir("corrupt");
  save_checkpoint(dir / "ok.ckpt", make_checkpoint(model, TrainState{}, "cfg"));
  std::ifstream f(dir / "ok.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  auto write = [&](const std::string& name, const std::string& b) {
    std::ofstream o(dir / name, std::ios::binary);
    o.write(b.data(), static_cast<std::streamsize>(b.size()));
    return dir / name;
  };
  for (std::size_t cut : {std::size_t{2}, std::size_t{6}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(load_checkpoint(write("cut.ckpt", bytes.substr(0, cut))), FormatError) << cut;
  EXPECT_THROW(load_checkpoint(write("trail.ckpt", bytes + "x")), FormatError);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("magic.ckpt", magic)), FormatError);
  std::string version = bytes;
  version[4] = 2;
  try {
    load_checkpoint(write("version.ckpt", version));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), FormatError);
}

TEST(Checkpoint, ArchitectureMismatchListsDifferences) {
  ModelConfig a = small_config();
  ModelConfig b = small_config();
  b.hidden = 3;
  b.ablation.disable_fusion_layer = true;
  const auto ma = LstmCfModel::create(a, 0);
  const auto mb = LstmCfModel::create(b, 0);
  const auto before = flat_params(mb);
  try {
    restore_checkpoint(make_checkpoint(ma, TrainState{}, ""), mb);
    FAIL() << "expected CheckpointMismatch";
  } catch (const CheckpointMismatch& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("shape differs: ctx_rgb.fwd.W_if"), std::string::npos) << msg;
    EXPECT_NE(msg.find("not in model: fusion.fwd.W_if"), std::string::npos) << msg;
    EXPECT_NE(msg.find("missing in checkpoint: fusion_proj"), std::string::npos) << msg;
  }
  EXPECT_EQ(flat_params(mb), before);
}
