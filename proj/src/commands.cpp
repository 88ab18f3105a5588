#include "lstmcf/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "lstmcf/error.hpp"
#include "lstmcf/gradcheck_suite.hpp"

namespace fs = std::filesystem;

namespace lstmcf {

namespace {

std::string printf_str(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw FormatError("cannot write " + path.string());
}

// Architecture and training settings only: two runs that differ only in
// their output directory produce identical checkpoints.
std::string snapshot(RunConfig cfg) {
  cfg.run.out.clear();
  return to_text(cfg);
}

LstmCfModel model_for(const RunConfig& cfg, const std::optional<fs::path>& checkpoint) {
  const auto model = LstmCfModel::create(cfg.model, cfg.run.seed);
  if (checkpoint) restore_checkpoint(load_checkpoint(*checkpoint), model);
  return model;
}

std::string fmt_score(const std::optional<JaccardScores>& s) {
  return s ? printf_str("%.4f", s->mean_paper) : std::string("-");
}

}  // namespace

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig c = g.config ? load_run_config(*g.config) : RunConfig{};
  if (g.seed) c.run.seed = *g.seed;
  if (g.precision) c.run.precision = *g.precision;
  if (g.out) c.run.out = *g.out;
  return c;
}

std::array<std::uint8_t, 3> palette_color(std::uint8_t cls) {
  std::array<std::uint8_t, 3> rgb{0, 0, 0};
  unsigned c = cls;
  for (int j = 0; j < 8; ++j) {
    for (int ch = 0; ch < 3; ++ch) rgb[ch] = static_cast<std::uint8_t>(rgb[ch] | (((c >> ch) & 1u) << (7 - j)));
    c >>= 3;
  }
  return rgb;
}

PnmImage colorize(const LabelMap& labels) {
  PnmImage img{labels.width, labels.height, 3, 255, std::vector<std::uint16_t>(3 * labels.labels.size()), {}};
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    const auto c = palette_color(labels.labels[i]);
    for (std::size_t ch = 0; ch < 3; ++ch) img.samples[3 * i + ch] = c[ch];
  }
  return img;
}

LabelMap decode_colorized(const PnmImage& img) {
  if (img.channels != 3 || img.maxval != 255) throw FormatError("colorized label image must be P6 with maxval 255");
  std::map<std::array<std::uint8_t, 3>, std::uint8_t> inverse;
  for (unsigned i = 0; i < 256; ++i) inverse[palette_color(static_cast<std::uint8_t>(i))] = static_cast<std::uint8_t>(i);
  LabelMap out(img.width, img.height);
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    const std::array<std::uint8_t, 3> c{static_cast<std::uint8_t>(img.samples[3 * i]),
                                        static_cast<std::uint8_t>(img.samples[3 * i + 1]),
                                        static_cast<std::uint8_t>(img.samples[3 * i + 2])};
    auto it = inverse.find(c);
    if (it == inverse.end()) throw FormatError("pixel " + std::to_string(i) + " has a color outside the palette");
    out.labels[i] = it->second;
  }
  return out;
}

ExperimentResult train_and_evaluate(const RunConfig& cfg, const std::vector<Example>& train_set,
                                    const std::vector<Example>& test_set) {
  const auto model = LstmCfModel::create(cfg.model, cfg.run.seed);
  TrainState state;
  ExperimentResult r;
  r.epochs = train(model, state, train_set, cfg.optim, cfg.run.seed);
  r.scores = class_jaccard(evaluate(model, test_set, cfg.run.eval_resolution));
  return r;
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::vector<Example>& train_set,
                                      const std::vector<Example>& test_set, std::ostream* progress) {
  std::vector<AblationRow> rows;
  for (Variant v : kAblationVariants) {
    RunConfig c = cfg;
    c.model.ablation = flags_for(v);
    AblationRow row{v, std::nullopt, "ok"};
    const auto start = std::chrono::steady_clock::now();
    try {
      c.model.validate();
      row.scores = train_and_evaluate(c, train_set, test_set).scores;
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
    if (progress)
      *progress << printf_str("%-16s %s  (%.1fs)", variant_name(v).c_str(),
                              row.scores ? fmt_score(row.scores).c_str() : row.status.c_str(),
                              std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count())
                << std::endl;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = printf_str("%-3s %-16s %-58s %10s %9s  %s\n", "#", "variant", "description", "mean_paper",
                               "pixel_acc", "status");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out += printf_str("%-3zu %-16s %-58s %10s %9s  %s\n", i + 1, variant_name(r.variant).c_str(),
                      variant_description(r.variant).c_str(), fmt_score(r.scores).c_str(),
                      r.scores ? printf_str("%.4f", r.scores->pixel_accuracy).c_str() : "-", r.status.c_str());
  }
  return out;
}

int cmd_gen_data(const GlobalOptions& g, const GenDataArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  if (a.count == 0) throw ConfigError("--count must be >= 1");
  if (a.split < 0 || a.split >= 1) throw ConfigError("--split must be in (0, 1), or 0 for no split");
  const SceneSpec spec = a.spec.empty() ? default_scene_spec() : load_scene_spec(a.spec);
  const Manifest m = generate_dataset(spec, a.count, cfg.run.out, cfg.run.seed);
  out << "wrote " << m.entries.size() << " samples and " << (cfg.run.out / "manifest.txt").string() << '\n';
  if (a.split > 0) {
    const auto [tr, te] = make_split(m, a.split, cfg.run.seed);
    write_manifest(cfg.run.out / "train.txt", tr);
    write_manifest(cfg.run.out / "test.txt", te);
    out << "split: " << tr.entries.size() << " train, " << te.entries.size() << " test\n";
  }
  std::vector<LabelMap> maps;
  for (std::size_t i = 0; i < m.entries.size(); ++i) maps.push_back(m.load(i).labels);
  const auto freq = class_frequencies(maps, m.classes.size());
  std::string table = "class\tfreq\n";
  double total = 0.0;
  for (std::size_t i = 0; i < freq.size(); ++i) {
    table += m.classes[i] + '\t' + printf_str("%.6f", freq[i]) + '\n';
    total += freq[i];
  }
  table += "total\t" + printf_str("%.6f", total) + '\n';
  write_text(cfg.run.out / "class_freq.tsv", table);
  out << table;
  return kExitOk;
}

int cmd_train(const GlobalOptions& g, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  set_precision(cfg.run.precision);
  if (cfg.data.train_manifest.empty()) throw ConfigError("data.train_manifest is not set");
  const Manifest m = read_manifest(cfg.data.train_manifest);
  const auto data = load_examples(m, cfg.model, cfg.data.crop_policy, cfg.run.seed);
  const fs::path dir = cfg.run.out;
  const std::string text = snapshot(cfg);
  write_text(dir / "config.txt", text);

  const auto model = LstmCfModel::create(cfg.model, cfg.run.seed);
  TrainState state;
  auto ckpt_path = [&](std::size_t epoch) { return dir / "checkpoints" / printf_str("epoch_%04zu.ckpt", epoch); };
  fs::path last = ckpt_path(0);
  save_checkpoint(last, make_checkpoint(model, state, text));

  std::ofstream loss(dir / "loss.tsv", std::ios::trunc);
  loss << "epoch\tmean_loss\n";
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochReport& r) {
    loss << r.epoch << '\t' << printf_str("%.17g", r.mean_loss) << '\n' << std::flush;
    out << printf_str("epoch %zu  loss %.6f  (%.2fs)", r.epoch, r.mean_loss, r.seconds) << std::endl;
    if (cfg.run.checkpoint_every > 0 && r.epoch % cfg.run.checkpoint_every == 0) {
      last = ckpt_path(r.epoch);
      save_checkpoint(last, make_checkpoint(model, state, text));
    }
  };
  try {
    train(model, state, data, cfg.optim, cfg.run.seed, hooks);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + "; last good checkpoint: " + last.string());
  }
  if (cfg.optim.epochs > 0) {
    save_checkpoint(dir / "final.ckpt", make_checkpoint(model, state, text));
    out << "final checkpoint: " << (dir / "final.ckpt").string() << '\n';
  } else {
    out << "zero epochs: initial checkpoint only: " << last.string() << '\n';
  }
  return kExitOk;
}

int cmd_eval(const GlobalOptions& g, const EvalArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  set_precision(cfg.run.precision);
  const fs::path manifest = a.manifest ? *a.manifest : cfg.data.test_manifest;
  if (manifest.empty()) throw ConfigError("no manifest: pass --manifest or set data.test_manifest");
  const Manifest m = read_manifest(manifest);
  const auto data = load_examples(m, cfg.model, CropPolicy::center, cfg.run.seed);
  ConfusionMatrix cm(cfg.model.classes);
  if (a.oracle) {
    for (const auto& ex : data) {
      const LabelMap& truth = cfg.run.eval_resolution == EvalResolution::grid ? ex.grid_labels : ex.labels;
      cm.accumulate(truth, truth);
    }
  } else {
    cm = evaluate(model_for(cfg, a.checkpoint), data, cfg.run.eval_resolution);
  }
  write_report(cfg.run.out, cm, m.classes);
  out << format_report(cm, m.classes);
  out << printf_str("mean paper-Jaccard: %.6f\n", class_jaccard(cm).mean_paper);
  return kExitOk;
}

int cmd_label(const GlobalOptions& g, const LabelArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  set_precision(cfg.run.precision);
  const auto model = model_for(cfg, a.checkpoint);
  const std::string stem = a.rgb.stem().string();
  const RgbdSample s = read_sample({a.rgb, a.depth, {}}, stem);
  if (s.width() < cfg.model.input_size || s.height() < cfg.model.input_size)
    throw ConfigError(stem + ": image is smaller than the " + std::to_string(cfg.model.input_size) + " crop");
  const Example ex = prepare_example(s, cfg.model, CropPolicy::center, 0);
  LabelMap pred;
  {
    NoGradScope no_grad;
    pred = upsample_nearest(predict_labels(forward(model, ex.rgb, ex.hha)), cfg.model.input_size,
                            cfg.model.input_size);
  }
  PnmImage pgm{pred.width, pred.height, 1, 255, std::vector<std::uint16_t>(pred.labels.begin(), pred.labels.end()), {}};
  const fs::path labels_path = cfg.run.out / (stem + "_labels.pgm"), color_path = cfg.run.out / (stem + "_color.ppm");
  fs::create_directories(cfg.run.out);
  write_pnm(labels_path, pgm);
  write_pnm(color_path, colorize(pred));
  out << "wrote " << labels_path.string() << " and " << color_path.string() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const GlobalOptions& g, const GradcheckArgs& a, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  GradCheckSuiteOptions opt;
  opt.seed = cfg.run.seed;
  opt.inject_fault = a.inject_fault;
  const auto start = std::chrono::steady_clock::now();
  const auto checks = run_gradcheck_suite(cfg.model, opt);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::string table = "component\tmax_rel_error\tcoords\tseconds\tstatus\n";
  bool ok = true;
  for (const auto& c : checks) {
    table += printf_str("%s\t%.3e\t%zu\t%.2f\t%s\n", c.name.c_str(), c.max_rel_error, c.coords, c.seconds,
                        c.passed ? "pass" : "FAIL");
    ok = ok && c.passed;
  }
  write_text(cfg.run.out / "gradcheck.tsv", table);
  out << table << printf_str("threshold %.0e, total %.1fs: %s\n", opt.threshold, seconds, ok ? "pass" : "FAIL");
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_ablate(const GlobalOptions& g, std::ostream& out) {
  const RunConfig cfg = resolve_config(g);
  set_precision(cfg.run.precision);
  if (cfg.data.train_manifest.empty() || cfg.data.test_manifest.empty())
    throw ConfigError("ablate needs data.train_manifest and data.test_manifest");
  const Manifest tr = read_manifest(cfg.data.train_manifest), te = read_manifest(cfg.data.test_manifest);
  const auto train_set = load_examples(tr, cfg.model, cfg.data.crop_policy, cfg.run.seed);
  const auto test_set = load_examples(te, cfg.model, CropPolicy::center, cfg.run.seed);
  const auto rows = run_ablation(cfg, train_set, test_set, &out);
  const std::string table = format_ablation_table(rows);
  std::string tsv = "row\tvariant\tmean_paper_jaccard\tpixel_accuracy\tstatus\n";
  bool ok = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    tsv += std::to_string(i + 1) + '\t' + variant_name(r.variant) + '\t' +
           (r.scores ? printf_str("%.17g", r.scores->mean_paper) : "-") + '\t' +
           (r.scores ? printf_str("%.17g", r.scores->pixel_accuracy) : "-") + '\t' + r.status + '\n';
    ok = ok && r.scores.has_value();
  }
  write_text(cfg.run.out / "ablation.txt", table);
  write_text(cfg.run.out / "ablation.tsv", tsv);
  out << table;
  return ok ? kExitOk : kExitCheckFailed;
}

int run_command(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const CheckpointMismatch& e) {
    err << "error: " << e.what();
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "file error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace lstmcf
