#include "lstmcf/trainer.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lstmcf/hha.hpp"
#include "lstmcf/random.hpp"

namespace lstmcf {

void SgdConfig::validate() const {
  if (!(lr_new >= 0) || !(lr_pretrained_analog >= 0)) throw ConfigError("learning rates must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (schedule == Schedule::step && (step_every < 1 || !(step_gamma > 0)))
    throw ConfigError("step schedule needs step_every >= 1 and gamma > 0");
  if (!(clip_norm >= 0)) throw ConfigError("clip_norm must be >= 0");
}

double SgdConfig::learning_rate(ParamGroup g, std::size_t epoch) const {
  double lr = g == ParamGroup::pretrained_analog ? lr_pretrained_analog : lr_new;
  if (schedule == Schedule::step) lr *= std::pow(step_gamma, static_cast<double>(epoch / step_every));
  return lr;
}

void sgd_step(TrainState& state, const std::vector<Param>& params, const SgdConfig& cfg, std::size_t epoch) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + p.name);
      sq += g * g;
    }
  }
  const double clip = cfg.clip_norm > 0 && std::sqrt(sq) > cfg.clip_norm ? cfg.clip_norm / std::sqrt(sq) : 1.0;
  const Precision prec = precision();
  for (const auto& p : params) {
    auto it = state.velocity.find(p.name);
    if (it == state.velocity.end()) it = state.velocity.emplace(p.name, Tensor(p.tensor.shape())).first;
    if (it->second.shape() != p.tensor.shape()) throw ShapeError("velocity shape differs for " + p.name);
    const double lr = cfg.learning_rate(p.group, epoch);
    Tensor w = p.tensor;
    auto v = it->second.data();
    auto wd = w.data();
    const auto g = p.tensor.grad();
    const bool has = p.tensor.has_grad();
    for (std::size_t i = 0; i < wd.size(); ++i) {
      const double gi = (has ? g[i] * clip : 0.0) + cfg.weight_decay * wd[i];
      v[i] = round_to_precision(cfg.momentum * v[i] - lr * gi, prec);
      wd[i] = round_to_precision(wd[i] + v[i], prec);
    }
  }
}

Example prepare_example(const RgbdSample& s, const ModelConfig& cfg, CropPolicy policy, std::uint64_t crop_seed) {
  validate_sample(s, cfg.classes);
  const RgbdSample c = crop(s, cfg.input_size, policy, crop_seed);
  Example ex;
  ex.id = s.id;
  ex.rgb = c.rgb;
  ex.hha = hha_to_tensor(encode_hha(c.depth));
  ex.labels = c.labels;
  ex.grid_labels = downsample_labels(c.labels, cfg.grid);
  return ex;
}

std::vector<Example> load_examples(const Manifest& m, const ModelConfig& cfg, CropPolicy policy, std::uint64_t seed) {
  if (m.classes.size() != cfg.classes)
    throw ConfigError("manifest has " + std::to_string(m.classes.size()) + " classes but model.classes is " +
                      std::to_string(cfg.classes));
  std::vector<Example> out;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    out.push_back(prepare_example(m.load(i), cfg, policy, splitmix64(seed ^ (i + 1))));
  return out;
}

double example_loss(const LstmCfModel& model, const Example& ex) {
  NoGradScope no_grad;
  return softmax_cross_entropy(forward(model, ex.rgb, ex.hha), ex.grid_labels.labels).item();
}

std::vector<EpochReport> train(const LstmCfModel& model, TrainState& state, const std::vector<Example>& data,
                               const SgdConfig& cfg, std::uint64_t seed, const TrainHooks& hooks) {
  cfg.validate();
  if (data.empty()) throw ConfigError("training set is empty");
  const auto params = model.parameters();
  model.set_requires_grad(true);
  std::vector<EpochReport> reports;
  for (std::size_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(seed, 0x65706f6368ULL + epoch + 1);
    const auto order = shuffled_indices(data.size(), rng);
    double total = 0.0;
    std::size_t in_batch = 0;
    model.zero_grad();
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Example& ex = data[order[k]];
      const double loss =
          value_and_grad([&] { return softmax_cross_entropy(forward(model, ex.rgb, ex.hha), ex.grid_labels.labels); });
      if (!std::isfinite(loss)) throw NumericError("non-finite loss on sample " + ex.id + " in epoch " + std::to_string(epoch + 1));
      total += loss;
      if (++in_batch == cfg.batch_size || k + 1 == order.size()) {
        if (in_batch > 1)
          for (const auto& p : params)
            if (p.tensor.has_grad())
              for (double& g : p.tensor.grad_mut()) g /= static_cast<double>(in_batch);
        sgd_step(state, params, cfg, epoch);
        model.zero_grad();
        in_batch = 0;
      }
    }
    state.epoch = epoch + 1;
    state.running_loss = total / static_cast<double>(data.size());
    EpochReport r{epoch + 1, state.running_loss,
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    reports.push_back(r);
    if (hooks.on_epoch) hooks.on_epoch(r);
  }
  return reports;
}

ConfusionMatrix evaluate(const LstmCfModel& model, const std::vector<Example>& data, EvalResolution res) {
  NoGradScope no_grad;
  ConfusionMatrix cm(model.config.classes);
  for (const auto& ex : data) {
    const LabelMap pred = predict_labels(forward(model, ex.rgb, ex.hha));
    if (res == EvalResolution::grid)
      cm.accumulate(pred, ex.grid_labels);
    else
      cm.accumulate(upsample_nearest(pred, ex.labels.width, ex.labels.height), ex.labels);
  }
  return cm;
}

// ---- checkpoints -------------------------------------------------------------

Checkpoint make_checkpoint(const LstmCfModel& model, const TrainState& state, const std::string& config_text) {
  Checkpoint c;
  c.config_text = config_text;
  for (const auto& p : model.parameters()) {
    c.params.push_back({p.name, p.tensor.clone()});
    auto it = state.velocity.find(p.name);
    c.optimizer.push_back({"v/" + p.name, it != state.velocity.end() ? it->second.clone() : Tensor(p.tensor.shape())});
  }
  c.optimizer.push_back({"state.epoch", Tensor::scalar(static_cast<double>(state.epoch))});
  c.optimizer.push_back({"state.running_loss", Tensor::scalar(state.running_loss)});
  return c;
}

void restore_checkpoint(const Checkpoint& ckpt, const LstmCfModel& model, TrainState* state) {
  std::map<std::string, Tensor> stored;
  for (const auto& [n, t] : ckpt.params) stored[n] = t;
  std::ostringstream diff;
  const auto params = model.parameters();
  for (const auto& p : params) {
    auto it = stored.find(p.name);
    if (it == stored.end())
      diff << "  missing in checkpoint: " << p.name << ' ' << shape_string(p.tensor.shape()) << '\n';
    else if (it->second.shape() != p.tensor.shape())
      diff << "  shape differs: " << p.name << " model " << shape_string(p.tensor.shape()) << " checkpoint "
           << shape_string(it->second.shape()) << '\n';
    if (it != stored.end()) stored.erase(it);
  }
  for (const auto& [n, t] : stored) diff << "  not in model: " << n << ' ' << shape_string(t.shape()) << '\n';
  if (!diff.str().empty()) throw CheckpointMismatch("checkpoint does not match the model architecture:\n" + diff.str());
  std::map<std::string, Tensor> by_name;
  for (const auto& [n, t] : ckpt.params) by_name[n] = t;
  for (const auto& p : params) {
    Tensor dst = p.tensor;
    const auto src = by_name[p.name].data();
    std::copy(src.begin(), src.end(), dst.data().begin());
  }
  if (!state) return;
  state->velocity.clear();
  for (const auto& [n, t] : ckpt.optimizer) {
    if (n.rfind("v/", 0) == 0)
      state->velocity[n.substr(2)] = t.clone();
    else if (n == "state.epoch")
      state->epoch = static_cast<std::size_t>(t.item());
    else if (n == "state.running_loss")
      state->running_loss = t.item();
  }
}

namespace {

constexpr char kMagic[4] = {'L', 'S', 'C', 'F'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void put_records(std::string& out, const std::vector<NamedTensor>& records) {
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, t] : records) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_f64(out, v);
  }
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string path) : b_(bytes), path_(std::move(path)) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw FormatError("checkpoint " + path_ + " is truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_++])) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_++])) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<NamedTensor> records() {
    const std::uint32_t count = u32();
    std::vector<NamedTensor> out;
    for (std::uint32_t r = 0; r < count; ++r) {
      std::string name = str(u32());
      const std::uint32_t rank = u32();
      if (rank == 0 || rank > 8) throw FormatError("checkpoint " + path_ + ": bad rank for " + name);
      Shape shape;
      std::size_t n = 1;
      for (std::uint32_t i = 0; i < rank; ++i) {
        shape.push_back(u32());
        n *= shape.back();
      }
      if (n == 0) throw FormatError("checkpoint " + path_ + ": zero dimension in " + name);
      need(n * 8);
      std::vector<double> values(n);
      for (auto& v : values) v = f64();
      out.emplace_back(std::move(name), Tensor(shape, std::move(values)));
    }
    return out;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::string& b_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put_u32(out, ckpt.version);
  put_u32(out, static_cast<std::uint32_t>(ckpt.config_text.size()));
  out += ckpt.config_text;
  put_records(out, ckpt.params);
  put_records(out, ckpt.optimizer);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write checkpoint " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("short write on checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(bytes, path.string());
  if (r.str(4) != std::string(kMagic, 4)) throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  Checkpoint c;
  c.version = r.u32();
  if (c.version != Checkpoint::kVersion)
    throw FormatError("checkpoint " + path.string() + " has format version " + std::to_string(c.version) +
                      ", this build reads version " + std::to_string(Checkpoint::kVersion));
  c.config_text = r.str(r.u32());
  c.params = r.records();
  c.optimizer = r.records();
  if (!r.done()) throw FormatError("checkpoint " + path.string() + " has trailing bytes");
  return c;
}

}  // namespace lstmcf
