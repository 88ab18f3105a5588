#include "lstmcf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "lstmcf/error.hpp"

namespace lstmcf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string part; std::getline(in, part, sep);) out.push_back(trim(part));
  return out;
}

template <class T>
T parse_num(const std::string& v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) throw ConfigError("not a number: '" + v + "'");
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::vector<ConvBlockSpec> parse_blocks(const std::string& v) {
  std::vector<ConvBlockSpec> out;
  for (const auto& b : split(v, ',')) {
    const auto f = split(b, ':');
    if (f.size() != 6) throw ConfigError("block '" + b + "' must be out:kernel:stride:padding:dilation:pool");
    out.push_back({parse_num<std::size_t>(f[0]), parse_num<std::size_t>(f[1]), parse_num<std::size_t>(f[2]),
                   parse_num<std::size_t>(f[3]), parse_num<std::size_t>(f[4]), parse_num<std::size_t>(f[5])});
  }
  return out;
}

std::string fmt_blocks(const std::vector<ConvBlockSpec>& blocks) {
  std::string s;
  for (const auto& b : blocks) {
    if (!s.empty()) s += ", ";
    s += std::to_string(b.out_channels) + ':' + std::to_string(b.kernel) + ':' + std::to_string(b.stride) + ':' +
         std::to_string(b.padding) + ':' + std::to_string(b.dilation) + ':' + std::to_string(b.pool);
  }
  return s;
}

std::vector<std::size_t> parse_list(const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  for (const auto& x : split(v, ',')) out.push_back(parse_num<std::size_t>(x));
  return out;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::filesystem::path&)> set;
};

template <class T>
Key size_key(std::string name, T RunConfig::*section, std::size_t T::*field) {
  return {name, [=](const RunConfig& c) { return std::to_string(c.*section.*field); },
          [=](RunConfig& c, const std::string& v, const std::filesystem::path&) {
            c.*section.*field = parse_num<std::size_t>(v);
          }};
}

template <class T>
Key double_key(std::string name, T RunConfig::*section, double T::*field) {
  return {name, [=](const RunConfig& c) { return fmt(c.*section.*field); },
          [=](RunConfig& c, const std::string& v, const std::filesystem::path&) {
            c.*section.*field = parse_num<double>(v);
          }};
}

Key flag_key(std::string name, bool AblationFlags::*field) {
  return {name, [=](const RunConfig& c) { return fmt_bool(c.model.ablation.*field); },
          [=](RunConfig& c, const std::string& v, const std::filesystem::path&) {
            c.model.ablation.*field = parse_bool(v);
          }};
}

Key path_key(std::string name, std::filesystem::path DataConfig::*field) {
  return {name, [=](const RunConfig& c) { return (c.data.*field).string(); },
          [=](RunConfig& c, const std::string& v, const std::filesystem::path& base) {
            const std::filesystem::path p(v);
            c.data.*field = p.empty() || p.is_absolute() || base.empty() ? p : base / p;
          }};
}

Key path_keys(const std::string& prefix, PathConfig ModelConfig::*path, int which) {
  if (which == 0)
    return {prefix + ".blocks", [=](const RunConfig& c) { return fmt_blocks((c.model.*path).blocks); },
            [=](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              (c.model.*path).blocks = parse_blocks(v);
            }};
  if (which == 1)
    return {prefix + ".taps", [=](const RunConfig& c) { return fmt_list((c.model.*path).tap_blocks); },
            [=](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              (c.model.*path).tap_blocks = parse_list(v);
            }};
  return {prefix + ".init", [=](const RunConfig& c) { return to_string((c.model.*path).init); },
          [=](RunConfig& c, const std::string& v, const std::filesystem::path&) {
            (c.model.*path).init = parse_init_spec(v);
          }};
}

Key init_key(std::string name, InitSpec ModelConfig::*field) {
  return {name, [=](const RunConfig& c) { return to_string(c.model.*field); },
          [=](RunConfig& c, const std::string& v, const std::filesystem::path&) { c.model.*field = parse_init_spec(v); }};
}

const std::vector<Key>& keys() {
  using RC = RunConfig;
  static const std::vector<Key> k = [] {
    std::vector<Key> v;
    v.push_back(size_key("data.crop_size", &RC::model, &ModelConfig::input_size));
    v.push_back(size_key("model.grid", &RC::model, &ModelConfig::grid));
    v.push_back(size_key("model.hidden", &RC::model, &ModelConfig::hidden));
    v.push_back(size_key("model.classes", &RC::model, &ModelConfig::classes));
    v.push_back(size_key("model.head_channels", &RC::model, &ModelConfig::head_channels));
    for (int i = 0; i < 3; ++i) v.push_back(path_keys("model.rgb", &ModelConfig::rgb, i));
    v.push_back(path_keys("model.depth", &ModelConfig::depth, 0));
    v.push_back(path_keys("model.depth", &ModelConfig::depth, 2));
    v.push_back(init_key("model.new_conv_init", &ModelConfig::new_conv_init));
    v.push_back(init_key("model.lstm_init", &ModelConfig::lstm_init));
    v.push_back(double_key("model.conv_bias", &RC::model, &ModelConfig::conv_bias));
    v.push_back({"model.conventional_output_gate",
                 [](const RC& c) { return fmt_bool(c.model.conventional_output_gate); },
                 [](RC& c, const std::string& s, const std::filesystem::path&) {
                   c.model.conventional_output_gate = parse_bool(s);
                 }});
    v.push_back({"model.variant",
                 [](const RC& c) {
                   const auto var = variant_of(c.model.ablation);
                   return var ? variant_name(*var) : std::string("custom");
                 },
                 [](RC& c, const std::string& s, const std::filesystem::path&) {
                   if (s != "custom") c.model.ablation = flags_for(parse_variant(s));
                 }});
    v.push_back(flag_key("model.ablation.disable_rgb_path", &AblationFlags::disable_rgb_path));
    v.push_back(flag_key("model.ablation.disable_depth_path", &AblationFlags::disable_depth_path));
    v.push_back(flag_key("model.ablation.disable_multiscale_taps", &AblationFlags::disable_multiscale_taps));
    v.push_back(flag_key("model.ablation.disable_cross_layer", &AblationFlags::disable_cross_layer));
    v.push_back(flag_key("model.ablation.disable_fusion_layer", &AblationFlags::disable_fusion_layer));
    v.push_back(flag_key("model.ablation.disable_context_layers", &AblationFlags::disable_context_layers));
    v.push_back(flag_key("model.ablation.single_context_before_fusion", &AblationFlags::single_context_before_fusion));

    v.push_back(double_key("optim.lr_new", &RC::optim, &SgdConfig::lr_new));
    v.push_back(double_key("optim.lr_pretrained_analog", &RC::optim, &SgdConfig::lr_pretrained_analog));
    v.push_back(double_key("optim.momentum", &RC::optim, &SgdConfig::momentum));
    v.push_back(double_key("optim.weight_decay", &RC::optim, &SgdConfig::weight_decay));
    v.push_back(size_key("optim.batch_size", &RC::optim, &SgdConfig::batch_size));
    v.push_back(size_key("optim.epochs", &RC::optim, &SgdConfig::epochs));
    v.push_back({"optim.schedule",
                 [](const RC& c) { return std::string(c.optim.schedule == SgdConfig::Schedule::step ? "step" : "constant"); },
                 [](RC& c, const std::string& s, const std::filesystem::path&) {
                   if (s == "constant")
                     c.optim.schedule = SgdConfig::Schedule::constant;
                   else if (s == "step")
                     c.optim.schedule = SgdConfig::Schedule::step;
                   else
                     throw ConfigError("schedule must be constant or step, got '" + s + "'");
                 }});
    v.push_back(double_key("optim.step_gamma", &RC::optim, &SgdConfig::step_gamma));
    v.push_back(size_key("optim.step_every", &RC::optim, &SgdConfig::step_every));
    v.push_back(double_key("optim.clip_norm", &RC::optim, &SgdConfig::clip_norm));

    v.push_back(path_key("data.train_manifest", &DataConfig::train_manifest));
    v.push_back(path_key("data.test_manifest", &DataConfig::test_manifest));
    v.push_back({"data.crop_policy",
                 [](const RC& c) { return std::string(c.data.crop_policy == CropPolicy::random ? "random" : "center"); },
                 [](RC& c, const std::string& s, const std::filesystem::path&) {
                   if (s == "center")
                     c.data.crop_policy = CropPolicy::center;
                   else if (s == "random")
                     c.data.crop_policy = CropPolicy::random;
                   else
                     throw ConfigError("crop_policy must be center or random, got '" + s + "'");
                 }});

    v.push_back({"run.seed", [](const RC& c) { return std::to_string(c.run.seed); },
                 [](RC& c, const std::string& s, const std::filesystem::path&) {
                   c.run.seed = parse_num<std::uint64_t>(s);
                 }});
    v.push_back({"run.precision", [](const RC& c) { return std::string(c.run.precision == Precision::f32 ? "32" : "64"); },
                 [](RC& c, const std::string& s, const std::filesystem::path&) {
                   if (s == "32")
                     c.run.precision = Precision::f32;
                   else if (s == "64")
                     c.run.precision = Precision::f64;
                   else
                     throw ConfigError("precision must be 32 or 64, got '" + s + "'");
                 }});
    v.push_back({"run.out", [](const RC& c) { return c.run.out.string(); },
                 [](RC& c, const std::string& s, const std::filesystem::path&) { c.run.out = s; }});
    v.push_back(size_key("run.checkpoint_every", &RC::run, &RunSettings::checkpoint_every));
    v.push_back({"run.eval_resolution",
                 [](const RC& c) { return std::string(c.run.eval_resolution == EvalResolution::grid ? "grid" : "input"); },
                 [](RC& c, const std::string& s, const std::filesystem::path&) {
                   if (s == "input")
                     c.run.eval_resolution = EvalResolution::input;
                   else if (s == "grid")
                     c.run.eval_resolution = EvalResolution::grid;
                   else
                     throw ConfigError("eval_resolution must be input or grid, got '" + s + "'");
                 }});
    return v;
  }();
  return k;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  std::map<std::string, const Key*> by_name;
  for (const auto& k : keys()) by_name[k.name] = &k;
  RunConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto it = by_name.find(key);
    if (it == by_name.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      it->second->set(c, value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  c.model.validate();
  c.optim.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

std::string to_text(const RunConfig& c) {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(c) + '\n';
  return out;
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

}  // namespace lstmcf
