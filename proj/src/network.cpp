#include "lstmcf/network.hpp"

#include <cmath>
#include <sstream>

#include "lstmcf/error.hpp"
#include "lstmcf/random.hpp"

namespace lstmcf {

InitSpec parse_init_spec(const std::string& text) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  if (kind == "zeros" || kind == "msra") {
    if (colon != std::string::npos) throw ConfigError("init '" + kind + "' takes no parameter");
    return {kind == "zeros" ? InitSpec::Kind::zeros : InitSpec::Kind::msra, 0.0, 0.0};
  }
  if (kind != "gaussian" && kind != "uniform")
    throw ConfigError("unknown init '" + text + "' (zeros, msra, gaussian:<std>, uniform:<half-width>, uniform:<lo>,<hi>)");
  if (colon == std::string::npos) throw ConfigError("init '" + kind + "' needs a parameter, e.g. " + kind + ":0.01");
  std::vector<double> args;
  std::istringstream in(text.substr(colon + 1));
  for (std::string part; std::getline(in, part, ',');) {
    try {
      std::size_t used = 0;
      args.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ConfigError("bad init parameter in '" + text + "'");
    }
  }
  if (kind == "gaussian") {
    if (args.size() != 1 || !(args[0] > 0)) throw ConfigError("gaussian init needs one std > 0: '" + text + "'");
    return InitSpec::gaussian(args[0]);
  }
  if (args.size() == 1) args = {-args[0], args[0]};
  if (args.size() != 2 || !(args[0] < args[1])) throw ConfigError("uniform init needs lo < hi: '" + text + "'");
  return InitSpec::uniform(args[0], args[1]);
}

std::string to_string(const InitSpec& s) {
  std::ostringstream os;
  os.precision(17);
  switch (s.kind) {
    case InitSpec::Kind::zeros: return "zeros";
    case InitSpec::Kind::msra: return "msra";
    case InitSpec::Kind::gaussian: os << "gaussian:" << s.value; break;
    case InitSpec::Kind::uniform:
      if (s.lo == -s.value)
        os << "uniform:" << s.value;
      else
        os << "uniform:" << s.lo << ',' << s.value;
      break;
  }
  return os.str();
}

AblationFlags flags_for(Variant v) {
  AblationFlags f;
  switch (v) {
    case Variant::full: break;
    case Variant::no_rgb:
      f.disable_rgb_path = true;
      f.disable_cross_layer = true;
      break;
    case Variant::no_depth: f.disable_depth_path = true; break;
    case Variant::no_multiscale: f.disable_multiscale_taps = true; break;
    case Variant::no_cross_layer: f.disable_cross_layer = true; break;
    case Variant::no_fusion: f.disable_fusion_layer = true; break;
    case Variant::no_context: f.disable_context_layers = true; break;
    case Variant::no_memorized:
      f.disable_context_layers = true;
      f.disable_fusion_layer = true;
      break;
    case Variant::single_context: f.single_context_before_fusion = true; break;
  }
  return f;
}

std::optional<Variant> variant_of(const AblationFlags& f) {
  for (Variant v : kAblationVariants)
    if (flags_for(v) == f) return v;
  if (flags_for(Variant::single_context) == f) return Variant::single_context;
  return std::nullopt;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_rgb: return "no_rgb";
    case Variant::no_depth: return "no_depth";
    case Variant::no_multiscale: return "no_multiscale";
    case Variant::no_cross_layer: return "no_cross_layer";
    case Variant::no_fusion: return "no_fusion";
    case Variant::no_context: return "no_context";
    case Variant::no_memorized: return "no_memorized";
    case Variant::single_context: return "single_context";
  }
  return "?";
}

std::string variant_description(Variant v) {
  switch (v) {
    case Variant::full: return "Full model";
    case Variant::no_rgb: return "Without RGB path, RGB stack applied to HHA";
    case Variant::no_depth: return "Without depth path";
    case Variant::no_multiscale: return "Without multi-scale RGB feature concatenation";
    case Variant::no_cross_layer: return "Without cross-layer integration of RGB conv features";
    case Variant::no_fusion: return "Without memorized fusion layer";
    case Variant::no_context: return "Without memorized context layers";
    case Variant::no_memorized: return "Without any memorized (context or fusion) layers";
    case Variant::single_context: return "Single shared context layer before fusion";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::full, Variant::no_rgb, Variant::no_depth, Variant::no_multiscale, Variant::no_cross_layer,
                    Variant::no_fusion, Variant::no_context, Variant::no_memorized, Variant::single_context})
    if (variant_name(v) == name) return v;
  throw ConfigError("unknown variant '" + name + "'");
}

ModelConfig default_model_config() {
  ModelConfig c;
  const std::size_t h = c.head_channels;
  c.rgb.blocks = {{8, 3, 1, 1, 1, 2}, {16, 3, 1, 1, 1, 2}, {16, 3, 1, 1, 1, 2}, {16, 3, 1, 2, 2, 0},
                  {16, 3, 1, 2, 2, 0}, {16, 3, 1, 2, 2, 0}, {h, 3, 1, 2, 2, 0}};
  c.rgb.tap_blocks = {2, 3, 5};
  c.rgb.init = {InitSpec::Kind::msra, 0.0, 0.0};
  c.depth.blocks = {{8, 3, 1, 1, 1, 2}, {16, 3, 1, 1, 1, 2}, {16, 3, 1, 1, 1, 2}};
  c.depth.init = InitSpec::gaussian(0.01);
  return c;
}

namespace {

std::size_t conv_out(std::size_t n, const ConvBlockSpec& b) {
  const long span = static_cast<long>(b.dilation * (b.kernel - 1) + 1);
  const long padded = static_cast<long>(n + 2 * b.padding);
  if (padded < span) return 0;
  return static_cast<std::size_t>((padded - span) / static_cast<long>(b.stride)) + 1;
}

// Output sizes after each block of a path; throws when a block does not fit.
std::vector<Shape> path_shapes(const PathConfig& p, std::size_t in_channels, std::size_t size, const char* name) {
  std::vector<Shape> out;
  std::size_t c = in_channels, n = size;
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& b = p.blocks[i];
    n = conv_out(n, b);
    if (n == 0) throw ConfigError(std::string(name) + " block " + std::to_string(i + 1) + " does not fit its input");
    if (b.pool) {
      if (n < b.pool) throw ConfigError(std::string(name) + " block " + std::to_string(i + 1) + " pool larger than map");
      n = (n - b.pool) / b.pool + 1;
    }
    c = b.out_channels;
    out.push_back({c, n, n});
  }
  return out;
}

void validate_path(const PathConfig& p, const char* name) {
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& b = p.blocks[i];
    if (!b.out_channels || !b.kernel || !b.stride || !b.dilation)
      throw ConfigError(std::string(name) + " block " + std::to_string(i + 1) +
                        ": channels, kernel, stride and dilation must be >= 1");
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (!input_size || !grid || !hidden || !classes || !head_channels)
    throw ConfigError("model sizes (input_size, grid, hidden, classes, head_channels) must be >= 1");
  if (classes > 255) throw ConfigError("at most 255 classes (label 255 means ignore)");
  validate_path(rgb, "rgb");
  validate_path(depth, "depth");
  if (rgb.tap_blocks.size() != 3) throw ConfigError("rgb path needs exactly 3 tap blocks");
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t t = rgb.tap_blocks[i];
    if (t < 1 || t > rgb.blocks.size()) throw ConfigError("rgb tap block " + std::to_string(t) + " out of range");
    if (i && t <= rgb.tap_blocks[i - 1]) throw ConfigError("rgb tap blocks must be strictly increasing");
  }
  if (rgb.blocks.back().out_channels != head_channels)
    throw ConfigError("last rgb block has " + std::to_string(rgb.blocks.back().out_channels) +
                      " channels but head_channels is " + std::to_string(head_channels));
  if (depth.blocks.size() != 3) throw ConfigError("depth path needs exactly 3 blocks");
  if (!depth.tap_blocks.empty()) throw ConfigError("depth path has no taps");
  const auto& a = ablation;
  if (a.disable_rgb_path && a.disable_depth_path) throw ConfigError("cannot disable both the rgb and depth paths");
  if (!variant_of(a))
    throw ConfigError("ablation flags do not describe a single variant (see `ablate` for the supported rows)");
  path_shapes(rgb, 3, input_size, "rgb");
  path_shapes(depth, 3, input_size, "depth");
}

std::string group_name(ParamGroup g) { return g == ParamGroup::pretrained_analog ? "pretrained_analog" : "new"; }

namespace {

Init init_for(const InitSpec& s, std::size_t fan_in) {
  switch (s.kind) {
    case InitSpec::Kind::zeros: return Zeros{};
    case InitSpec::Kind::msra: return Gaussian{std::sqrt(2.0 / static_cast<double>(fan_in))};
    case InitSpec::Kind::gaussian: return Gaussian{s.value};
    case InitSpec::Kind::uniform: return Uniform{s.lo, s.value};
  }
  return Zeros{};
}

ConvLayer make_conv(const ConvBlockSpec& spec, std::size_t in, const InitSpec& init, std::uint64_t seed,
                    double bias = 0.0) {
  const std::size_t fan_in = in * spec.kernel * spec.kernel;
  return {spec, create({spec.out_channels, in, spec.kernel, spec.kernel}, init_for(init, fan_in), seed),
          create({spec.out_channels}, Constant{bias})};
}

ConvBlockSpec pointwise(std::size_t out) { return {out, 1, 1, 0, 1, 0}; }

std::size_t tap_channels(const ModelConfig& c) {
  if (c.ablation.disable_multiscale_taps) return c.rgb.blocks[c.rgb.tap_blocks.back() - 1].out_channels;
  std::size_t n = 0;
  for (std::size_t t : c.rgb.tap_blocks) n += c.rgb.blocks[t - 1].out_channels;
  return n;
}

bool has_depth_path(const AblationFlags& a) { return !a.disable_depth_path && !a.disable_rgb_path; }

}  // namespace

LstmCfModel LstmCfModel::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  LstmCfModel m;
  m.config = cfg;
  const auto& a = cfg.ablation;
  const std::size_t d = cfg.hidden;
  Rng seeds(seed, 0x6d6f64656c);  // one sub-seed per component, in construction order
  auto next = [&] { return seeds.next_u64(); };

  std::size_t in = 3;
  for (const auto& b : cfg.rgb.blocks) {
    m.rgb_blocks.push_back(make_conv(b, in, cfg.rgb.init, next(), cfg.conv_bias));
    in = b.out_channels;
  }
  const std::size_t rgb_feat = tap_channels(cfg);
  std::size_t depth_feat = 0;
  if (has_depth_path(a)) {
    in = 3;
    for (const auto& b : cfg.depth.blocks) {
      m.depth_blocks.push_back(make_conv(b, in, cfg.depth.init, next(), cfg.conv_bias));
      in = b.out_channels;
    }
    depth_feat = in;
  }
  const Init lstm = init_for(cfg.lstm_init, 1);
  auto scan = [&](ScanDirection dir, std::size_t input) {
    BiScanLayer l = BiScanLayer::create(dir, input, d, lstm, next());
    l.conventional_output_gate = cfg.conventional_output_gate;
    return l;
  };
  if (a.single_context_before_fusion) {
    m.ctx_shared = scan(ScanDirection::vertical, rgb_feat + depth_feat);
    m.fusion = scan(ScanDirection::horizontal, 2 * d);
  } else {
    if (a.disable_context_layers) {
      m.proj_rgb = make_conv(pointwise(2 * d), rgb_feat, cfg.new_conv_init, next());
      if (depth_feat) m.proj_depth = make_conv(pointwise(2 * d), depth_feat, cfg.new_conv_init, next());
    } else {
      m.ctx_rgb = scan(ScanDirection::vertical, rgb_feat);
      if (depth_feat) m.ctx_depth = scan(ScanDirection::vertical, depth_feat);
    }
    if (a.disable_fusion_layer)
      m.fusion_proj = make_conv(pointwise(2 * d), 4 * d, cfg.new_conv_init, next());
    else
      m.fusion = scan(ScanDirection::horizontal, 4 * d);
  }
  const std::size_t head_in = 2 * d + (a.disable_cross_layer ? 0 : cfg.head_channels);
  m.head = make_conv(pointwise(cfg.classes), head_in, cfg.new_conv_init, next());
  return m;
}

std::vector<Param> LstmCfModel::parameters() const {
  std::vector<Param> out;
  auto conv = [&](const std::string& name, const ConvLayer& l, ParamGroup g) {
    out.push_back({name + ".weight", l.weight, g});
    out.push_back({name + ".bias", l.bias, g});
  };
  auto scan = [&](const std::string& name, const std::optional<BiScanLayer>& l) {
    if (!l) return;
    for (auto& [n, t] : l->named(name + ".")) out.push_back({n, t, ParamGroup::new_layers});
  };
  for (std::size_t i = 0; i < rgb_blocks.size(); ++i)
    conv("rgb.block" + std::to_string(i + 1), rgb_blocks[i], ParamGroup::pretrained_analog);
  for (std::size_t i = 0; i < depth_blocks.size(); ++i)
    conv("depth.block" + std::to_string(i + 1), depth_blocks[i], ParamGroup::new_layers);
  scan("ctx_rgb", ctx_rgb);
  scan("ctx_depth", ctx_depth);
  scan("ctx_shared", ctx_shared);
  if (proj_rgb) conv("proj_rgb", *proj_rgb, ParamGroup::new_layers);
  if (proj_depth) conv("proj_depth", *proj_depth, ParamGroup::new_layers);
  scan("fusion", fusion);
  if (fusion_proj) conv("fusion_proj", *fusion_proj, ParamGroup::new_layers);
  conv("head", head, ParamGroup::new_layers);
  return out;
}

std::size_t LstmCfModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

void LstmCfModel::set_requires_grad(bool on) const {
  for (const auto& p : parameters()) p.tensor.set_requires_grad(on);
}

void LstmCfModel::zero_grad() const {
  for (const auto& p : parameters()) p.tensor.zero_grad();
}

ShapeCensus shape_census(const ModelConfig& cfg) {
  cfg.validate();
  const auto& a = cfg.ablation;
  const std::size_t d = cfg.hidden, G = cfg.grid;
  ShapeCensus s;
  s.rgb_blocks = path_shapes(cfg.rgb, 3, cfg.input_size, "rgb");
  const std::size_t rgb_feat = tap_channels(cfg);
  std::size_t depth_feat = 0;
  if (has_depth_path(a)) {
    s.depth_blocks = path_shapes(cfg.depth, 3, cfg.input_size, "depth");
    depth_feat = s.depth_blocks.back()[0];
    s.depth_features = {depth_feat, G, G};
  }
  s.rgb_features = {rgb_feat, G, G};
  s.conv7 = {cfg.head_channels, G, G};
  auto conv_params = [](std::size_t in, const ConvBlockSpec& b) {
    return b.out_channels * in * b.kernel * b.kernel + b.out_channels;
  };
  auto lstm_params = [&](std::size_t in) { return 2 * (4 * d * in + 4 * d * d + 4 * d); };
  std::size_t in = 3;
  for (const auto& b : cfg.rgb.blocks) s.parameters += conv_params(in, b), in = b.out_channels;
  if (depth_feat) {
    in = 3;
    for (const auto& b : cfg.depth.blocks) s.parameters += conv_params(in, b), in = b.out_channels;
  }
  if (a.single_context_before_fusion) {
    s.ctx_rgb = {2 * d, G, G};
    s.parameters += lstm_params(rgb_feat + depth_feat) + lstm_params(2 * d);
    s.fusion_input = {2 * d, G, G};
  } else {
    s.ctx_rgb = {2 * d, G, G};
    s.ctx_depth = {2 * d, G, G};
    if (a.disable_context_layers) {
      s.parameters += conv_params(rgb_feat, pointwise(2 * d));
      if (depth_feat) s.parameters += conv_params(depth_feat, pointwise(2 * d));
    } else {
      s.parameters += lstm_params(rgb_feat);
      if (depth_feat) s.parameters += lstm_params(depth_feat);
    }
    s.fusion_input = {4 * d, G, G};
    s.parameters += a.disable_fusion_layer ? conv_params(4 * d, pointwise(2 * d)) : lstm_params(4 * d);
  }
  s.fusion_output = {2 * d, G, G};
  s.head_input = {2 * d + (a.disable_cross_layer ? 0 : cfg.head_channels), G, G};
  s.parameters += conv_params(s.head_input[0], pointwise(cfg.classes));
  s.logits = {cfg.classes, G, G};
  return s;
}

namespace {

Tensor run_block(const ConvLayer& l, const Tensor& x) {
  Tensor y = relu(conv2d(x, l.weight, l.bias, {l.spec.stride, l.spec.padding, l.spec.dilation}));
  return l.spec.pool ? maxpool2d(y, l.spec.pool, l.spec.pool) : y;
}

Tensor pointwise_conv(const ConvLayer& l, const Tensor& x) { return conv2d(x, l.weight, l.bias); }

Tensor to_grid(const Tensor& x, std::size_t G) {
  return x.dim(1) == G && x.dim(2) == G ? x : bilinear_resize(x, G, G);
}

}  // namespace

Tensor forward(const LstmCfModel& model, const Tensor& rgb, const Tensor& hha, ForwardTrace* trace) {
  const ModelConfig& cfg = model.config;
  const auto& a = cfg.ablation;
  const std::size_t n = cfg.input_size, G = cfg.grid, d = cfg.hidden;
  for (const Tensor* t : {&rgb, &hha})
    if (t->shape() != Shape{3, n, n})
      throw ShapeError("forward: inputs must be " + shape_string({3, n, n}) + ", got " + shape_string(t->shape()));
  ShapeCensus* s = trace ? &trace->shapes : nullptr;

  // Without the RGB path the RGB stack consumes HHA instead.
  Tensor x = a.disable_rgb_path ? hha : rgb;
  std::vector<Tensor> taps;
  Tensor conv7;
  for (std::size_t i = 0; i < model.rgb_blocks.size(); ++i) {
    x = run_block(model.rgb_blocks[i], x);
    if (s) s->rgb_blocks.push_back(x.shape());
    for (std::size_t t : cfg.rgb.tap_blocks)
      if (t == i + 1) taps.push_back(to_grid(x, G));
  }
  conv7 = to_grid(x, G);
  const Tensor rgb_feat = a.disable_multiscale_taps ? taps.back() : concat(taps, 0);

  Tensor depth_feat;
  if (!model.depth_blocks.empty()) {
    Tensor y = hha;
    for (const auto& b : model.depth_blocks) {
      y = run_block(b, y);
      if (s) s->depth_blocks.push_back(y.shape());
    }
    depth_feat = to_grid(y, G);
  }

  Tensor fused, fusion_in;
  Tensor c_rgb, c_depth;
  if (a.single_context_before_fusion) {
    const Tensor feats = depth_feat.defined() ? concat({rgb_feat, depth_feat}, 0) : rgb_feat;
    c_rgb = scan_bidirectional(*model.ctx_shared, feats);
    fusion_in = c_rgb;
    fused = scan_bidirectional(*model.fusion, fusion_in);
  } else {
    c_rgb = a.disable_context_layers ? pointwise_conv(*model.proj_rgb, rgb_feat) : scan_bidirectional(*model.ctx_rgb, rgb_feat);
    if (depth_feat.defined())
      c_depth = a.disable_context_layers ? pointwise_conv(*model.proj_depth, depth_feat)
                                         : scan_bidirectional(*model.ctx_depth, depth_feat);
    else
      c_depth = Tensor(Shape{2 * d, G, G});
    fusion_in = concat({c_rgb, c_depth}, 0);
    fused = a.disable_fusion_layer ? pointwise_conv(*model.fusion_proj, fusion_in)
                                   : fuse_contexts(*model.fusion, c_rgb, c_depth);
  }
  const Tensor head_in = a.disable_cross_layer ? fused : concat({conv7, fused}, 0);
  Tensor logits = pointwise_conv(model.head, head_in);

  if (s) {
    s->rgb_features = rgb_feat.shape();
    if (depth_feat.defined()) s->depth_features = depth_feat.shape();
    s->conv7 = conv7.shape();
    s->ctx_rgb = c_rgb.shape();
    if (c_depth.defined()) s->ctx_depth = c_depth.shape();
    s->fusion_input = fusion_in.shape();
    s->fusion_output = fused.shape();
    s->head_input = head_in.shape();
    s->logits = logits.shape();
  }
  return logits;
}

LabelMap predict_labels(const Tensor& logits) {
  if (logits.rank() != 3) throw ShapeError("predict_labels: logits must be K x H x W");
  const std::size_t k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  LabelMap m(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c)
        if (logits.at(c, y, x) > logits.at(best, y, x)) best = c;
      m.at(x, y) = static_cast<std::uint8_t>(best);
    }
  return m;
}

LabelMap upsample_nearest(const LabelMap& m, std::size_t width, std::size_t height) {
  LabelMap out(width, height);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) out.at(x, y) = m.at(x * m.width / width, y * m.height / height);
  return out;
}

LabelMap downsample_labels(const LabelMap& m, std::size_t grid) {
  LabelMap out(grid, grid);
  for (std::size_t gy = 0; gy < grid; ++gy)
    for (std::size_t gx = 0; gx < grid; ++gx)
      out.at(gx, gy) = m.at((2 * gx + 1) * m.width / (2 * grid), (2 * gy + 1) * m.height / (2 * grid));
  return out;
}

}  // namespace lstmcf
