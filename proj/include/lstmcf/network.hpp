#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lstmcf/dataset.hpp"
#include "lstmcf/ops.hpp"
#include "lstmcf/recurrent.hpp"

namespace lstmcf {

// conv -> relu -> optional max pool (window = stride = pool)
struct ConvBlockSpec {
  std::size_t out_channels = 16, kernel = 3, stride = 1, padding = 1, dilation = 1, pool = 0;
  bool operator==(const ConvBlockSpec&) const = default;
};

// Weight initializers by name: "zeros", "msra", "gaussian:<std>",
// "uniform:<half-width>" or "uniform:<lo>,<hi>".
struct InitSpec {
  enum class Kind { zeros, msra, gaussian, uniform } kind = Kind::gaussian;
  double value = 0.01;  // std, or the upper bound for uniform
  double lo = 0.0;      // uniform only
  bool operator==(const InitSpec&) const = default;
  static InitSpec gaussian(double std) { return {Kind::gaussian, std, 0.0}; }
  static InitSpec uniform(double lo, double hi) { return {Kind::uniform, hi, lo}; }
};
InitSpec parse_init_spec(const std::string& text);
std::string to_string(const InitSpec& s);

struct PathConfig {
  std::vector<ConvBlockSpec> blocks;
  std::vector<std::size_t> tap_blocks;  // 1-based block indices, RGB path only
  InitSpec init;
  bool operator==(const PathConfig&) const = default;
};

struct AblationFlags {
  bool disable_rgb_path = false;
  bool disable_depth_path = false;
  bool disable_multiscale_taps = false;
  bool disable_cross_layer = false;
  bool disable_fusion_layer = false;
  bool disable_context_layers = false;
  bool single_context_before_fusion = false;
  bool operator==(const AblationFlags&) const = default;
};

// Ablation report rows in order; single_context is an extra alternative.
enum class Variant { full, no_rgb, no_depth, no_multiscale, no_cross_layer, no_fusion, no_context, no_memorized, single_context };
inline constexpr Variant kAblationVariants[] = {Variant::full,           Variant::no_rgb,    Variant::no_depth,
                                              Variant::no_multiscale,  Variant::no_cross_layer, Variant::no_fusion,
                                              Variant::no_context,     Variant::no_memorized};
AblationFlags flags_for(Variant v);
// nullopt for a flag combination that is not one of the variants.
std::optional<Variant> variant_of(const AblationFlags& f);
std::string variant_name(Variant v);
std::string variant_description(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  std::size_t input_size = 64;  // square crop fed to the network
  std::size_t grid = 8;         // G
  std::size_t hidden = 4;       // d
  std::size_t classes = 6;      // k
  std::size_t head_channels = 16;
  PathConfig rgb, depth;
  InitSpec new_conv_init = InitSpec::gaussian(0.01);
  InitSpec lstm_init = InitSpec::uniform(-0.01, 0.01);
  double conv_bias = 0.0;  // initial bias of every rgb and depth block
  AblationFlags ablation;
  bool conventional_output_gate = false;

  bool operator==(const ModelConfig&) const = default;
  // Throws ConfigError on inconsistent sizes or flag combinations.
  void validate() const;
};

// Seven RGB blocks (three 2x reductions, then dilation 2) tapped after
// blocks 2, 3, 5, and three conv+pool depth blocks.
ModelConfig default_model_config();

struct ConvLayer {
  ConvBlockSpec spec;
  Tensor weight, bias;
};

enum class ParamGroup { pretrained_analog, new_layers };
std::string group_name(ParamGroup g);

struct Param {
  std::string name;
  Tensor tensor;
  ParamGroup group;
};

struct LstmCfModel {
  ModelConfig config;
  std::vector<ConvLayer> rgb_blocks, depth_blocks;
  std::optional<BiScanLayer> ctx_rgb, ctx_depth, ctx_shared, fusion;
  std::optional<ConvLayer> proj_rgb, proj_depth, fusion_proj;
  ConvLayer head;

  static LstmCfModel create(const ModelConfig& cfg, std::uint64_t seed);
  // Every parameter once, in a fixed order, tagged with its group.
  std::vector<Param> parameters() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on) const;
  void zero_grad() const;
};

// Stage shapes, {channels, height, width}.
struct ShapeCensus {
  std::vector<Shape> rgb_blocks, depth_blocks;
  Shape rgb_features, depth_features, conv7;
  Shape ctx_rgb, ctx_depth;  // context maps (or their projections)
  Shape fusion_input, fusion_output;
  Shape head_input, logits;
  std::size_t parameters = 0;
};

// Computed from the configuration alone; no tensors are allocated.
ShapeCensus shape_census(const ModelConfig& cfg);

struct ForwardTrace {
  ShapeCensus shapes;  // parameters left at 0
};

// rgb and hha are 3 x H x W in [0, 1] with H = W = input_size. Returns
// k x G x G logits.
Tensor forward(const LstmCfModel& model, const Tensor& rgb, const Tensor& hha, ForwardTrace* trace = nullptr);

// Argmax per cell, lowest class index on ties.
LabelMap predict_labels(const Tensor& logits);
LabelMap upsample_nearest(const LabelMap& m, std::size_t width, std::size_t height);
// Label at the pixel under each grid cell center.
LabelMap downsample_labels(const LabelMap& m, std::size_t grid);

}  // namespace lstmcf
