#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lstmcf/hha.hpp"
#include "lstmcf/tensor.hpp"

namespace lstmcf {

inline constexpr std::uint8_t kIgnoreLabel = 255;

struct LabelMap {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> labels;  // row-major, kIgnoreLabel = unlabeled

  LabelMap() = default;
  LabelMap(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), labels(w * h, fill) {}
  std::uint8_t at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }
  std::uint8_t& at(std::size_t x, std::size_t y) { return labels[y * width + x]; }
};

struct RgbdSample {
  std::string id;
  Tensor rgb;  // 3 x H x W in [0, 1]
  DepthImage depth;
  LabelMap labels;

  std::size_t width() const { return labels.width; }
  std::size_t height() const { return labels.height; }
};

// Throws ShapeError unless rgb, depth and labels agree on H x W and every
// label is < num_classes or kIgnoreLabel.
void validate_sample(const RgbdSample& s, std::size_t num_classes);

// ---- synthetic scenes ------------------------------------------------------

struct Range {
  double lo = 0.0, hi = 0.0;
};

enum class Placement {
  floor,  // bottom face at `elevation`, footprint at `distance` along the ground
  ray     // centered `distance` along a viewing ray; size scales with distance
};

struct ObjectTemplate {
  std::string cls;
  Range count{1, 1};
  Placement placement = Placement::floor;
  std::array<Range, 3> size{Range{0.5, 0.5}, Range{0.5, 0.5}, Range{0.5, 0.5}};  // x (width), y (height), z (depth)
  Range elevation{0, 0};
  Range distance{1.5, 3.0};
  Range bearing_deg{-20, 20};  // relative to camera yaw
  Range tilt_deg{0, 0};        // ray placement: elevation angle of the ray
};

// World frame: y up, floor at y = 0, room centered on x = z = 0. The camera
// stands back_offset meters in front of the z = -depth/2 wall.
struct SceneSpec {
  std::size_t width = 64, height = 64;
  double hfov_deg = 60.0;
  Range room_width{4.0, 6.0}, room_depth{4.0, 6.0}, room_height{2.6, 3.0};
  Range camera_height{1.2, 1.6};
  double camera_height_fraction = 0.0;  // > 0 places the camera at this fraction of room height instead
  Range camera_back_offset{0.3, 0.8}, camera_lateral{-0.5, 0.5};
  Range pitch_deg{5.0, 20.0}, yaw_deg{-20.0, 20.0}, roll_deg{0.0, 0.0};
  double roll_flip_probability = 0.0;  // chance of adding 180 degrees of roll
  Vec3 light_direction{0.3, -1.0, 0.4};  // direction the light travels
  double ambient = 0.35, diffuse = 0.65;
  double depth_sigma = 0.0, rgb_sigma = 0.0;
  std::vector<std::string> classes{"wall", "floor", "ceiling", "table", "chair", "bed"};
  std::vector<std::array<double, 3>> albedo;  // per class; empty uses a built-in table
  std::vector<ObjectTemplate> objects;
};

// Desk-scale default: furnished room, 6 classes, 64 x 64.
SceneSpec default_scene_spec();

// Flat `key = value` text. Ranges are written `lo..hi` or a single number;
// vectors are comma-separated. Unknown keys raise ConfigError.
SceneSpec parse_scene_spec(const std::string& text);
SceneSpec load_scene_spec(const std::filesystem::path& path);

// Ray casts the room and its cuboids. Pixel (x, y) looks along
// forward + (x - cx)/fx * right + (y - cy)/fy * down, so the hit parameter is
// the z-depth directly. RGB is albedo * (ambient + diffuse * max(0, -n . L))
// plus noise, clamped and quantized to k/255. Pure function of (spec, seed).
RgbdSample generate_scene(const SceneSpec& spec, std::uint64_t seed, const std::string& id = "scene");

// ---- files -----------------------------------------------------------------

struct SamplePaths {
  std::filesystem::path rgb, depth, labels;
};

// RGB: P6 maxval 255. Depth: P5 maxval 65535 in millimeters with a
// "intrinsics fx fy cx cy" comment. Labels: P5 maxval 255.
void write_sample(const RgbdSample& s, const SamplePaths& paths);
// An empty labels path gives an all-ignore label map. A depth PGM without
// the intrinsics comment gets fx = fy = max(W, H) and a centered principal
// point.
RgbdSample read_sample(const SamplePaths& paths, const std::string& id = "");

struct ManifestEntry {
  std::string id;
  SamplePaths paths;  // relative to the manifest directory
};

struct Manifest {
  std::filesystem::path root;  // directory containing the manifest file
  std::vector<std::string> classes;
  std::vector<ManifestEntry> entries;

  SamplePaths resolve(const ManifestEntry& e) const;
  RgbdSample load(std::size_t i) const;
};

// Line 1 `classes: a,b,...`, then `id<TAB>rgb<TAB>depth<TAB>labels`.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

// ---- cropping and splits ---------------------------------------------------

enum class CropPolicy { center, random };

// Cuts the same size x size window from rgb, depth and labels. The principal
// point moves with the window.
RgbdSample crop(const RgbdSample& s, std::size_t size, CropPolicy policy, std::uint64_t seed = 0);

// Seeded shuffle, then the first round(fraction * n) entries go to train.
std::pair<Manifest, Manifest> make_split(const Manifest& m, double train_fraction, std::uint64_t seed);

// Writes count generated samples under dir/{rgb,depth,labels}/ and
// dir/manifest.txt. Sample i is generate_scene(spec, splitmix64(seed) + i).
Manifest generate_dataset(const SceneSpec& spec, std::size_t count, const std::filesystem::path& dir,
                          std::uint64_t seed);

// Share of non-ignored pixels per class over all samples.
std::vector<double> class_frequencies(const std::vector<LabelMap>& maps, std::size_t num_classes);

}  // namespace lstmcf
