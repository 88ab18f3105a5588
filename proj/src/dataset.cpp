#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "lstmcf/dataset.hpp"
#include "lstmcf/error.hpp"
#include "lstmcf/pnm.hpp"
#include "lstmcf/random.hpp"

namespace lstmcf {

void validate_sample(const RgbdSample& s, std::size_t num_classes) {
  const std::size_t W = s.labels.width, H = s.labels.height;
  if (s.labels.labels.size() != W * H) throw ShapeError(s.id + ": label buffer does not match size");
  if (!s.rgb.defined() || s.rgb.shape() != Shape{3, H, W})
    throw ShapeError(s.id + ": rgb must be 3 x " + std::to_string(H) + " x " + std::to_string(W));
  if (s.depth.width != W || s.depth.height != H || s.depth.depth.size() != W * H)
    throw ShapeError(s.id + ": depth size differs from labels");
  for (std::uint8_t l : s.labels.labels)
    if (l != kIgnoreLabel && l >= num_classes)
      throw ShapeError(s.id + ": label " + std::to_string(l) + " outside " + std::to_string(num_classes) + " classes");
}

void write_sample(const RgbdSample& s, const SamplePaths& paths) {
  const std::size_t W = s.width(), H = s.height();
  PnmImage rgb{W, H, 3, 255, std::vector<std::uint16_t>(3 * W * H), {}};
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        rgb.samples[(y * W + x) * 3 + c] =
            static_cast<std::uint16_t>(std::lround(std::clamp(s.rgb.at(c, y, x), 0.0, 1.0) * 255.0));
  write_pnm(paths.rgb, rgb);

  PnmImage depth{W, H, 1, 65535, std::vector<std::uint16_t>(W * H), {}};
  std::ostringstream k;
  k.precision(17);
  const Intrinsics& in = s.depth.intrinsics;
  k << "intrinsics " << in.fx << ' ' << in.fy << ' ' << in.cx << ' ' << in.cy;
  depth.comments.push_back(k.str());
  for (std::size_t i = 0; i < W * H; ++i) {
    const double mm = std::round(s.depth.depth[i] * 1000.0);
    if (!(mm >= 0.0) || mm > 65535.0)
      throw FormatError(s.id + ": depth " + std::to_string(s.depth.depth[i]) + " m does not fit 16-bit millimeters");
    depth.samples[i] = static_cast<std::uint16_t>(mm);
  }
  write_pnm(paths.depth, depth);

  PnmImage labels{W, H, 1, 255, std::vector<std::uint16_t>(s.labels.labels.begin(), s.labels.labels.end()), {}};
  write_pnm(paths.labels, labels);
}

RgbdSample read_sample(const SamplePaths& paths, const std::string& id) {
  const PnmImage rgb = read_pnm(paths.rgb), depth = read_pnm(paths.depth);
  PnmImage labels;
  if (paths.labels.empty())
    labels = {rgb.width, rgb.height, 1, 255, std::vector<std::uint16_t>(rgb.width * rgb.height, kIgnoreLabel), {}};
  else
    labels = read_pnm(paths.labels);
  if (rgb.channels != 3 || rgb.maxval != 255) throw FormatError(paths.rgb.string() + ": RGB must be P6 with maxval 255");
  if (depth.channels != 1 || depth.maxval != 65535)
    throw FormatError(paths.depth.string() + ": depth must be 16-bit P5 (maxval 65535) in millimeters");
  if (labels.channels != 1 || labels.maxval != 255)
    throw FormatError(paths.labels.string() + ": labels must be P5 with maxval 255");
  const std::size_t W = rgb.width, H = rgb.height;
  if (depth.width != W || depth.height != H || labels.width != W || labels.height != H)
    throw FormatError(id + ": rgb, depth and label images differ in size");

  RgbdSample s;
  s.id = id;
  s.rgb = Tensor(Shape{3, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) s.rgb.at(c, y, x) = rgb.samples[(y * W + x) * 3 + c] / 255.0;
  s.depth.width = W;
  s.depth.height = H;
  s.depth.depth.resize(W * H);
  for (std::size_t i = 0; i < W * H; ++i) s.depth.depth[i] = depth.samples[i] / 1000.0;
  const double f = static_cast<double>(std::max(W, H));
  s.depth.intrinsics = {f, f, (static_cast<double>(W) - 1.0) / 2.0, (static_cast<double>(H) - 1.0) / 2.0};
  for (const std::string& c : depth.comments) {
    std::istringstream is(c);
    std::string tag;
    Intrinsics k;
    if (is >> tag && tag == "intrinsics") {
      if (!(is >> k.fx >> k.fy >> k.cx >> k.cy) || !(k.fx > 0) || !(k.fy > 0))
        throw FormatError(paths.depth.string() + ": malformed intrinsics comment");
      s.depth.intrinsics = k;
    }
  }
  s.labels = LabelMap(W, H);
  for (std::size_t i = 0; i < W * H; ++i) s.labels.labels[i] = static_cast<std::uint8_t>(labels.samples[i]);
  return s;
}

SamplePaths Manifest::resolve(const ManifestEntry& e) const {
  return {root / e.paths.rgb, root / e.paths.depth, root / e.paths.labels};
}

RgbdSample Manifest::load(std::size_t i) const {
  const ManifestEntry& e = entries.at(i);
  RgbdSample s = read_sample(resolve(e), e.id);
  validate_sample(s, classes.size());
  return s;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError(path.string() + ": cannot open manifest");
  Manifest m;
  m.root = path.parent_path();
  std::string line;
  if (!std::getline(f, line) || line.rfind("classes:", 0) != 0)
    throw FormatError(path.string() + ": first line must be 'classes: name0,name1,...'");
  std::stringstream cs(line.substr(8));
  std::string name;
  while (std::getline(cs, name, ',')) {
    name.erase(0, name.find_first_not_of(" \t"));
    name.erase(name.find_last_not_of(" \t\r") + 1);
    if (name.empty()) throw FormatError(path.string() + ": empty class name");
    m.classes.push_back(name);
  }
  if (m.classes.empty()) throw FormatError(path.string() + ": no classes");
  std::set<std::string> ids;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string col;
    while (std::getline(ls, col, '\t')) cols.push_back(col);
    if (cols.size() != 4)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 4 tab-separated columns");
    if (!ids.insert(cols[0]).second) throw FormatError(path.string() + ": duplicate id " + cols[0]);
    m.entries.push_back({cols[0], {cols[1], cols[2], cols[3]}});
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream f(path);
  if (!f) throw FormatError(path.string() + ": cannot write manifest");
  f << "classes: ";
  for (std::size_t i = 0; i < m.classes.size(); ++i) f << (i ? "," : "") << m.classes[i];
  f << '\n';
  for (const ManifestEntry& e : m.entries)
    f << e.id << '\t' << e.paths.rgb.generic_string() << '\t' << e.paths.depth.generic_string() << '\t'
      << e.paths.labels.generic_string() << '\n';
}

RgbdSample crop(const RgbdSample& s, std::size_t size, CropPolicy policy, std::uint64_t seed) {
  const std::size_t W = s.width(), H = s.height();
  if (size == 0 || size > std::min(W, H))
    throw ShapeError("crop: size " + std::to_string(size) + " exceeds " + std::to_string(H) + "x" + std::to_string(W));
  std::size_t x0 = (W - size) / 2, y0 = (H - size) / 2;
  if (policy == CropPolicy::random) {
    Rng rng(seed, 0x63726f70);
    x0 = rng.below(W - size + 1);
    y0 = rng.below(H - size + 1);
  }
  RgbdSample out;
  out.id = s.id;
  out.rgb = Tensor(Shape{3, size, size});
  out.labels = LabelMap(size, size);
  out.depth.width = out.depth.height = size;
  out.depth.depth.resize(size * size);
  out.depth.intrinsics = s.depth.intrinsics;
  out.depth.intrinsics.cx -= static_cast<double>(x0);
  out.depth.intrinsics.cy -= static_cast<double>(y0);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.rgb.at(c, y, x) = s.rgb.at(c, y0 + y, x0 + x);
      out.depth.depth[y * size + x] = s.depth.at(x0 + x, y0 + y);
      out.labels.at(x, y) = s.labels.at(x0 + x, y0 + y);
    }
  return out;
}

std::pair<Manifest, Manifest> make_split(const Manifest& m, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("make_split: fraction must be in (0, 1)");
  const std::size_t n = m.entries.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n)
    throw ConfigError("make_split: " + std::to_string(n) + " entries leave one side of the split empty");
  Rng rng(seed, 0x73706c6974);
  const auto order = shuffled_indices(n, rng);
  Manifest train{m.root, m.classes, {}}, test{m.root, m.classes, {}};
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? train : test).entries.push_back(m.entries[order[i]]);
  return {train, test};
}

Manifest generate_dataset(const SceneSpec& spec, std::size_t count, const std::filesystem::path& dir,
                          std::uint64_t seed) {
  Manifest m;
  m.root = dir;
  m.classes = spec.classes;
  const std::uint64_t base = splitmix64(seed);
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "s%05zu", i);
    ManifestEntry e{id, {std::filesystem::path("rgb") / (std::string(id) + ".ppm"),
                         std::filesystem::path("depth") / (std::string(id) + ".pgm"),
                         std::filesystem::path("labels") / (std::string(id) + ".pgm")}};
    for (const char* sub : {"rgb", "depth", "labels"}) std::filesystem::create_directories(dir / sub);
    write_sample(generate_scene(spec, base + i, id), m.resolve(e));
    m.entries.push_back(e);
  }
  write_manifest(dir / "manifest.txt", m);
  return m;
}

std::vector<double> class_frequencies(const std::vector<LabelMap>& maps, std::size_t num_classes) {
  std::vector<double> counts(num_classes, 0.0);
  double total = 0.0;
  for (const LabelMap& m : maps)
    for (std::uint8_t l : m.labels)
      if (l != kIgnoreLabel && l < num_classes) {
        counts[l] += 1.0;
        total += 1.0;
      }
  if (total > 0.0)
    for (double& c : counts) c /= total;
  return counts;
}

}  // namespace lstmcf
