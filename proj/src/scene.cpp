#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "lstmcf/dataset.hpp"
#include "lstmcf/error.hpp"
#include "lstmcf/random.hpp"

namespace lstmcf {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("scene spec: " + key + ": expected a number, got '" + v + "'");
  }
}

Range parse_range(const std::string& key, const std::string& v) {
  const auto dots = v.find("..");
  if (dots == std::string::npos) {
    const double x = parse_number(key, v);
    return {x, x};
  }
  Range r{parse_number(key, trim(v.substr(0, dots))), parse_number(key, trim(v.substr(dots + 2)))};
  if (r.lo > r.hi) throw ConfigError("scene spec: " + key + ": range lower bound exceeds upper bound");
  return r;
}

std::array<double, 3> parse_triple(const std::string& key, const std::string& v) {
  const auto parts = split(v, ',');
  if (parts.size() != 3) throw ConfigError("scene spec: " + key + ": expected three comma-separated values");
  return {parse_number(key, parts[0]), parse_number(key, parts[1]), parse_number(key, parts[2])};
}

double sample(const Range& r, Rng& rng) { return r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi); }

std::array<double, 3> builtin_albedo(const std::string& name, std::size_t index) {
  static const std::map<std::string, std::array<double, 3>> table = {
      {"wall", {0.78, 0.74, 0.66}},  {"floor", {0.50, 0.36, 0.24}}, {"ceiling", {0.93, 0.93, 0.90}},
      {"table", {0.60, 0.42, 0.22}}, {"chair", {0.25, 0.35, 0.60}}, {"bed", {0.70, 0.30, 0.35}}};
  if (auto it = table.find(name); it != table.end()) return it->second;
  static const std::array<double, 3> palette[] = {{0.35, 0.60, 0.35}, {0.60, 0.55, 0.20}, {0.45, 0.30, 0.60},
                                                  {0.20, 0.55, 0.55}, {0.65, 0.45, 0.45}, {0.40, 0.40, 0.40}};
  return palette[index % std::size(palette)];
}

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator*(double k, Vec3 a) { return {k * a.x, k * a.y, k * a.z}; }
Vec3 cross(Vec3 a, Vec3 b) { return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x}; }
Vec3 unit(Vec3 a) { return (1.0 / std::sqrt(dot(a, a))) * a; }

struct Box {
  Vec3 lo, hi;
  std::uint8_t cls;
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal;
  std::uint8_t cls = kIgnoreLabel;
};

double axis(const Vec3& v, int a) { return a == 0 ? v.x : (a == 1 ? v.y : v.z); }

Vec3 axis_normal(int a, double sign) {
  Vec3 n;
  (a == 0 ? n.x : (a == 1 ? n.y : n.z)) = sign;
  return n;
}

void intersect_box(const Box& b, const Vec3& o, const Vec3& d, Hit& best) {
  double tnear = -std::numeric_limits<double>::infinity(), tfar = std::numeric_limits<double>::infinity();
  int enter_axis = -1;
  for (int a = 0; a < 3; ++a) {
    const double oa = axis(o, a), da = axis(d, a), lo = axis(b.lo, a), hi = axis(b.hi, a);
    if (std::abs(da) < 1e-15) {
      if (oa < lo || oa > hi) return;
      continue;
    }
    double t0 = (lo - oa) / da, t1 = (hi - oa) / da;
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tnear) {
      tnear = t0;
      enter_axis = a;
    }
    tfar = std::min(tfar, t1);
  }
  if (enter_axis < 0 || tnear > tfar || tnear <= 1e-9 || tnear >= best.t) return;
  best.t = tnear;
  best.normal = axis_normal(enter_axis, axis(d, enter_axis) > 0 ? -1.0 : 1.0);
  best.cls = b.cls;
}

}  // namespace

SceneSpec default_scene_spec() {
  SceneSpec s;
  ObjectTemplate table;
  table.cls = "table";
  table.count = {0, 2};
  table.size = {Range{0.8, 1.4}, Range{0.7, 0.8}, Range{0.6, 1.0}};
  table.distance = {1.5, 3.5};
  ObjectTemplate chair;
  chair.cls = "chair";
  chair.count = {0, 3};
  chair.size = {Range{0.4, 0.55}, Range{0.8, 1.0}, Range{0.4, 0.55}};
  chair.distance = {1.2, 3.5};
  ObjectTemplate bed;
  bed.cls = "bed";
  bed.count = {0, 1};
  bed.size = {Range{1.4, 1.8}, Range{0.45, 0.6}, Range{1.9, 2.1}};
  bed.distance = {2.0, 3.5};
  s.objects = {table, chair, bed};
  return s;
}

SceneSpec parse_scene_spec(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("scene spec line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (kv.count(key)) throw ConfigError("scene spec: duplicate key " + key);
    kv[key] = trim(line.substr(eq + 1));
  }

  SceneSpec s;
  s.objects.clear();
  auto take = [&](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = take("classes")) s.classes = split(*v, ',');

  std::map<std::string, std::array<double, 3>> albedo;
  std::map<int, ObjectTemplate> objects;
  for (const auto& [key, v] : kv) {
    if (key == "classes") continue;
    if (key == "image.width") s.width = static_cast<std::size_t>(parse_number(key, v));
    else if (key == "image.height") s.height = static_cast<std::size_t>(parse_number(key, v));
    else if (key == "camera.hfov_deg") s.hfov_deg = parse_number(key, v);
    else if (key == "room.width") s.room_width = parse_range(key, v);
    else if (key == "room.depth") s.room_depth = parse_range(key, v);
    else if (key == "room.height") s.room_height = parse_range(key, v);
    else if (key == "camera.height") s.camera_height = parse_range(key, v);
    else if (key == "camera.height_fraction") s.camera_height_fraction = parse_number(key, v);
    else if (key == "camera.back_offset") s.camera_back_offset = parse_range(key, v);
    else if (key == "camera.lateral") s.camera_lateral = parse_range(key, v);
    else if (key == "camera.pitch_deg") s.pitch_deg = parse_range(key, v);
    else if (key == "camera.yaw_deg") s.yaw_deg = parse_range(key, v);
    else if (key == "camera.roll_deg") s.roll_deg = parse_range(key, v);
    else if (key == "camera.roll_flip_probability") s.roll_flip_probability = parse_number(key, v);
    else if (key == "light.direction") {
      auto t = parse_triple(key, v);
      s.light_direction = {t[0], t[1], t[2]};
    } else if (key == "light.ambient") s.ambient = parse_number(key, v);
    else if (key == "light.diffuse") s.diffuse = parse_number(key, v);
    else if (key == "noise.depth_sigma") s.depth_sigma = parse_number(key, v);
    else if (key == "noise.rgb_sigma") s.rgb_sigma = parse_number(key, v);
    else if (key.rfind("albedo.", 0) == 0) albedo[key.substr(7)] = parse_triple(key, v);
    else if (key.rfind("object.", 0) == 0) {
      const auto parts = split(key, '.');
      if (parts.size() != 3) throw ConfigError("scene spec: bad object key " + key);
      int index = 0;
      try {
        index = std::stoi(parts[1]);
      } catch (const std::exception&) {
        throw ConfigError("scene spec: bad object index in " + key);
      }
      ObjectTemplate& o = objects[index];
      const std::string& field = parts[2];
      if (field == "class") o.cls = v;
      else if (field == "count") o.count = parse_range(key, v);
      else if (field == "placement") {
        if (v == "floor") o.placement = Placement::floor;
        else if (v == "ray") o.placement = Placement::ray;
        else throw ConfigError("scene spec: " + key + " must be floor or ray");
      } else if (field == "size") {
        const auto dims = split(v, ',');
        if (dims.size() != 3) throw ConfigError("scene spec: " + key + ": expected three ranges");
        for (int a = 0; a < 3; ++a) o.size[a] = parse_range(key, dims[a]);
      } else if (field == "elevation") o.elevation = parse_range(key, v);
      else if (field == "distance") o.distance = parse_range(key, v);
      else if (field == "bearing_deg") o.bearing_deg = parse_range(key, v);
      else if (field == "tilt_deg") o.tilt_deg = parse_range(key, v);
      else throw ConfigError("scene spec: unknown key " + key);
    } else
      throw ConfigError("scene spec: unknown key " + key);
  }
  for (auto& [i, o] : objects) {
    if (o.cls.empty()) throw ConfigError("scene spec: object." + std::to_string(i) + " has no class");
    s.objects.push_back(o);
  }
  if (!albedo.empty()) {
    for (std::size_t c = 0; c < s.classes.size(); ++c) {
      auto it = albedo.find(s.classes[c]);
      s.albedo.push_back(it != albedo.end() ? it->second : builtin_albedo(s.classes[c], c));
    }
    for (const auto& [name, rgb] : albedo)
      if (std::find(s.classes.begin(), s.classes.end(), name) == s.classes.end())
        throw ConfigError("scene spec: albedo given for unknown class " + name);
  }
  return s;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read scene spec " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_scene_spec(ss.str());
}

RgbdSample generate_scene(const SceneSpec& spec, std::uint64_t seed, const std::string& id) {
  auto class_index = [&](const std::string& name) {
    auto it = std::find(spec.classes.begin(), spec.classes.end(), name);
    if (it == spec.classes.end()) throw ConfigError("scene spec: class '" + name + "' not in class list");
    return static_cast<std::uint8_t>(it - spec.classes.begin());
  };
  if (spec.classes.size() > 254) throw ConfigError("scene spec: at most 254 classes");
  if (spec.width == 0 || spec.height == 0) throw ConfigError("scene spec: image size must be positive");
  if (!(spec.hfov_deg > 0.0 && spec.hfov_deg < 170.0)) throw ConfigError("scene spec: hfov must be in (0, 170) degrees");
  if (!spec.albedo.empty() && spec.albedo.size() != spec.classes.size())
    throw ConfigError("scene spec: albedo table does not match class list");
  const std::uint8_t wall = class_index("wall"), floor = class_index("floor"), ceiling = class_index("ceiling");

  Rng rng(seed);
  const double RW = sample(spec.room_width, rng), RD = sample(spec.room_depth, rng), RH = sample(spec.room_height, rng);
  const double cam_h = spec.camera_height_fraction > 0.0 ? spec.camera_height_fraction * RH : sample(spec.camera_height, rng);
  const Vec3 cam{sample(spec.camera_lateral, rng), cam_h, -RD / 2 + sample(spec.camera_back_offset, rng)};
  const double yaw = sample(spec.yaw_deg, rng) * kDeg, pitch = sample(spec.pitch_deg, rng) * kDeg;
  double roll = sample(spec.roll_deg, rng) * kDeg;
  if (spec.roll_flip_probability > 0.0 && rng.uniform() < spec.roll_flip_probability) roll += std::numbers::pi;
  if (!(RW > 0 && RD > 0 && RH > 0) || std::abs(cam.x) >= RW / 2 || cam.y <= 0 || cam.y >= RH || std::abs(cam.z) >= RD / 2)
    throw ConfigError("scene spec: camera lies outside the room");

  const Vec3 forward{std::sin(yaw) * std::cos(pitch), -std::sin(pitch), std::cos(yaw) * std::cos(pitch)};
  const Vec3 right0{std::cos(yaw), 0.0, -std::sin(yaw)};
  const Vec3 down0 = cross(right0, forward);
  const Vec3 right = std::cos(roll) * right0 + std::sin(roll) * down0;
  const Vec3 down = -std::sin(roll) * right0 + std::cos(roll) * down0;

  std::vector<Box> boxes;
  for (const ObjectTemplate& t : spec.objects) {
    const std::uint8_t cls = class_index(t.cls);
    const long count = rng.range(static_cast<long>(std::lround(t.count.lo)), static_cast<long>(std::lround(t.count.hi)));
    for (long n = 0; n < count; ++n) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        const double bearing = yaw + sample(t.bearing_deg, rng) * kDeg;
        const double dist = sample(t.distance, rng);
        std::array<double, 3> size{sample(t.size[0], rng), sample(t.size[1], rng), sample(t.size[2], rng)};
        Vec3 center;
        if (t.placement == Placement::floor) {
          const double elev = sample(t.elevation, rng);
          center = {cam.x + dist * std::sin(bearing), elev + size[1] / 2, cam.z + dist * std::cos(bearing)};
        } else {
          const double tilt = sample(t.tilt_deg, rng) * kDeg;
          for (double& s : size) s *= dist;
          center = cam + dist * Vec3{std::cos(tilt) * std::sin(bearing), std::sin(tilt), std::cos(tilt) * std::cos(bearing)};
        }
        const Box b{{center.x - size[0] / 2, center.y - size[1] / 2, center.z - size[2] / 2},
                    {center.x + size[0] / 2, center.y + size[1] / 2, center.z + size[2] / 2},
                    cls};
        const bool inside_room = b.lo.x > -RW / 2 && b.hi.x < RW / 2 && b.lo.y >= 0.0 && b.hi.y < RH &&
                                 b.lo.z > -RD / 2 && b.hi.z < RD / 2;
        const bool holds_camera = cam.x >= b.lo.x && cam.x <= b.hi.x && cam.y >= b.lo.y && cam.y <= b.hi.y &&
                                  cam.z >= b.lo.z && cam.z <= b.hi.z;
        if (inside_room && !holds_camera) {
          boxes.push_back(b);
          break;
        }
      }
    }
  }

  const std::size_t W = spec.width, H = spec.height;
  RgbdSample s;
  s.id = id;
  s.depth.width = W;
  s.depth.height = H;
  s.depth.depth.assign(W * H, 0.0);
  const double f = (static_cast<double>(W) / 2.0) / std::tan(spec.hfov_deg * kDeg / 2.0);
  s.depth.intrinsics = {f, f, (static_cast<double>(W) - 1.0) / 2.0, (static_cast<double>(H) - 1.0) / 2.0};
  s.labels = LabelMap(W, H);
  s.rgb = Tensor(Shape{3, H, W});
  const Vec3 light = unit(spec.light_direction);

  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double a = (static_cast<double>(x) - s.depth.intrinsics.cx) / f;
      const double b = (static_cast<double>(y) - s.depth.intrinsics.cy) / f;
      const Vec3 d = forward + a * right + b * down;
      Hit hit;
      auto wall_hit = [&](double t, Vec3 n, std::uint8_t cls) {
        if (t > 0 && t < hit.t) hit = {t, n, cls};
      };
      if (d.x > 0) wall_hit((RW / 2 - cam.x) / d.x, {-1, 0, 0}, wall);
      if (d.x < 0) wall_hit((-RW / 2 - cam.x) / d.x, {1, 0, 0}, wall);
      if (d.y > 0) wall_hit((RH - cam.y) / d.y, {0, -1, 0}, ceiling);
      if (d.y < 0) wall_hit(-cam.y / d.y, {0, 1, 0}, floor);
      if (d.z > 0) wall_hit((RD / 2 - cam.z) / d.z, {0, 0, -1}, wall);
      if (d.z < 0) wall_hit((-RD / 2 - cam.z) / d.z, {0, 0, 1}, wall);
      for (const Box& box : boxes) intersect_box(box, cam, d, hit);

      const std::size_t i = y * W + x;
      s.labels.labels[i] = hit.cls;
      double depth = hit.t;
      if (spec.depth_sigma > 0.0) depth = std::max(0.0, depth + rng.gaussian(spec.depth_sigma));
      s.depth.depth[i] = depth;
      const auto alb = spec.albedo.empty() ? builtin_albedo(spec.classes[hit.cls], hit.cls) : spec.albedo[hit.cls];
      const double shade = spec.ambient + spec.diffuse * std::max(0.0, -dot(hit.normal, light));
      for (std::size_t c = 0; c < 3; ++c) {
        double v = alb[c] * shade;
        if (spec.rgb_sigma > 0.0) v += rng.gaussian(spec.rgb_sigma);
        v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        s.rgb.at(c, y, x) = v;
      }
    }
  return s;
}

}  // namespace lstmcf
