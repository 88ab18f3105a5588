#include "lstmcf/hha.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "lstmcf/error.hpp"

namespace lstmcf {

namespace {

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(dot(v, v));
  return {v.x / n, v.y / n, v.z / n};
}

double code(double v, bool quantize) {
  v = std::clamp(v, 0.0, 255.0);
  return quantize ? std::round(v) : v;
}

}  // namespace

PointMap backproject(const DepthImage& d, const HhaOptions& opt) {
  const Intrinsics& k = d.intrinsics;
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) throw ShapeError("backproject: focal lengths must be positive");
  if (d.depth.size() != d.width * d.height) throw ShapeError("backproject: depth buffer does not match size");
  PointMap out;
  out.width = d.width;
  out.height = d.height;
  out.points.resize(d.depth.size());
  out.valid.assign(d.depth.size(), 0);
  for (std::size_t y = 0; y < d.height; ++y)
    for (std::size_t x = 0; x < d.width; ++x) {
      const std::size_t i = y * d.width + x;
      double z = d.depth[i];
      if (!std::isfinite(z) || z <= opt.min_depth) continue;
      z = std::min(z, opt.max_depth);
      out.points[i] = {(static_cast<double>(x) - k.cx) * z / k.fx, (static_cast<double>(y) - k.cy) * z / k.fy, z};
      out.valid[i] = 1;
    }
  return out;
}

NormalMap estimate_normals(const PointMap& pts, const HhaOptions& opt) {
  if (opt.neighborhood < 1) throw ShapeError("estimate_normals: neighborhood must be >= 1");
  NormalMap out;
  out.width = pts.width;
  out.height = pts.height;
  out.normals.resize(pts.points.size());
  out.valid.assign(pts.points.size(), 0);
  out.curvature.assign(pts.points.size(), 0.0);
  const long r = opt.neighborhood / 2;
  const long W = static_cast<long>(pts.width), H = static_cast<long>(pts.height);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      const std::size_t i = static_cast<std::size_t>(y * W + x);
      if (!pts.valid[i]) continue;
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      std::size_t n = 0;
      for (long v = std::max(0L, y - r); v <= std::min(H - 1, y + r); ++v)
        for (long u = std::max(0L, x - r); u <= std::min(W - 1, x + r); ++u) {
          const std::size_t j = static_cast<std::size_t>(v * W + u);
          if (!pts.valid[j]) continue;
          mean += Eigen::Vector3d(pts.points[j].x, pts.points[j].y, pts.points[j].z);
          ++n;
        }
      if (n < 3) continue;
      mean /= static_cast<double>(n);
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      for (long v = std::max(0L, y - r); v <= std::min(H - 1, y + r); ++v)
        for (long u = std::max(0L, x - r); u <= std::min(W - 1, x + r); ++u) {
          const std::size_t j = static_cast<std::size_t>(v * W + u);
          if (!pts.valid[j]) continue;
          const Eigen::Vector3d q = Eigen::Vector3d(pts.points[j].x, pts.points[j].y, pts.points[j].z) - mean;
          cov += q * q.transpose();
        }
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
      // Collinear points leave two near-zero eigenvalues and no plane.
      if (eig.eigenvalues()(1) <= 1e-12 * std::max(1.0, eig.eigenvalues()(2))) continue;
      Eigen::Vector3d nrm = eig.eigenvectors().col(0).normalized();
      const Vec3& p = pts.points[i];
      if (nrm.x() * p.x + nrm.y() * p.y + nrm.z() * p.z > 0.0) nrm = -nrm;
      out.normals[i] = {nrm.x(), nrm.y(), nrm.z()};
      out.valid[i] = 1;
      out.curvature[i] = std::max(0.0, eig.eigenvalues()(0)) / eig.eigenvalues().sum();
    }
  return out;
}

GravityEstimate estimate_gravity(const NormalMap& normals, const HhaOptions& opt) {
  GravityEstimate est;
  const std::size_t total = normals.normals.size();
  const auto valid = static_cast<std::size_t>(std::count(normals.valid.begin(), normals.valid.end(), 1));
  if (total == 0 || valid * 100 < total) {
    est.fallback = true;
    est.diagnostic = "fewer than 1% valid normals; using camera-down gravity";
    return est;
  }
  const double cos_cone = std::cos(opt.gravity_cone_deg * std::numbers::pi / 180.0);
  Vec3 g = est.direction;
  for (int it = 0; it < opt.gravity_iterations; ++it) {
    Vec3 acc;
    std::size_t used = 0;
    for (std::size_t i = 0; i < total; ++i) {
      if (!normals.valid[i]) continue;
      if (!normals.curvature.empty() && normals.curvature[i] > opt.gravity_max_curvature) continue;
      const Vec3& n = normals.normals[i];
      const double c = dot(n, g);
      if (std::abs(c) <= cos_cone) continue;
      const double s = c < 0.0 ? -1.0 : 1.0;
      acc.x += s * n.x;
      acc.y += s * n.y;
      acc.z += s * n.z;
      ++used;
    }
    if (used == 0 || dot(acc, acc) == 0.0) {
      est.direction = {0.0, 1.0, 0.0};
      est.fallback = true;
      est.diagnostic = "no normals within the gravity cone at iteration " + std::to_string(it) +
                       "; using camera-down gravity";
      return est;
    }
    g = normalized(acc);
  }
  est.direction = g;
  return est;
}

HhaImage encode_hha(const DepthImage& d, const HhaOptions& opt) {
  const PointMap pts = backproject(d, opt);
  const NormalMap nm = estimate_normals(pts, opt);
  HhaImage out;
  out.width = d.width;
  out.height = d.height;
  out.gravity = estimate_gravity(nm, opt);
  const std::size_t P = d.width * d.height;
  out.values.assign(3 * P, 0.0);
  const Vec3 up{-out.gravity.direction.x, -out.gravity.direction.y, -out.gravity.direction.z};

  std::vector<double> heights;
  for (std::size_t i = 0; i < P; ++i)
    if (pts.valid[i]) heights.push_back(dot(pts.points[i], up));
  if (heights.empty()) return out;
  std::vector<double> sorted = heights;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::floor(opt.floor_percentile / 100.0 * static_cast<double>(sorted.size() - 1)));
  out.floor_height = sorted[rank];

  const double inv_lo = 1.0 / opt.max_depth, inv_hi = 1.0 / opt.min_depth;
  for (std::size_t i = 0; i < P; ++i) {
    if (!pts.valid[i]) continue;
    const double z = pts.points[i].z;
    out.values[i] = code((1.0 / z - inv_lo) / (inv_hi - inv_lo) * 255.0, opt.quantize);
    const double h = std::clamp(dot(pts.points[i], up) - out.floor_height, 0.0, opt.max_height);
    out.values[P + i] = code(h / opt.max_height * 255.0, opt.quantize);
    if (nm.valid[i]) {
      const double c = std::clamp(dot(nm.normals[i], up), -1.0, 1.0);
      out.values[2 * P + i] = code(std::acos(c) * 180.0 / std::numbers::pi / 180.0 * 255.0, opt.quantize);
    }
  }
  return out;
}

double depth_from_disparity_code(double c, const HhaOptions& opt) {
  const double inv_lo = 1.0 / opt.max_depth, inv_hi = 1.0 / opt.min_depth;
  return 1.0 / (c / 255.0 * (inv_hi - inv_lo) + inv_lo);
}

double height_from_code(double c, const HhaOptions& opt) { return c / 255.0 * opt.max_height; }

double angle_from_code(double c) { return c / 255.0 * 180.0; }

Tensor hha_to_tensor(const HhaImage& hha) {
  std::vector<double> v(hha.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = hha.values[i] / 255.0;
  return Tensor(Shape{3, hha.height, hha.width}, std::move(v));
}

}  // namespace lstmcf
