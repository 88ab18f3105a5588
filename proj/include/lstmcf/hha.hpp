#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lstmcf/tensor.hpp"

namespace lstmcf {

struct Intrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
};

// Metric depth in meters, row-major, 0 marks a missing measurement.
struct DepthImage {
  std::size_t width = 0, height = 0;
  std::vector<double> depth;
  Intrinsics intrinsics;

  double at(std::size_t x, std::size_t y) const { return depth[y * width + x]; }
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

// Camera frame: x right, y down, z forward.
struct PointMap {
  std::size_t width = 0, height = 0;
  std::vector<Vec3> points;
  std::vector<std::uint8_t> valid;
};

struct NormalMap {
  std::size_t width = 0, height = 0;
  std::vector<Vec3> normals;
  std::vector<std::uint8_t> valid;
  // Plane-fit residual: smallest covariance eigenvalue over their sum. Near
  // zero on flat patches, large where the window straddles an edge.
  std::vector<double> curvature;
};

struct GravityEstimate {
  Vec3 direction{0.0, 1.0, 0.0};  // unit vector pointing down
  bool fallback = false;
  std::string diagnostic;
};

struct HhaOptions {
  double min_depth = 0.1;   // depth <= min_depth is invalid
  double max_depth = 20.0;  // larger depths are clamped
  int neighborhood = 5;     // k for the k x k plane fit
  int gravity_iterations = 5;
  double gravity_cone_deg = 45.0;
  double gravity_max_curvature = 0.005;  // windows above this are left out of the gravity average
  double floor_percentile = 5.0;
  double max_height = 3.0;  // meters above the floor reference mapped to 255
  bool quantize = true;     // round every channel to an integer code
};

// Channels, in order: disparity, height above floor, angle with gravity.
// values is 3 x height x width in [0, 255]; pixels without valid depth are 0
// in all three channels, and pixels with depth but no normal are 0 in the
// angle channel.
struct HhaImage {
  std::size_t width = 0, height = 0;
  std::vector<double> values;
  GravityEstimate gravity;
  double floor_height = 0.0;

  double at(std::size_t channel, std::size_t x, std::size_t y) const {
    return values[(channel * height + y) * width + x];
  }
};

// X = (u - cx) z / fx, Y = (v - cy) z / fy, Z = z, evaluated at pixel
// centers u = x, v = y. Depth is clamped to max_depth first.
PointMap backproject(const DepthImage& d, const HhaOptions& opt = {});

// Least-squares plane through the valid points of each k x k window; the
// normal is the smallest-eigenvalue eigenvector of the window covariance,
// flipped so that n . p <= 0 (facing the camera). Fewer than 3 valid points
// leaves the normal invalid.
NormalMap estimate_normals(const PointMap& points, const HhaOptions& opt = {});

// Starts at (0, 1, 0). Each iteration averages the normals within the cone
// around the estimate or its negation (each flipped onto the estimate's side)
// and renormalizes. Only normals with curvature <= gravity_max_curvature
// take part. Falls back to (0, 1, 0) if fewer than 1% of pixels have
// normals or no normal lies in the cone.
GravityEstimate estimate_gravity(const NormalMap& normals, const HhaOptions& opt = {});

// disparity: (1/z - 1/max) / (1/min - 1/max) * 255
// height:    (p . -g - h_floor) clamped to [0, max_height], scaled to 255;
//            h_floor is the floor_percentile (nearest rank) of p . -g
// angle:     angle(n, -g) in degrees, 0..180 scaled to 255
HhaImage encode_hha(const DepthImage& d, const HhaOptions& opt = {});

// Inverse maps of the three channel codes.
double depth_from_disparity_code(double code, const HhaOptions& opt = {});
double height_from_code(double code, const HhaOptions& opt = {});
double angle_from_code(double code);

// 3 x H x W tensor with the codes scaled to [0, 1].
Tensor hha_to_tensor(const HhaImage& hha);

}  // namespace lstmcf
