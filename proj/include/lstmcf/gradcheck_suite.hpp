#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lstmcf/network.hpp"

namespace lstmcf {

struct ComponentCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
  double seconds = 0.0;
  bool passed = false;
};

struct GradCheckSuiteOptions {
  double threshold = 1e-4;
  std::uint64_t seed = 0;
  std::size_t model_coords = 4;  // sampled coordinates per model tensor
  bool inject_fault = false;     // adds a component whose backward is wrong on purpose
};

// The model with every max pool folded into its conv stride, non-negative
// conv weights with a positive bias, and weights large enough that no
// gradient coordinate sits at the finite-difference noise floor. Shapes
// and the variant are unchanged.
ModelConfig smooth_gradcheck_model(ModelConfig cfg);

// One entry per op family plus "end_to_end" (the smoothed model). Runs in
// 64-bit precision and restores the caller's precision afterwards.
std::vector<ComponentCheck> run_gradcheck_suite(const ModelConfig& cfg, const GradCheckSuiteOptions& opt = {});

}  // namespace lstmcf
