#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lstmcf/tensor.hpp"

namespace lstmcf {

// ---- creation --------------------------------------------------------------

struct Zeros {};
struct Constant {
  double value = 0.0;
};
struct Gaussian {
  double stddev = 0.01;
};
struct Uniform {
  double lo = -0.01, hi = 0.01;
};
using Init = std::variant<Zeros, Constant, Gaussian, Uniform>;

// Deterministic for a fixed seed; draws come from lstmcf::Rng.
Tensor create(const Shape& shape, const Init& init, std::uint64_t seed = 0);

// ---- differentiable ops ------------------------------------------------------
// Every op records onto the active tape when at least one input requires
// a gradient; otherwise it only computes.

Tensor matmul(const Tensor& a, const Tensor& b);

enum class Elementwise { add, sub, mul };
Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::mul, a, b); }
Tensor scale(const Tensor& a, double k);

enum class Activation { sigmoid, tanh, relu };
Tensor activation(Activation op, const Tensor& x);
inline Tensor sigmoid(const Tensor& x) { return activation(Activation::sigmoid, x); }
inline Tensor tanh(const Tensor& x) { return activation(Activation::tanh, x); }
inline Tensor relu(const Tensor& x) { return activation(Activation::relu, x); }

struct Conv2dOptions {
  std::size_t stride = 1, padding = 0, dilation = 1;
};
// x: C_in x H x W, weight: C_out x C_in x kh x kw, bias: C_out (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opt = {});

// Max over window x window patches; ties route the gradient to the first
// maximum in row-major scan order.
Tensor maxpool2d(const Tensor& x, std::size_t window, std::size_t stride);

// Align-corners-false bilinear resampling of a C x H x W map. Output pixel
// (oy, ox) samples source coordinate sy = (oy + 0.5) * H / H' - 0.5 (same for
// x), clamped to [0, H - 1]; the value interpolates the four surrounding
// pixels with weights (1 - fy, fy) x (1 - fx, fx).
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);

struct CrossEntropyStats {
  std::size_t counted = 0;
  std::size_t ignored = 0;
  bool all_ignored = false;
};

// Mean over non-ignored pixels of -log softmax(logits)[label]. logits is
// K x H x W, labels has H*W entries in [0, K) or ignore_index. When every
// pixel is ignored the loss is 0 with zero gradient and stats->all_ignored set.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels,
                             std::uint8_t ignore_index = 255, CrossEntropyStats* stats = nullptr);

// Escape hatch for ops defined outside this file (and for test fixtures):
// records `output` with a caller-provided backward closure.
void record_op(std::string name, std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn backward);

// Records f() on a fresh tape, runs backward from its scalar result, and
// returns the loss value. Gradients accumulate into every leaf that
// requires them.
double value_and_grad(const std::function<Tensor()>& f);

// ---- gradient checking -------------------------------------------------------

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every coordinate; otherwise at most this many per tensor,
  // chosen with a seeded Rng.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_tensor = 0, worst_index = 0;
  double worst_analytic = 0.0, worst_numeric = 0.0;
};

// max over coordinates of |analytic - numeric| / max(1e-12, |analytic| + |numeric|)
// with central differences. f must be scalar-valued and deterministic; two
// evaluations at the same point that differ bitwise raise NumericError.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           const GradCheckOptions& opt = {});
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5);

}  // namespace lstmcf
