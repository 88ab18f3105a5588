#include "lstmcf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "lstmcf/error.hpp"
#include "lstmcf/kernels.hpp"
#include "lstmcf/random.hpp"

namespace lstmcf {

namespace {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!active_tape()) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

void round_output(Tensor& t) {
  if (precision() == Precision::f64) return;
  for (double& v : t.data()) v = round_to_precision(v, Precision::f32);
}

void require_finite(const Tensor& x, const char* op) {
  for (double v : x.data())
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
}

void accumulate(const Tensor& dst, std::span<const double> src) {
  auto g = dst.grad_mut();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
}

}  // namespace

void record_op(std::string name, std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn backward) {
  Tape* tape = active_tape();
  if (!tape) return;
  output.set_requires_grad(true);
  tape->record(std::move(name), std::move(inputs), output, std::move(backward));
}

Tensor create(const Shape& shape, const Init& init, std::uint64_t seed) {
  Tensor t(shape, 0.0);
  Rng rng(seed);
  std::visit(
      [&](const auto& spec) {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, Zeros>) {
        } else if constexpr (std::is_same_v<T, Constant>) {
          std::fill(t.data().begin(), t.data().end(), spec.value);
        } else if constexpr (std::is_same_v<T, Gaussian>) {
          if (!(spec.stddev > 0.0)) throw ShapeError("gaussian init requires stddev > 0");
          for (double& v : t.data()) v = rng.gaussian(spec.stddev);
        } else {
          if (!(spec.lo < spec.hi)) throw ShapeError("uniform init requires lo < hi");
          for (double& v : t.data()) v = rng.uniform(spec.lo, spec.hi);
        }
      },
      init);
  round_output(t);
  return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  kernels::gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data().data(), false);
  round_output(out);
  if (any_requires_grad({&a, &b})) {
    record_op("matmul", {a, b}, out, [a, b, out, m, k, n]() mutable {
      const double* dc = out.grad().data();
      if (a.requires_grad()) kernels::gemm(false, true, m, k, n, dc, b.data().data(), a.grad_mut().data(), true);
      if (b.requires_grad()) kernels::gemm(true, false, k, n, m, a.data().data(), dc, b.grad_mut().data(), true);
    });
  }
  return out;
}

Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("elementwise: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    switch (op) {
      case Elementwise::add: o[i] = x[i] + y[i]; break;
      case Elementwise::sub: o[i] = x[i] - y[i]; break;
      case Elementwise::mul: o[i] = x[i] * y[i]; break;
    }
  }
  round_output(out);
  if (any_requires_grad({&a, &b})) {
    record_op("elementwise", {a, b}, out, [op, a, b, out]() mutable {
      auto g = out.grad();
      const double sign = op == Elementwise::sub ? -1.0 : 1.0;
      if (a.requires_grad()) {
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += op == Elementwise::mul ? g[i] * b.data()[i] : g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[i] += op == Elementwise::mul ? g[i] * a.data()[i] : sign * g[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double k) {
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = k * x[i];
  round_output(out);
  if (any_requires_grad({&a})) {
    record_op("scale", {a}, out, [a, out, k]() mutable {
      auto g = out.grad();
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += k * g[i];
    });
  }
  return out;
}

Tensor activation(Activation op, const Tensor& x) {
  require_finite(x, "activation");
  Tensor out(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    switch (op) {
      case Activation::sigmoid: o[i] = 1.0 / (1.0 + std::exp(-in[i])); break;
      case Activation::tanh: o[i] = std::tanh(in[i]); break;
      case Activation::relu: o[i] = in[i] > 0.0 ? in[i] : 0.0; break;
    }
  }
  round_output(out);
  if (any_requires_grad({&x})) {
    record_op("activation", {x}, out, [op, x, out]() mutable {
      auto g = out.grad();
      auto y = out.data();
      auto in = x.data();
      auto gx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (op) {
          case Activation::sigmoid: gx[i] += g[i] * y[i] * (1.0 - y[i]); break;
          case Activation::tanh: gx[i] += g[i] * (1.0 - y[i] * y[i]); break;
          case Activation::relu: gx[i] += in[i] > 0.0 ? g[i] : 0.0; break;
        }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opt) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(1) != x.dim(0))
    throw ShapeError("conv2d: input " + shape_string(x.shape()) + " incompatible with weight " +
                     shape_string(weight.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0)))
    throw ShapeError("conv2d: bias shape " + shape_string(bias.shape()));
  if (opt.stride < 1 || opt.dilation < 1) throw ShapeError("conv2d: stride and dilation must be >= 1");
  kernels::ConvGeometry g;
  g.in_channels = x.dim(0);
  g.in_h = x.dim(1);
  g.in_w = x.dim(2);
  g.out_channels = weight.dim(0);
  g.kernel_h = weight.dim(2);
  g.kernel_w = weight.dim(3);
  g.stride = opt.stride;
  g.pad = opt.padding;
  g.dilation = opt.dilation;
  if (g.out_h_signed() < 1 || g.out_w_signed() < 1)
    throw ShapeError("conv2d: kernel does not fit padded input " + shape_string(x.shape()));
  Tensor out(Shape{g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, x.data().data(), weight.data().data(), bias.defined() ? bias.data().data() : nullptr,
                          out.data().data());
  round_output(out);
  if (any_requires_grad({&x, &weight, &bias})) {
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    record_op("conv2d", inputs, out, [g, x, weight, bias, out]() mutable {
      double* dx = x.requires_grad() ? x.grad_mut().data() : nullptr;
      double* dw = weight.requires_grad() ? weight.grad_mut().data() : nullptr;
      double* db = bias.defined() && bias.requires_grad() ? bias.grad_mut().data() : nullptr;
      kernels::conv2d_backward(g, x.data().data(), weight.data().data(), out.grad().data(), dx, dw, db);
    });
  }
  return out;
}

Tensor maxpool2d(const Tensor& x, std::size_t window, std::size_t stride) {
  if (x.rank() != 3) throw ShapeError("maxpool2d: expected C x H x W input");
  if (window < 1 || stride < 1) throw ShapeError("maxpool2d: window and stride must be >= 1");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (window > H || window > W)
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " larger than input " + shape_string(x.shape()));
  const std::size_t oh = (H - window) / stride + 1, ow = (W - window) / stride + 1;
  Tensor out(Shape{C, oh, ow});
  std::vector<std::size_t> argmax(C * oh * ow);
  auto in = x.data();
  auto o = out.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (c * H + oy * stride) * W + ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky)
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = (c * H + oy * stride + ky) * W + ox * stride + kx;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t oi = (c * oh + oy) * ow + ox;
        o[oi] = in[best];
        argmax[oi] = best;
      }
  if (any_requires_grad({&x})) {
    record_op("maxpool2d", {x}, out, [x, out, argmax = std::move(argmax)]() mutable {
      auto g = out.grad();
      auto gx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
    });
  }
  return out;
}

namespace {
struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const std::size_t lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}
}  // namespace

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 3) throw ShapeError("bilinear_resize: expected C x H x W input");
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output size must be >= 1");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  auto ty = bilinear_taps(H, out_h);
  auto tx = bilinear_taps(W, out_w);
  Tensor out(Shape{C, out_h, out_w});
  auto in = x.data();
  auto o = out.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Tap& a = ty[oy];
        const Tap& b = tx[ox];
        const double* plane = in.data() + c * H * W;
        const double top = plane[a.lo * W + b.lo] * (1.0 - b.frac) + plane[a.lo * W + b.hi] * b.frac;
        const double bot = plane[a.hi * W + b.lo] * (1.0 - b.frac) + plane[a.hi * W + b.hi] * b.frac;
        o[(c * out_h + oy) * out_w + ox] = top * (1.0 - a.frac) + bot * a.frac;
      }
  round_output(out);
  if (any_requires_grad({&x})) {
    record_op("bilinear_resize", {x}, out, [x, out, ty, tx, C, H, W, out_h, out_w]() mutable {
      auto g = out.grad();
      auto gx = x.grad_mut();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t oy = 0; oy < out_h; ++oy)
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const Tap& a = ty[oy];
            const Tap& b = tx[ox];
            const double v = g[(c * out_h + oy) * out_w + ox];
            double* plane = gx.data() + c * H * W;
            plane[a.lo * W + b.lo] += v * (1.0 - a.frac) * (1.0 - b.frac);
            plane[a.lo * W + b.hi] += v * (1.0 - a.frac) * b.frac;
            plane[a.hi * W + b.lo] += v * a.frac * (1.0 - b.frac);
            plane[a.hi * W + b.hi] += v * a.frac * b.frac;
          }
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: empty input list");
  if (parts.size() == 1) return parts.front();
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape shape = first;
  shape[axis] = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d)
      if (d != axis && p.dim(d) != first[d])
        throw ShapeError("concat: shape mismatch " + shape_string(p.shape()) + " vs " + shape_string(first));
    shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  Tensor out(shape);
  auto o = out.data();
  const std::size_t out_chunk = shape[axis] * inner;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.dim(axis) * inner;
    auto in = p.data();
    for (std::size_t r = 0; r < outer; ++r)
      std::copy_n(in.begin() + static_cast<long>(r * chunk), chunk, o.begin() + static_cast<long>(r * out_chunk + offset));
    offset += chunk;
  }
  bool needs = false;
  if (active_tape())
    for (const Tensor& p : parts) needs = needs || p.requires_grad();
  if (needs) {
    record_op("concat", parts, out, [parts, out, offsets, outer, inner, out_chunk, axis]() mutable {
      auto g = out.grad();
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!parts[i].requires_grad()) continue;
        const std::size_t chunk = parts[i].dim(axis) * inner;
        auto gp = parts[i].grad_mut();
        for (std::size_t r = 0; r < outer; ++r)
          for (std::size_t j = 0; j < chunk; ++j) gp[r * chunk + j] += g[r * out_chunk + offsets[i] + j];
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin >= end || end > x.dim(axis))
    throw ShapeError("slice: invalid range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of " + shape_string(x.shape()));
  Shape shape = x.shape();
  shape[axis] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t in_chunk = x.dim(axis) * inner, out_chunk = shape[axis] * inner, start = begin * inner;
  Tensor out(shape);
  auto in = x.data();
  auto o = out.data();
  for (std::size_t r = 0; r < outer; ++r)
    std::copy_n(in.begin() + static_cast<long>(r * in_chunk + start), out_chunk, o.begin() + static_cast<long>(r * out_chunk));
  if (any_requires_grad({&x})) {
    record_op("slice", {x}, out, [x, out, outer, in_chunk, out_chunk, start]() mutable {
      auto g = out.grad();
      auto gx = x.grad_mut();
      for (std::size_t r = 0; r < outer; ++r)
        for (std::size_t j = 0; j < out_chunk; ++j) gx[r * in_chunk + start + j] += g[r * out_chunk + j];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (any_requires_grad({&x})) {
    record_op("reshape", {x}, out, [x, out]() mutable { accumulate(x, out.grad()); });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  round_output(out);
  if (any_requires_grad({&x})) {
    record_op("sum", {x}, out, [x, out]() mutable {
      const double g = out.grad()[0];
      for (double& v : x.grad_mut()) v += g;
    });
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels, std::uint8_t ignore_index,
                             CrossEntropyStats* stats) {
  if (logits.rank() != 3) throw ShapeError("softmax_cross_entropy: expected K x H x W logits");
  const std::size_t K = logits.dim(0), P = logits.dim(1) * logits.dim(2);
  if (labels.size() != P)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(P) +
                     " pixels");
  auto z = logits.data();
  std::vector<double> prob(K * P, 0.0);
  std::size_t counted = 0;
  double total = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    const std::uint8_t label = labels[p];
    if (label == ignore_index) continue;
    if (label >= K) throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) + " >= classes");
    double mx = z[p];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, z[k * P + p]);
    double denom = 0.0;
    for (std::size_t k = 0; k < K; ++k) denom += std::exp(z[k * P + p] - mx);
    for (std::size_t k = 0; k < K; ++k) prob[k * P + p] = std::exp(z[k * P + p] - mx) / denom;
    total += -(z[label * P + p] - mx - std::log(denom));
    ++counted;
  }
  if (stats) {
    stats->counted = counted;
    stats->ignored = P - counted;
    stats->all_ignored = counted == 0;
  }
  Tensor out = Tensor::scalar(counted ? total / static_cast<double>(counted) : 0.0);
  round_output(out);
  if (counted && any_requires_grad({&logits})) {
    std::vector<std::uint8_t> saved(labels.begin(), labels.end());
    record_op("softmax_cross_entropy", {logits}, out,
              [logits, out, prob = std::move(prob), saved = std::move(saved), K, P, counted, ignore_index]() mutable {
                const double g = out.grad()[0] / static_cast<double>(counted);
                auto gz = logits.grad_mut();
                for (std::size_t p = 0; p < P; ++p) {
                  if (saved[p] == ignore_index) continue;
                  for (std::size_t k = 0; k < K; ++k)
                    gz[k * P + p] += g * (prob[k * P + p] - (k == saved[p] ? 1.0 : 0.0));
                }
              });
  }
  return out;
}

double value_and_grad(const std::function<Tensor()>& f) {
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = f();
  }
  tape.backward(loss);
  return loss.item();
}

GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           const GradCheckOptions& opt) {
  auto evaluate = [&]() {
    NoGradScope off;
    Tensor v = f();
    if (v.numel() != 1) throw ShapeError("grad_check: function must be scalar-valued");
    return v.item();
  };
  const double first = evaluate();
  const double second = evaluate();
  if (std::memcmp(&first, &second, sizeof(double)) != 0)
    throw NumericError("grad_check: function is not deterministic");

  std::vector<bool> previous;
  for (Tensor& p : params) {
    previous.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.zero_grad();
  }
  value_and_grad(f);

  GradCheckResult result;
  Rng rng(opt.seed, 0x6772616463686bULL);
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    Tensor& p = params[ti];
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    std::vector<std::size_t> coords;
    if (opt.max_coords == 0 || opt.max_coords >= p.numel()) {
      coords.resize(p.numel());
      std::iota(coords.begin(), coords.end(), std::size_t{0});
    } else {
      auto perm = shuffled_indices(p.numel(), rng);
      coords.assign(perm.begin(), perm.begin() + static_cast<long>(opt.max_coords));
    }
    auto values = p.data();
    for (std::size_t idx : coords) {
      const double saved = values[idx];
      values[idx] = saved + opt.eps;
      const double fp = evaluate();
      values[idx] = saved - opt.eps;
      const double fm = evaluate();
      values[idx] = saved;
      const double numeric = (fp - fm) / (2.0 * opt.eps);
      const double a = analytic[idx];
      const double rel = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      ++result.coords_checked;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        result.worst_tensor = ti;
        result.worst_index = idx;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].zero_grad();
    params[i].set_requires_grad(previous[i]);
  }
  return result;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  GradCheckOptions opt;
  opt.eps = eps;
  return grad_check([&]() { return f(x); }, {x}, opt).max_rel_error;
}

}  // namespace lstmcf
