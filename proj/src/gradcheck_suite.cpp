#include "lstmcf/gradcheck_suite.hpp"

#include <chrono>
#include <functional>
#include <numeric>

#include "lstmcf/random.hpp"

namespace lstmcf {

namespace {

Tensor uniform(const Shape& s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return create(s, Uniform{lo, hi}, seed);
}

// Values spread on a 0.05 lattice in random order, so every pool window
// has a clear winner and no value sits near a relu kink.
Tensor separated(const Shape& s, std::uint64_t seed) {
  Tensor t(s);
  Rng rng(seed, 0x736570);
  const auto order = shuffled_indices(t.numel(), rng);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = 0.05 * (static_cast<double>(order[i]) - static_cast<double>(t.numel()) / 2.0) + 0.025;
  return t;
}

Tensor weighted_sum(const Tensor& y, std::uint64_t seed) { return sum(mul(y, uniform(y.shape(), seed, 0.5, 1.5))); }

BiScanLayer scan_layer(ScanDirection dir, std::size_t in, std::size_t d, std::uint64_t seed, bool conventional) {
  auto layer = BiScanLayer::create(dir, in, d, Uniform{-0.8, 0.8}, seed);
  layer.conventional_output_gate = conventional;
  return layer;
}

std::vector<Tensor> with_layer(std::vector<Tensor> ts, const BiScanLayer& layer) {
  for (const auto& [n, t] : layer.named("")) ts.push_back(t);
  return ts;
}

}  // namespace

ModelConfig smooth_gradcheck_model(ModelConfig cfg) {
  for (PathConfig* p : {&cfg.rgb, &cfg.depth}) {
    for (auto& b : p->blocks) {
      if (b.pool > 0) b.stride *= b.pool;
      b.pool = 0;
    }
    p->init = InitSpec::uniform(0.0, 0.02);
  }
  cfg.conv_bias = 0.1;
  cfg.new_conv_init = InitSpec::gaussian(5.0);
  cfg.lstm_init = InitSpec::uniform(-0.4, 0.4);
  return cfg;
}

std::vector<ComponentCheck> run_gradcheck_suite(const ModelConfig& cfg, const GradCheckSuiteOptions& opt) {
  const Precision saved = precision();
  set_precision(Precision::f64);
  const std::uint64_t s = opt.seed * 1000;
  std::vector<ComponentCheck> out;
  auto run = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> params,
                 GradCheckOptions go = {}) {
    for (auto& p : params) p.set_requires_grad(true);
    go.seed = opt.seed;
    const auto start = std::chrono::steady_clock::now();
    const auto r = grad_check(f, params, go);
    ComponentCheck c{name, r.max_rel_error, r.coords_checked,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), false};
    c.passed = c.max_rel_error < opt.threshold;
    out.push_back(c);
  };

  {
    Tensor a = uniform({3, 4}, s + 1), b = uniform({4, 5}, s + 2);
    run("matmul", [=] { return weighted_sum(matmul(a, b), s + 3); }, {a, b});
  }
  {
    Tensor a = uniform({2, 3, 3}, s + 4), b = uniform({2, 3, 3}, s + 5);
    run("elementwise", [=] { return weighted_sum(add(mul(a, b), sub(scale(a, 0.7), b)), s + 6); }, {a, b});
  }
  {
    Tensor x = separated({2, 4, 5}, s + 7);
    run("activations", [=] { return weighted_sum(add(add(relu(x), tanh(x)), sigmoid(x)), s + 8); }, {x});
  }
  {
    Tensor x = uniform({2, 7, 7}, s + 9), w = uniform({3, 2, 3, 3}, s + 10), b = uniform({3}, s + 11);
    run("conv2d", [=] {
      return add(weighted_sum(conv2d(x, w, b, {1, 1, 1}), s + 12),
                 weighted_sum(conv2d(x, w, b, {2, 2, 2}), s + 13));
    }, {x, w, b});
  }
  {
    Tensor x = separated({2, 6, 6}, s + 14);
    run("maxpool2d", [=] { return weighted_sum(maxpool2d(x, 2, 2), s + 15); }, {x});
  }
  {
    Tensor x = uniform({2, 3, 4}, s + 16);
    run("bilinear_resize", [=] { return weighted_sum(bilinear_resize(x, 7, 5), s + 17); }, {x});
  }
  {
    Tensor a = uniform({2, 3, 3}, s + 18), b = uniform({1, 3, 3}, s + 19);
    run("concat_slice_reshape", [=] {
      return weighted_sum(reshape(slice(concat({a, b}, 0), 1, 1, 3), {3, 6}), s + 20);
    }, {a, b});
  }
  {
    Tensor z = uniform({4, 3, 3}, s + 21, -2.0, 2.0);
    std::vector<std::uint8_t> labels(9);
    Rng rng(s + 22);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(4));
    labels[4] = 255;
    run("softmax_cross_entropy", [=] { return softmax_cross_entropy(z, labels); }, {z});
  }
  for (bool conventional : {false, true}) {
    const auto p = LstmCellParams::create(3, 2, Uniform{-0.8, 0.8}, s + 23);
    Tensor f = uniform({3}, s + 24), h = uniform({2}, s + 25), c = uniform({2}, s + 26);
    std::vector<Tensor> params{f, h, c};
    for (const auto& [n, t] : p.named("")) params.push_back(t);
    run(conventional ? "lstm_step_conventional" : "lstm_step", [=] {
      const auto st = lstm_step(p, f, h, c, conventional);
      return add(weighted_sum(st.h, s + 27), weighted_sum(st.c, s + 28));
    }, params);
  }
  for (auto dir : {ScanDirection::vertical, ScanDirection::horizontal}) {
    const auto layer = scan_layer(dir, 3, 2, s + 29, false);
    Tensor x = uniform({3, 4, 4}, s + 30);
    run(dir == ScanDirection::vertical ? "scan_vertical" : "scan_horizontal",
        [=] { return weighted_sum(scan_bidirectional(layer, x), s + 31); }, with_layer({x}, layer));
  }
  {
    const auto layer = scan_layer(ScanDirection::horizontal, 4, 2, s + 32, false);
    Tensor a = uniform({2, 3, 3}, s + 33), b = uniform({2, 3, 3}, s + 34);
    run("fuse_contexts", [=] { return weighted_sum(fuse_contexts(layer, a, b), s + 35); }, with_layer({a, b}, layer));
  }
  if (opt.inject_fault) {
    Tensor x = uniform({4}, s + 36, 0.5, 1.5);
    run("fault_injection", [=] {
      Tensor y(x.shape());
      for (std::size_t i = 0; i < x.numel(); ++i) y.data()[i] = x.data()[i] * x.data()[i];
      if (active_tape())
        record_op("wrong_square", {x}, y, [x, y] {
          for (std::size_t i = 0; i < x.numel(); ++i) x.grad_mut()[i] += 3.0 * x.data()[i] * y.grad()[i];
        });
      return sum(y);
    }, {x});
  }
  {
    const ModelConfig mc = smooth_gradcheck_model(cfg);
    const auto model = LstmCfModel::create(mc, opt.seed);
    Tensor rgb = uniform({3, mc.input_size, mc.input_size}, s + 37, 0.0, 1.0);
    Tensor hha = uniform({3, mc.input_size, mc.input_size}, s + 38, 0.0, 1.0);
    std::vector<std::uint8_t> labels(mc.grid * mc.grid);
    Rng rng(s + 39);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(mc.classes));
    std::vector<Tensor> params;
    for (const auto& p : model.parameters()) params.push_back(p.tensor);
    run("end_to_end", [=] { return softmax_cross_entropy(forward(model, rgb, hha), labels); }, params,
        GradCheckOptions{1e-4, opt.model_coords, 0});
  }
  set_precision(saved);
  return out;
}

}  // namespace lstmcf
