#include "lstmcf/recurrent.hpp"

#include <cmath>
#include <memory>

#include "lstmcf/error.hpp"
#include "lstmcf/kernels.hpp"
#include "lstmcf/random.hpp"

namespace lstmcf {

LstmCellParams LstmCellParams::create(std::size_t input, std::size_t hidden, const Init& init,
                                      std::uint64_t seed) {
  if (input == 0 || hidden == 0) throw ShapeError("LSTM cell needs input and hidden sizes >= 1");
  LstmCellParams p;
  std::uint64_t s = seed;
  auto next = [&]() { return splitmix64(s++); };
  p.w_if = lstmcf::create({hidden, input}, init, next());
  p.w_ff = lstmcf::create({hidden, input}, init, next());
  p.w_of = lstmcf::create({hidden, input}, init, next());
  p.w_cf = lstmcf::create({hidden, input}, init, next());
  p.w_ih = lstmcf::create({hidden, hidden}, init, next());
  p.w_fh = lstmcf::create({hidden, hidden}, init, next());
  p.w_oh = lstmcf::create({hidden, hidden}, init, next());
  p.w_ch = lstmcf::create({hidden, hidden}, init, next());
  p.b_i = lstmcf::create({hidden}, init, next());
  p.b_f = lstmcf::create({hidden}, init, next());
  p.b_o = lstmcf::create({hidden}, init, next());
  p.b_c = lstmcf::create({hidden}, init, next());
  return p;
}

LstmCellParams LstmCellParams::zeros(std::size_t input, std::size_t hidden) {
  return create(input, hidden, Zeros{}, 0);
}

std::vector<NamedTensor> LstmCellParams::named(const std::string& prefix) const {
  return {{prefix + "W_if", w_if}, {prefix + "W_ff", w_ff}, {prefix + "W_of", w_of}, {prefix + "W_cf", w_cf},
          {prefix + "W_ih", w_ih}, {prefix + "W_fh", w_fh}, {prefix + "W_oh", w_oh}, {prefix + "W_ch", w_ch},
          {prefix + "b_i", b_i},   {prefix + "b_f", b_f},   {prefix + "b_o", b_o},   {prefix + "b_c", b_c}};
}

void LstmCellParams::validate() const {
  const std::size_t c = input_size(), d = hidden_size();
  for (const Tensor* w : {&w_if, &w_ff, &w_of, &w_cf})
    if (w->shape() != Shape{d, c}) throw ShapeError("LSTM input projection must be " + shape_string({d, c}));
  for (const Tensor* w : {&w_ih, &w_fh, &w_oh, &w_ch})
    if (w->shape() != Shape{d, d}) throw ShapeError("LSTM state projection must be " + shape_string({d, d}));
  for (const Tensor* b : {&b_i, &b_f, &b_o, &b_c})
    if (b->shape() != Shape{d}) throw ShapeError("LSTM bias must be " + shape_string({d}));
}

LstmState lstm_step(const LstmCellParams& p, const Tensor& f, const Tensor& h_prev, const Tensor& c_prev,
                    bool conventional_output_gate) {
  p.validate();
  const std::size_t c = p.input_size(), d = p.hidden_size();
  if (f.numel() != c || h_prev.numel() != d || c_prev.numel() != d)
    throw ShapeError("lstm_step: expected input " + std::to_string(c) + " and state " + std::to_string(d));
  const Tensor fx = reshape(f, {c, 1});
  const Tensor hx = reshape(h_prev, {d, 1});
  auto preact = [&](const Tensor& wf, const Tensor& wh, const Tensor& b) {
    return add(add(matmul(wf, fx), matmul(wh, hx)), reshape(b, {d, 1}));
  };
  const Tensor gate_i = sigmoid(preact(p.w_if, p.w_ih, p.b_i));
  const Tensor gate_f = sigmoid(preact(p.w_ff, p.w_fh, p.b_f));
  const Tensor gate_o = sigmoid(preact(p.w_of, p.w_oh, p.b_o));
  const Tensor gate_c = tanh(preact(p.w_cf, p.w_ch, p.b_c));
  const Tensor cell = add(mul(gate_f, reshape(c_prev, {d, 1})), mul(gate_i, gate_c));
  const Tensor hidden = conventional_output_gate ? mul(gate_o, tanh(cell)) : tanh(mul(gate_o, cell));
  return {reshape(hidden, {d}), reshape(cell, {d})};
}

BiScanLayer BiScanLayer::create(ScanDirection dir, std::size_t input, std::size_t hidden, const Init& init,
                                std::uint64_t seed) {
  BiScanLayer layer;
  layer.direction = dir;
  layer.forward = LstmCellParams::create(input, hidden, init, splitmix64(seed));
  layer.backward = LstmCellParams::create(input, hidden, init, splitmix64(seed + 1));
  return layer;
}

std::vector<NamedTensor> BiScanLayer::named(const std::string& prefix) const {
  auto out = forward.named(prefix + "fwd.");
  auto bwd = backward.named(prefix + "bwd.");
  out.insert(out.end(), bwd.begin(), bwd.end());
  return out;
}

namespace {

kernels::LstmPacked pack(const LstmCellParams& p) {
  const std::size_t c = p.input_size(), d = p.hidden_size();
  kernels::LstmPacked k(c, d);
  const Tensor* wx[4] = {&p.w_if, &p.w_ff, &p.w_of, &p.w_cf};
  const Tensor* wh[4] = {&p.w_ih, &p.w_fh, &p.w_oh, &p.w_ch};
  const Tensor* b[4] = {&p.b_i, &p.b_f, &p.b_o, &p.b_c};
  for (std::size_t gate = 0; gate < 4; ++gate) {
    std::copy(wx[gate]->data().begin(), wx[gate]->data().end(), k.wx.begin() + static_cast<long>(gate * d * c));
    std::copy(wh[gate]->data().begin(), wh[gate]->data().end(), k.wh.begin() + static_cast<long>(gate * d * d));
    std::copy(b[gate]->data().begin(), b[gate]->data().end(), k.b.begin() + static_cast<long>(gate * d));
  }
  return k;
}

void unpack_grad(const kernels::LstmPacked& g, const LstmCellParams& p) {
  const std::size_t c = p.input_size(), d = p.hidden_size();
  const Tensor* wx[4] = {&p.w_if, &p.w_ff, &p.w_of, &p.w_cf};
  const Tensor* wh[4] = {&p.w_ih, &p.w_fh, &p.w_oh, &p.w_ch};
  const Tensor* b[4] = {&p.b_i, &p.b_f, &p.b_o, &p.b_c};
  for (std::size_t gate = 0; gate < 4; ++gate) {
    if (wx[gate]->requires_grad()) {
      auto dst = wx[gate]->grad_mut();
      for (std::size_t i = 0; i < d * c; ++i) dst[i] += g.wx[gate * d * c + i];
    }
    if (wh[gate]->requires_grad()) {
      auto dst = wh[gate]->grad_mut();
      for (std::size_t i = 0; i < d * d; ++i) dst[i] += g.wh[gate * d * d + i];
    }
    if (b[gate]->requires_grad()) {
      auto dst = b[gate]->grad_mut();
      for (std::size_t i = 0; i < d; ++i) dst[i] += g.b[gate * d + i];
    }
  }
}

void check_scan_input(const BiScanLayer& layer, const Tensor& features) {
  layer.forward.validate();
  layer.backward.validate();
  if (layer.forward.input_size() != layer.backward.input_size() ||
      layer.forward.hidden_size() != layer.backward.hidden_size())
    throw ShapeError("scan: forward and backward cells differ in size");
  if (features.rank() != 3 || features.dim(0) != layer.input_size())
    throw ShapeError("scan: features " + shape_string(features.shape()) + " do not match layer input width " +
                     std::to_string(layer.input_size()));
}

}  // namespace

Tensor scan_bidirectional(const BiScanLayer& layer, const Tensor& features) {
  check_scan_input(layer, features);
  for (double v : features.data())
    if (!std::isfinite(v)) throw NumericError("scan: non-finite feature value");
  kernels::ScanGeometry g{features.dim(0), features.dim(1), features.dim(2),
                          layer.direction == ScanDirection::vertical};
  const std::size_t d = layer.hidden_size();
  auto fwd = std::make_shared<kernels::LstmPacked>(pack(layer.forward));
  auto bwd = std::make_shared<kernels::LstmPacked>(pack(layer.backward));
  auto cache = std::make_shared<kernels::ScanCache>();
  Tensor out(Shape{2 * d, g.height, g.width});
  const bool verbatim = !layer.conventional_output_gate;
  kernels::lstm_scan_forward(g, *fwd, *bwd, verbatim, features.data().data(), out.data().data(), *cache);
  if (precision() == Precision::f32)
    for (double& v : out.data()) v = round_to_precision(v, Precision::f32);

  std::vector<Tensor> inputs{features};
  bool needs = features.requires_grad();
  for (const auto& [name, t] : layer.named("")) {
    inputs.push_back(t);
    needs = needs || t.requires_grad();
  }
  if (needs && active_tape()) {
    record_op("scan_bidirectional", inputs, out, [g, layer, features, out, fwd, bwd, cache, verbatim]() mutable {
      kernels::LstmPacked dfwd(fwd->input, fwd->hidden), dbwd(bwd->input, bwd->hidden);
      std::vector<double> dx(features.numel(), 0.0);
      kernels::lstm_scan_backward(g, *fwd, *bwd, verbatim, features.data().data(), out.grad().data(), *cache,
                                  dx.data(), dfwd, dbwd);
      if (features.requires_grad()) {
        auto gx = features.grad_mut();
        for (std::size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
      }
      unpack_grad(dfwd, layer.forward);
      unpack_grad(dbwd, layer.backward);
    });
  }
  return out;
}

Tensor scan_bidirectional_reference(const BiScanLayer& layer, const Tensor& features) {
  check_scan_input(layer, features);
  const std::size_t H = features.dim(1), W = features.dim(2), d = layer.hidden_size();
  const bool vertical = layer.direction == ScanDirection::vertical;
  const std::size_t lines = vertical ? W : H, steps = vertical ? H : W;
  const bool conventional = layer.conventional_output_gate;

  auto pixel = [&](std::size_t y, std::size_t x) {
    return reshape(slice(slice(features, 1, y, y + 1), 2, x, x + 1), {features.dim(0)});
  };
  // outputs[y][x] = concat(h_fwd, h_bwd) as a 2d x 1 x 1 tensor
  std::vector<std::vector<Tensor>> fwd_out(H, std::vector<Tensor>(W)), bwd_out(H, std::vector<Tensor>(W));
  for (std::size_t line = 0; line < lines; ++line) {
    Tensor h(Shape{d}), c(Shape{d});
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t y = vertical ? t : line, x = vertical ? line : t;
      auto s = lstm_step(layer.forward, pixel(y, x), h, c, conventional);
      h = s.h;
      c = s.c;
      fwd_out[y][x] = h;
    }
    h = Tensor(Shape{d});
    c = Tensor(Shape{d});
    for (std::size_t t = steps; t-- > 0;) {
      const std::size_t y = vertical ? t : line, x = vertical ? line : t;
      auto s = lstm_step(layer.backward, pixel(y, x), h, c, conventional);
      h = s.h;
      c = s.c;
      bwd_out[y][x] = h;
    }
  }
  std::vector<Tensor> rows;
  for (std::size_t y = 0; y < H; ++y) {
    std::vector<Tensor> cols;
    for (std::size_t x = 0; x < W; ++x)
      cols.push_back(reshape(concat({fwd_out[y][x], bwd_out[y][x]}, 0), {2 * d, 1, 1}));
    rows.push_back(concat(cols, 2));
  }
  return concat(rows, 1);
}

Tensor fuse_contexts(const BiScanLayer& fusion, const Tensor& c_rgb, const Tensor& c_depth) {
  if (c_rgb.shape() != c_depth.shape())
    throw ShapeError("fuse_contexts: context maps differ: " + shape_string(c_rgb.shape()) + " vs " +
                     shape_string(c_depth.shape()));
  return scan_bidirectional(fusion, concat({c_rgb, c_depth}, 0));
}

}  // namespace lstmcf
