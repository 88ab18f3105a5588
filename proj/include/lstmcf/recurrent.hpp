#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lstmcf/ops.hpp"
#include "lstmcf/tensor.hpp"

namespace lstmcf {

using NamedTensor = std::pair<std::string, Tensor>;

// Weights of one LSTM cell. Input projections are hidden x input, state
// projections hidden x hidden, biases hidden.
struct LstmCellParams {
  Tensor w_if, w_ff, w_of, w_cf;
  Tensor w_ih, w_fh, w_oh, w_ch;
  Tensor b_i, b_f, b_o, b_c;

  static LstmCellParams create(std::size_t input, std::size_t hidden, const Init& init, std::uint64_t seed);
  static LstmCellParams zeros(std::size_t input, std::size_t hidden);

  std::size_t input_size() const { return w_if.dim(1); }
  std::size_t hidden_size() const { return w_if.dim(0); }
  // Named in the W_if ... b_c order.
  std::vector<NamedTensor> named(const std::string& prefix) const;
  // Throws ShapeError unless every matrix agrees with input/hidden sizes.
  void validate() const;
};

struct LstmState {
  Tensor h, c;
};

// One step of the cell on rank-1 vectors:
//   gate_i = sigmoid(W_if f + W_ih h_prev + b_i)   (gate_f, gate_o likewise)
//   gate_c = tanh(W_cf f + W_ch h_prev + b_c)
//   c      = gate_f * c_prev + gate_i * gate_c
//   h      = tanh(gate_o * c)         default
//   h      = gate_o * tanh(c)         when conventional_output_gate
// Built from tape ops, so it is differentiable on its own.
LstmState lstm_step(const LstmCellParams& p, const Tensor& f, const Tensor& h_prev, const Tensor& c_prev,
                    bool conventional_output_gate = false);

enum class ScanDirection { vertical, horizontal };

// A forward/backward LSTM pair swept along columns (vertical) or rows
// (horizontal) of a C x H x W map, producing 2d output channels.
struct BiScanLayer {
  ScanDirection direction = ScanDirection::vertical;
  LstmCellParams forward, backward;
  bool conventional_output_gate = false;

  static BiScanLayer create(ScanDirection dir, std::size_t input, std::size_t hidden, const Init& init,
                            std::uint64_t seed);

  std::size_t input_size() const { return forward.input_size(); }
  std::size_t hidden_size() const { return forward.hidden_size(); }
  std::size_t output_channels() const { return 2 * hidden_size(); }
  std::vector<NamedTensor> named(const std::string& prefix) const;
};

// Fused scan. Output channels [0, d) hold the forward sweep, [d, 2d) the
// backward sweep; both start from zero (h, c). Lines are processed by the
// parallel kernel.
Tensor scan_bidirectional(const BiScanLayer& layer, const Tensor& features);

// Same result composed pixel by pixel from lstm_step. Slow; kept as the
// independent route the fused kernel is tested against.
Tensor scan_bidirectional_reference(const BiScanLayer& layer, const Tensor& features);

// Channel-concatenates the two 2d-channel context maps (4d channels) and
// runs the horizontal fusion scan over them.
Tensor fuse_contexts(const BiScanLayer& fusion, const Tensor& c_rgb, const Tensor& c_depth);

}  // namespace lstmcf
