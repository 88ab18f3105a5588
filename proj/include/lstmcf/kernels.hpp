#pragma once

// Raw numeric kernels behind the differentiable ops.
//
// Each parallel kernel has a serial reference twin with a deliberately
// different loop structure. The references are the oracles in the kernel
// tests and the baseline in the benchmark; the ops layer calls the parallel
// versions. Parallel kernels partition outputs so each element is written by
// exactly one thread in a fixed order, which makes results independent of the
// thread count.

#include <cstddef>
#include <vector>

namespace lstmcf::kernels {

struct ConvGeometry {
  std::size_t in_channels = 0, in_h = 0, in_w = 0;
  std::size_t out_channels = 0, kernel_h = 0, kernel_w = 0;
  std::size_t stride = 1, pad = 0, dilation = 1;

  // Signed so that kernels larger than the padded input report <= 0.
  long out_h_signed() const;
  long out_w_signed() const;
  std::size_t out_h() const { return static_cast<std::size_t>(out_h_signed()); }
  std::size_t out_w() const { return static_cast<std::size_t>(out_w_signed()); }
};

// y[co,oy,ox] = b[co] + sum_{ci,ky,kx} w[co,ci,ky,kx] * x[ci, oy*s-p+ky*d, ox*s-p+kx*d]
void conv2d_forward_reference(const ConvGeometry& g, const double* x, const double* w, const double* b,
                              double* y);
void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, const double* b, double* y);

// Accumulates (+=) into any non-null gradient buffer.
void conv2d_backward_reference(const ConvGeometry& g, const double* x, const double* w, const double* dy,
                               double* dx, double* dw, double* db);
void conv2d_backward(const ConvGeometry& g, const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* db);

// C (m x n) = op(A) * op(B) (+ C when accumulate), op(X) = X or X^T.
// A is m x k after op, B is k x n after op; storage is row-major.
void gemm_reference(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c, bool accumulate);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

// One LSTM direction with its gate blocks stacked in the order
// input, forget, output, candidate: wx is 4h x in, wh is 4h x h, b is 4h.
struct LstmPacked {
  std::size_t input = 0, hidden = 0;
  std::vector<double> wx, wh, b;
  LstmPacked() = default;
  LstmPacked(std::size_t in, std::size_t hid)
      : input(in), hidden(hid), wx(4 * hid * in, 0.0), wh(4 * hid * hid, 0.0), b(4 * hid, 0.0) {}
};

// Lines are columns for a vertical scan (sequence runs down the rows) and
// rows for a horizontal scan (sequence runs across the columns).
struct ScanGeometry {
  std::size_t channels = 0, height = 0, width = 0;
  bool vertical = true;
  std::size_t lines() const { return vertical ? width : height; }
  std::size_t steps() const { return vertical ? height : width; }
};

// Saved activations for backward: per direction, per line, per step:
// 4h gate activations, h cell values, h hidden values.
struct ScanCache {
  std::size_t hidden = 0, lines = 0, steps = 0;
  std::vector<double> fwd, bwd;
};

// x is channels x height x width; y is 2h x height x width with the forward
// direction in channels [0, h) and the backward direction in [h, 2h).
// Initial (h, c) are zero at both ends. With verbatim_output the hidden
// state is tanh(o * c); otherwise o * tanh(c).
void lstm_scan_forward(const ScanGeometry& g, const LstmPacked& fwd, const LstmPacked& bwd, bool verbatim_output,
                       const double* x, double* y, ScanCache& cache);
// Accumulates into dx (same layout as x) and the packed gradients.
void lstm_scan_backward(const ScanGeometry& g, const LstmPacked& fwd, const LstmPacked& bwd, bool verbatim_output,
                        const double* x, const double* dy, const ScanCache& cache, double* dx, LstmPacked& dfwd,
                        LstmPacked& dbwd);

// Threads OpenMP will use for parallel kernels (1 when built without it).
int max_threads();
void set_threads(int n);

}  // namespace lstmcf::kernels
