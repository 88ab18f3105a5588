#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls the library's numeric ops.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lstmcf/ops.hpp"
#include "lstmcf/random.hpp"
#include "lstmcf/recurrent.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Row-major d x n matrix times vector, plain loop.
inline Vec matvec(const lstmcf::Tensor& m, const Vec& v) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Vec out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r] += m.data()[r * cols + c] * v[c];
  return out;
}

struct Step {
  Vec h, c;
};

// The cell equations evaluated one scalar at a time.
inline Step lstm_step(const lstmcf::LstmCellParams& p, const Vec& f, const Vec& h_prev, const Vec& c_prev,
                      bool conventional) {
  const std::size_t d = p.hidden_size();
  const Vec xi = matvec(p.w_if, f), hi = matvec(p.w_ih, h_prev);
  const Vec xf = matvec(p.w_ff, f), hf = matvec(p.w_fh, h_prev);
  const Vec xo = matvec(p.w_of, f), ho = matvec(p.w_oh, h_prev);
  const Vec xc = matvec(p.w_cf, f), hc = matvec(p.w_ch, h_prev);
  Step s{Vec(d), Vec(d)};
  for (std::size_t k = 0; k < d; ++k) {
    const double gi = sigm(xi[k] + hi[k] + p.b_i.data()[k]);
    const double gf = sigm(xf[k] + hf[k] + p.b_f.data()[k]);
    const double go = sigm(xo[k] + ho[k] + p.b_o.data()[k]);
    const double gc = std::tanh(xc[k] + hc[k] + p.b_c.data()[k]);
    s.c[k] = gf * c_prev[k] + gi * gc;
    s.h[k] = conventional ? go * std::tanh(s.c[k]) : std::tanh(go * s.c[k]);
  }
  return s;
}

inline Vec random_vec(std::size_t n, lstmcf::Rng& rng, double scale = 1.0) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

inline lstmcf::Tensor to_tensor(const Vec& v) { return lstmcf::Tensor(lstmcf::Shape{v.size()}, v); }

// Expected dependency of scan output channel block on a perturbed input
// pixel, from the scan definition alone.
//   vertical: lines are columns, the sequence runs down rows.
//   horizontal: lines are rows, the sequence runs across columns.
inline bool in_cone(bool vertical, bool forward_half, std::size_t py, std::size_t px, std::size_t y, std::size_t x) {
  const std::size_t line_p = vertical ? px : py, line_o = vertical ? x : y;
  const std::size_t pos_p = vertical ? py : px, pos_o = vertical ? y : x;
  if (line_p != line_o) return false;
  return forward_half ? pos_o >= pos_p : pos_o <= pos_p;
}

struct ConeReport {
  std::size_t violations = 0;   // changed outside the cone
  std::size_t silent = 0;       // unchanged inside the cone (allowed, counted for diagnostics)
  std::size_t checked = 0;
  std::string first_violation;
};

// Perturbs one input pixel and compares every output (channel, pixel) with
// the cone prediction. Only "changed outside the cone" counts as a
// violation; inside the cone a change is expected but not guaranteed.
inline void cone_trial(const lstmcf::BiScanLayer& layer, const lstmcf::Tensor& features, std::size_t py,
                       std::size_t px, double delta, ConeReport& report) {
  using namespace lstmcf;
  const bool vertical = layer.direction == ScanDirection::vertical;
  const Tensor base = scan_bidirectional(layer, features);
  Tensor moved = features.clone();
  for (std::size_t ch = 0; ch < features.dim(0); ++ch) moved.at(ch, py, px) += delta;
  const Tensor out = scan_bidirectional(layer, moved);
  const std::size_t d = layer.hidden_size(), H = features.dim(1), W = features.dim(2);
  for (std::size_t ch = 0; ch < 2 * d; ++ch)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const bool changed = out.at(ch, y, x) != base.at(ch, y, x);
        const bool expected = in_cone(vertical, ch < d, py, px, y, x);
        ++report.checked;
        if (changed && !expected) {
          if (report.violations++ == 0)
            report.first_violation = "channel " + std::to_string(ch) + " at (" + std::to_string(y) + "," +
                                     std::to_string(x) + ") from (" + std::to_string(py) + "," + std::to_string(px) + ")";
        }
        if (!changed && expected) ++report.silent;
      }
}

// Brute-force metric recomputation from the raw pixel lists: every quantity
// is a direct count over pixels rather than a read of a confusion matrix.
struct MetricCounts {
  std::vector<std::vector<std::uint64_t>> n;  // [truth][pred]
  std::uint64_t ignored = 0;
  std::vector<double> paper, iou;  // NaN when t_i = 0
  double mean_paper = 0.0, pixel_accuracy = 0.0;
};

inline MetricCounts brute_force_metrics(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth,
                                        std::size_t k, std::uint8_t ignore = 255) {
  MetricCounts m;
  m.n.assign(k, std::vector<std::uint64_t>(k, 0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t p = 0; p < truth.size(); ++p)
        if (truth[p] == i && pred[p] == j) ++m.n[i][j];
  std::uint64_t correct = 0, counted = 0;
  for (std::size_t p = 0; p < truth.size(); ++p) {
    if (truth[p] == ignore) {
      ++m.ignored;
      continue;
    }
    ++counted;
    if (pred[p] == truth[p]) ++correct;
  }
  std::size_t defined = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t in_truth = 0, in_pred = 0, both = 0;
    for (std::size_t p = 0; p < truth.size(); ++p) {
      if (truth[p] == ignore) continue;
      in_truth += truth[p] == c;
      in_pred += pred[p] == c;
      both += truth[p] == c && pred[p] == c;
    }
    if (in_truth == 0) {
      m.paper.push_back(std::nan(""));
      m.iou.push_back(std::nan(""));
      continue;
    }
    m.paper.push_back(static_cast<double>(both) / static_cast<double>(in_truth));
    m.iou.push_back(static_cast<double>(both) / static_cast<double>(in_truth + in_pred - both));
    m.mean_paper += m.paper.back();
    ++defined;
  }
  if (defined) m.mean_paper /= static_cast<double>(defined);
  if (counted) m.pixel_accuracy = static_cast<double>(correct) / static_cast<double>(counted);
  return m;
}

}  // namespace oracle
