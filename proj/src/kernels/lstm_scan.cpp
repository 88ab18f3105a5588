#include <algorithm>
#include <cmath>

#include "lstmcf/kernels.hpp"

namespace lstmcf::kernels {

namespace {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Element offset of step t on line l within one channel plane.
inline std::size_t plane_offset(const ScanGeometry& g, std::size_t line, std::size_t t) {
  return g.vertical ? t * g.width + line : line * g.width + t;
}

// Per-step record: [gates 4h | cell h | hidden h].
inline std::size_t record_size(std::size_t h) { return 6 * h; }

void run_direction(const ScanGeometry& g, const LstmPacked& p, bool verbatim, bool reverse, const double* x,
                   double* y, std::size_t out_channel_offset, std::size_t line, double* records,
                   std::vector<double>& scratch) {
  const std::size_t H = p.hidden, C = p.input, T = g.steps();
  const std::size_t plane = g.height * g.width;
  scratch.assign(C + 4 * H, 0.0);
  double* f = scratch.data();
  double* a = f + C;
  const double* h_prev = nullptr;
  const double* c_prev = nullptr;
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    const std::size_t off = plane_offset(g, line, t);
    for (std::size_t ch = 0; ch < C; ++ch) f[ch] = x[ch * plane + off];
    for (std::size_t r = 0; r < 4 * H; ++r) {
      double acc = p.b[r];
      const double* wrow = p.wx.data() + r * C;
      for (std::size_t ch = 0; ch < C; ++ch) acc += wrow[ch] * f[ch];
      if (h_prev) {
        const double* hrow = p.wh.data() + r * H;
        for (std::size_t k = 0; k < H; ++k) acc += hrow[k] * h_prev[k];
      }
      a[r] = acc;
    }
    double* rec = records + s * record_size(H);
    double* gates = rec;
    double* cell = rec + 4 * H;
    double* hid = rec + 5 * H;
    for (std::size_t k = 0; k < H; ++k) {
      const double gi = sigmoid(a[k]);
      const double gf = sigmoid(a[H + k]);
      const double go = sigmoid(a[2 * H + k]);
      const double gc = std::tanh(a[3 * H + k]);
      gates[k] = gi;
      gates[H + k] = gf;
      gates[2 * H + k] = go;
      gates[3 * H + k] = gc;
      const double cp = c_prev ? c_prev[k] : 0.0;
      const double c = gf * cp + gi * gc;
      cell[k] = c;
      hid[k] = verbatim ? std::tanh(go * c) : go * std::tanh(c);
      y[(out_channel_offset + k) * plane + off] = hid[k];
    }
    h_prev = hid;
    c_prev = cell;
  }
}

void backprop_direction(const ScanGeometry& g, const LstmPacked& p, bool verbatim, bool reverse, const double* x,
                        const double* dy, std::size_t out_channel_offset, std::size_t line, const double* records,
                        double* dx, LstmPacked& grad, std::vector<double>& scratch) {
  const std::size_t H = p.hidden, C = p.input, T = g.steps();
  const std::size_t plane = g.height * g.width;
  scratch.assign(C + 4 * H + 4 * H, 0.0);
  double* f = scratch.data();
  double* da = f + C;
  double* dh_next = da + 4 * H;
  double* dc_next = dh_next + H;
  double* dh = dc_next + H;
  double* dc = dh + H;
  for (std::size_t s = T; s-- > 0;) {
    const std::size_t t = reverse ? T - 1 - s : s;
    const std::size_t off = plane_offset(g, line, t);
    const double* rec = records + s * record_size(H);
    const double* gates = rec;
    const double* cell = rec + 4 * H;
    const double* hid = rec + 5 * H;
    const double* prev = s > 0 ? records + (s - 1) * record_size(H) : nullptr;
    const double* c_prev = prev ? prev + 4 * H : nullptr;
    const double* h_prev = prev ? prev + 5 * H : nullptr;

    for (std::size_t k = 0; k < H; ++k) {
      dh[k] = dy[(out_channel_offset + k) * plane + off] + dh_next[k];
      const double gi = gates[k], gf = gates[H + k], go = gates[2 * H + k], gc = gates[3 * H + k];
      const double c = cell[k];
      double dgo;
      if (verbatim) {
        const double dz = dh[k] * (1.0 - hid[k] * hid[k]);
        dgo = dz * c;
        dc[k] = dc_next[k] + dz * go;
      } else {
        const double tc = std::tanh(c);
        dgo = dh[k] * tc;
        dc[k] = dc_next[k] + dh[k] * go * (1.0 - tc * tc);
      }
      const double cp = c_prev ? c_prev[k] : 0.0;
      const double dgi = dc[k] * gc;
      const double dgc = dc[k] * gi;
      const double dgf = dc[k] * cp;
      dc_next[k] = dc[k] * gf;
      da[k] = dgi * gi * (1.0 - gi);
      da[H + k] = dgf * gf * (1.0 - gf);
      da[2 * H + k] = dgo * go * (1.0 - go);
      da[3 * H + k] = dgc * (1.0 - gc * gc);
    }

    for (std::size_t ch = 0; ch < C; ++ch) f[ch] = x[ch * plane + off];
    for (std::size_t r = 0; r < 4 * H; ++r) {
      const double dar = da[r];
      grad.b[r] += dar;
      double* gw = grad.wx.data() + r * C;
      for (std::size_t ch = 0; ch < C; ++ch) gw[ch] += dar * f[ch];
      if (h_prev) {
        double* gh = grad.wh.data() + r * H;
        for (std::size_t k = 0; k < H; ++k) gh[k] += dar * h_prev[k];
      }
    }
    // dx += Wx^T da ; dh_prev = Wh^T da
    for (std::size_t ch = 0; ch < C; ++ch) {
      double acc = 0.0;
      for (std::size_t r = 0; r < 4 * H; ++r) acc += p.wx[r * C + ch] * da[r];
      dx[ch * plane + off] += acc;
    }
    for (std::size_t k = 0; k < H; ++k) {
      double acc = 0.0;
      for (std::size_t r = 0; r < 4 * H; ++r) acc += p.wh[r * H + k] * da[r];
      dh_next[k] = acc;
    }
  }
}

// Lines are grouped into a fixed number of blocks independent of the thread
// count; parameter gradients are reduced block by block in order.
constexpr std::size_t kMaxBlocks = 16;

}  // namespace

void lstm_scan_forward(const ScanGeometry& g, const LstmPacked& fwd, const LstmPacked& bwd, bool verbatim_output,
                       const double* x, double* y, ScanCache& cache) {
  const std::size_t H = fwd.hidden, L = g.lines(), T = g.steps();
  cache.hidden = H;
  cache.lines = L;
  cache.steps = T;
  cache.fwd.assign(L * T * record_size(H), 0.0);
  cache.bwd.assign(L * T * record_size(H), 0.0);
  const long lines = static_cast<long>(L);
#pragma omp parallel
  {
    std::vector<double> scratch;
#pragma omp for schedule(static)
    for (long l = 0; l < lines; ++l) {
      const std::size_t line = static_cast<std::size_t>(l);
      run_direction(g, fwd, verbatim_output, false, x, y, 0, line,
                    cache.fwd.data() + line * T * record_size(H), scratch);
      run_direction(g, bwd, verbatim_output, true, x, y, H, line,
                    cache.bwd.data() + line * T * record_size(H), scratch);
    }
  }
}

void lstm_scan_backward(const ScanGeometry& g, const LstmPacked& fwd, const LstmPacked& bwd, bool verbatim_output,
                        const double* x, const double* dy, const ScanCache& cache, double* dx, LstmPacked& dfwd,
                        LstmPacked& dbwd) {
  const std::size_t H = fwd.hidden, L = g.lines(), T = g.steps();
  const std::size_t blocks = std::min(L, kMaxBlocks);
  std::vector<LstmPacked> gf(blocks, LstmPacked(fwd.input, H));
  std::vector<LstmPacked> gb(blocks, LstmPacked(bwd.input, H));
  const long nblocks = static_cast<long>(blocks);
#pragma omp parallel
  {
    std::vector<double> scratch;
#pragma omp for schedule(static)
    for (long bl = 0; bl < nblocks; ++bl) {
      const std::size_t b = static_cast<std::size_t>(bl);
      const std::size_t lo = b * L / blocks, hi = (b + 1) * L / blocks;
      for (std::size_t line = lo; line < hi; ++line) {
        backprop_direction(g, fwd, verbatim_output, false, x, dy, 0, line,
                           cache.fwd.data() + line * T * record_size(H), dx, gf[b], scratch);
        backprop_direction(g, bwd, verbatim_output, true, x, dy, H, line,
                           cache.bwd.data() + line * T * record_size(H), dx, gb[b], scratch);
      }
    }
  }
  auto reduce = [](const std::vector<LstmPacked>& parts, LstmPacked& out) {
    for (const auto& part : parts) {
      for (std::size_t i = 0; i < out.wx.size(); ++i) out.wx[i] += part.wx[i];
      for (std::size_t i = 0; i < out.wh.size(); ++i) out.wh[i] += part.wh[i];
      for (std::size_t i = 0; i < out.b.size(); ++i) out.b[i] += part.b[i];
    }
  };
  reduce(gf, dfwd);
  reduce(gb, dbwd);
}

}  // namespace lstmcf::kernels
