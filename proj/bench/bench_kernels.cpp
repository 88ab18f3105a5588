// Serial reference kernels against their OpenMP counterparts.
//
//   bench_kernels [repeats] [threads]
//
// One line per kernel: best-of-N milliseconds for each and the max absolute
// difference between the two outputs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "lstmcf/kernels.hpp"
#include "lstmcf/random.hpp"

namespace k = lstmcf::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, lstmcf::Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double best_ms(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void report(const std::string& name, double serial, double parallel, double diff) {
  std::printf("%-28s serial %9.3f ms  omp %9.3f ms  speedup %5.2fx  max|diff| %.3g\n", name.c_str(), serial,
              parallel, serial / parallel, diff);
}

void bench_conv(const char* name, const k::ConvGeometry& g, int repeats, lstmcf::Rng& rng) {
  auto x = random_vec(g.in_channels * g.in_h * g.in_w, rng);
  auto w = random_vec(g.out_channels * g.in_channels * g.kernel_h * g.kernel_w, rng);
  auto b = random_vec(g.out_channels, rng);
  std::size_t ny = g.out_channels * g.out_h() * g.out_w();
  std::vector<double> ys(ny), yp(ny);
  double ts = best_ms(repeats, [&] { k::conv2d_forward_reference(g, x.data(), w.data(), b.data(), ys.data()); });
  double tp = best_ms(repeats, [&] { k::conv2d_forward(g, x.data(), w.data(), b.data(), yp.data()); });
  report(std::string(name) + " fwd", ts, tp, max_diff(ys, yp));

  auto dy = random_vec(ny, rng);
  std::vector<double> dxs(x.size()), dws(w.size()), dbs(b.size());
  std::vector<double> dxp(x.size()), dwp(w.size()), dbp(b.size());
  auto zero = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
  ts = best_ms(repeats, [&] {
    zero(dxs), zero(dws), zero(dbs);
    k::conv2d_backward_reference(g, x.data(), w.data(), dy.data(), dxs.data(), dws.data(), dbs.data());
  });
  tp = best_ms(repeats, [&] {
    zero(dxp), zero(dwp), zero(dbp);
    k::conv2d_backward(g, x.data(), w.data(), dy.data(), dxp.data(), dwp.data(), dbp.data());
  });
  report(std::string(name) + " bwd", ts, tp, std::max({max_diff(dxs, dxp), max_diff(dws, dwp), max_diff(dbs, dbp)}));
}

void bench_gemm(std::size_t m, std::size_t n, std::size_t kk, int repeats, lstmcf::Rng& rng) {
  auto a = random_vec(m * kk, rng), b = random_vec(kk * n, rng);
  std::vector<double> cs(m * n), cp(m * n);
  double ts = best_ms(repeats, [&] { k::gemm_reference(false, false, m, n, kk, a.data(), b.data(), cs.data(), false); });
  double tp = best_ms(repeats, [&] { k::gemm(false, false, m, n, kk, a.data(), b.data(), cp.data(), false); });
  report("gemm " + std::to_string(m) + "x" + std::to_string(n) + "x" + std::to_string(kk), ts, tp, max_diff(cs, cp));
}

// The scan has no separate reference; compare one thread against all.
void bench_scan(bool vertical, int threads, int repeats, lstmcf::Rng& rng) {
  k::ScanGeometry g{32, 32, 32, vertical};
  std::size_t h = 32;
  k::LstmPacked f(g.channels, h), bw(g.channels, h);
  for (auto* p : {&f, &bw}) {
    p->wx = random_vec(p->wx.size(), rng);
    p->wh = random_vec(p->wh.size(), rng);
    p->b = random_vec(p->b.size(), rng);
    for (auto& v : p->wx) v *= 0.2;
    for (auto& v : p->wh) v *= 0.2;
  }
  auto x = random_vec(g.channels * g.height * g.width, rng);
  std::vector<double> ys(2 * h * g.height * g.width), yp(ys.size());
  k::ScanCache cs, cp;
  k::set_threads(1);
  double ts = best_ms(repeats, [&] { k::lstm_scan_forward(g, f, bw, false, x.data(), ys.data(), cs); });
  k::set_threads(threads);
  double tp = best_ms(repeats, [&] { k::lstm_scan_forward(g, f, bw, false, x.data(), yp.data(), cp); });
  report(std::string("lstm scan ") + (vertical ? "vertical" : "horizontal"), ts, tp, max_diff(ys, yp));
}

}  // namespace

int main(int argc, char** argv) {
  int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  int threads = argc > 2 ? std::atoi(argv[2]) : k::max_threads();
  if (repeats < 1 || threads < 1) {
    std::fprintf(stderr, "usage: bench_kernels [repeats >= 1] [threads >= 1]\n");
    return 2;
  }
  k::set_threads(threads);
  std::printf("threads %d, best of %d\n", threads, repeats);
  lstmcf::Rng rng(7);

  k::ConvGeometry rgb{3, 64, 64, 16, 3, 3, 1, 1, 1};
  k::ConvGeometry deep{32, 16, 16, 32, 3, 3, 1, 2, 2};
  bench_conv("conv 3->16 64x64 k3", rgb, repeats, rng);
  bench_conv("conv 32->32 16x16 k3 d2", deep, repeats, rng);
  bench_gemm(128, 128, 128, repeats, rng);
  bench_gemm(256, 64, 512, repeats, rng);
  bench_scan(true, threads, repeats, rng);
  bench_scan(false, threads, repeats, rng);
  return 0;
}
