#include <algorithm>

#include "lstmcf/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lstmcf::kernels {

long ConvGeometry::out_h_signed() const {
  const long span = static_cast<long>(dilation * (kernel_h - 1) + 1);
  const long padded = static_cast<long>(in_h + 2 * pad);
  return padded < span ? 0 : (padded - span) / static_cast<long>(stride) + 1;
}

long ConvGeometry::out_w_signed() const {
  const long span = static_cast<long>(dilation * (kernel_w - 1) + 1);
  const long padded = static_cast<long>(in_w + 2 * pad);
  return padded < span ? 0 : (padded - span) / static_cast<long>(stride) + 1;
}

namespace {

// Output index range [lo, hi) whose input coordinate o*s - p + k*d lies in [0, n).
struct Range {
  long lo, hi;
};

Range valid_outputs(long n_in, long n_out, long s, long p, long offset) {
  // need 0 <= o*s - p + offset < n_in
  long lo = p - offset;
  lo = lo <= 0 ? 0 : (lo + s - 1) / s;
  long hi_num = n_in - 1 + p - offset;
  long hi = hi_num < 0 ? 0 : hi_num / s + 1;
  return {std::max(0L, lo), std::min(n_out, hi)};
}

}  // namespace

void conv2d_forward_reference(const ConvGeometry& g, const double* x, const double* w, const double* b,
                              double* y) {
  const long oh = g.out_h_signed(), ow = g.out_w_signed();
  const long H = static_cast<long>(g.in_h), W = static_cast<long>(g.in_w);
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    for (long oy = 0; oy < oh; ++oy) {
      for (long ox = 0; ox < ow; ++ox) {
        double acc = b ? b[co] : 0.0;
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const long iy = oy * static_cast<long>(g.stride) - static_cast<long>(g.pad) +
                            static_cast<long>(ky * g.dilation);
            if (iy < 0 || iy >= H) continue;
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const long ix = ox * static_cast<long>(g.stride) - static_cast<long>(g.pad) +
                              static_cast<long>(kx * g.dilation);
              if (ix < 0 || ix >= W) continue;
              acc += w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                     x[(ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix)];
            }
          }
        }
        y[(co * static_cast<std::size_t>(oh) + static_cast<std::size_t>(oy)) * static_cast<std::size_t>(ow) +
          static_cast<std::size_t>(ox)] = acc;
      }
    }
  }
}

void conv2d_backward_reference(const ConvGeometry& g, const double* x, const double* w, const double* dy,
                               double* dx, double* dw, double* db) {
  const long oh = g.out_h_signed(), ow = g.out_w_signed();
  const long H = static_cast<long>(g.in_h), W = static_cast<long>(g.in_w);
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    for (long oy = 0; oy < oh; ++oy) {
      for (long ox = 0; ox < ow; ++ox) {
        const double gy = dy[(co * static_cast<std::size_t>(oh) + static_cast<std::size_t>(oy)) *
                                 static_cast<std::size_t>(ow) +
                             static_cast<std::size_t>(ox)];
        if (db) db[co] += gy;
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const long iy = oy * static_cast<long>(g.stride) - static_cast<long>(g.pad) +
                            static_cast<long>(ky * g.dilation);
            if (iy < 0 || iy >= H) continue;
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const long ix = ox * static_cast<long>(g.stride) - static_cast<long>(g.pad) +
                              static_cast<long>(kx * g.dilation);
              if (ix < 0 || ix >= W) continue;
              const std::size_t wi = ((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx;
              const std::size_t xi =
                  (ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w + static_cast<std::size_t>(ix);
              if (dx) dx[xi] += w[wi] * gy;
              if (dw) dw[wi] += x[xi] * gy;
            }
          }
        }
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, const double* b, double* y) {
  const long oh = g.out_h_signed(), ow = g.out_w_signed();
  const long s = static_cast<long>(g.stride), p = static_cast<long>(g.pad), d = static_cast<long>(g.dilation);
  const long H = static_cast<long>(g.in_h), W = static_cast<long>(g.in_w);
  const std::size_t plane = static_cast<std::size_t>(oh * ow);
  const long cout = static_cast<long>(g.out_channels);
  const std::size_t work = plane * g.out_channels * g.in_channels * g.kernel_h * g.kernel_w;

#pragma omp parallel for schedule(static) if (work > 32768)
  for (long co = 0; co < cout; ++co) {
    double* out = y + static_cast<std::size_t>(co) * plane;
    std::fill(out, out + plane, b ? b[co] : 0.0);
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      const double* in = x + ci * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const Range ry = valid_outputs(H, oh, s, p, static_cast<long>(ky) * d);
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const double wv = w[((static_cast<std::size_t>(co) * g.in_channels + ci) * g.kernel_h + ky) *
                                  g.kernel_w +
                              kx];
          const Range rx = valid_outputs(W, ow, s, p, static_cast<long>(kx) * d);
          const long xoff = static_cast<long>(kx) * d - p;
          for (long oy = ry.lo; oy < ry.hi; ++oy) {
            const double* row = in + (oy * s - p + static_cast<long>(ky) * d) * W;
            double* orow = out + oy * ow;
            if (s == 1) {
              for (long ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wv * row[ox + xoff];
            } else {
              for (long ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wv * row[ox * s + xoff];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, const double* x, const double* w, const double* dy, double* dx,
                     double* dw, double* db) {
  const long oh = g.out_h_signed(), ow = g.out_w_signed();
  const long s = static_cast<long>(g.stride), p = static_cast<long>(g.pad), d = static_cast<long>(g.dilation);
  const long H = static_cast<long>(g.in_h), W = static_cast<long>(g.in_w);
  const std::size_t plane = static_cast<std::size_t>(oh * ow);
  const std::size_t work = plane * g.out_channels * g.in_channels * g.kernel_h * g.kernel_w;

  if (dx) {
    const long cin = static_cast<long>(g.in_channels);
#pragma omp parallel for schedule(static) if (work > 32768)
    for (long ci = 0; ci < cin; ++ci) {
      double* din = dx + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        const double* gout = dy + co * plane;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const Range ry = valid_outputs(H, oh, s, p, static_cast<long>(ky) * d);
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const double wv =
                w[((co * g.in_channels + static_cast<std::size_t>(ci)) * g.kernel_h + ky) * g.kernel_w + kx];
            const Range rx = valid_outputs(W, ow, s, p, static_cast<long>(kx) * d);
            const long xoff = static_cast<long>(kx) * d - p;
            for (long oy = ry.lo; oy < ry.hi; ++oy) {
              double* row = din + (oy * s - p + static_cast<long>(ky) * d) * W;
              const double* grow = gout + oy * ow;
              for (long ox = rx.lo; ox < rx.hi; ++ox) row[ox * s + xoff] += wv * grow[ox];
            }
          }
        }
      }
    }
  }

  if (dw || db) {
    const long cout = static_cast<long>(g.out_channels);
#pragma omp parallel for schedule(static) if (work > 32768)
    for (long co = 0; co < cout; ++co) {
      const double* gout = dy + static_cast<std::size_t>(co) * plane;
      if (db) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += gout[i];
        db[co] += acc;
      }
      if (!dw) continue;
      for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const double* in = x + ci * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const Range ry = valid_outputs(H, oh, s, p, static_cast<long>(ky) * d);
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const Range rx = valid_outputs(W, ow, s, p, static_cast<long>(kx) * d);
            const long xoff = static_cast<long>(kx) * d - p;
            double acc = 0.0;
            for (long oy = ry.lo; oy < ry.hi; ++oy) {
              const double* row = in + (oy * s - p + static_cast<long>(ky) * d) * W;
              const double* grow = gout + oy * ow;
              for (long ox = rx.lo; ox < rx.hi; ++ox) acc += grow[ox] * row[ox * s + xoff];
            }
            dw[((static_cast<std::size_t>(co) * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] += acc;
          }
        }
      }
    }
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace lstmcf::kernels
