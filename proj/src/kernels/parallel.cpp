// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <utility>

#include "sammese/kernels.hpp"

namespace sammese::kernels {

BilinearTap bilinear_tap(int64_t out_index, int64_t in_size, int64_t out_size) {
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  double src = (static_cast<double>(out_index) + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  int64_t i0 = static_cast<int64_t>(src);
  if (i0 > in_size - 1) i0 = in_size - 1;
  const int64_t i1 = std::min(i0 + 1, in_size - 1);
  const double w1 = src - static_cast<double>(i0);
  return {i0, i1, 1.0 - w1, w1};
}

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate) {
  const int64_t rows = s.batch * s.m;
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t bi = r / s.m;
    const int64_t i = r % s.m;
    const double* ab = a + bi * s.stride_a;
    const double* bb = b + bi * s.stride_b;
    double* crow = c + bi * s.stride_c + i * s.n;
    if (!accumulate) std::fill(crow, crow + s.n, 0.0);
    for (int64_t p = 0; p < s.k; ++p) {
      const double av = s.trans_a ? ab[p * s.m + i] : ab[i * s.k + p];
      if (av == 0.0) continue;
      if (!s.trans_b) {
        const double* brow = bb + p * s.n;
        for (int64_t j = 0; j < s.n; ++j) crow[j] += av * brow[j];
      } else {
        for (int64_t j = 0; j < s.n; ++j) crow[j] += av * bb[j * s.k + p];
      }
    }
  }
}

void conv2d_forward(const ConvGeom& g, const double* x, const double* w, const double* bias,
                    double* y) {
  const int64_t oh = g.out_h(), ow = g.out_w();
  const int64_t planes = g.batch * g.out_ch;
#pragma omp parallel for schedule(static)
  for (int64_t pl = 0; pl < planes; ++pl) {
    const int64_t b = pl / g.out_ch;
    const int64_t co = pl % g.out_ch;
    double* yp = y + pl * oh * ow;
    std::fill(yp, yp + oh * ow, bias ? bias[co] : 0.0);
    for (int64_t ci = 0; ci < g.in_ch; ++ci) {
      const double* xp = x + (b * g.in_ch + ci) * g.in_h * g.in_w;
      const double* wk = w + (co * g.in_ch + ci) * g.kernel * g.kernel;
      for (int64_t ky = 0; ky < g.kernel; ++ky) {
        for (int64_t kx = 0; kx < g.kernel; ++kx) {
          const double wv = wk[ky * g.kernel + kx];
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.in_h) continue;
            const double* xrow = xp + iy * g.in_w;
            double* yrow = yp + oy * ow;
            for (int64_t ox = 0; ox < ow; ++ox) {
              const int64_t ix = ox * g.stride - g.pad + kx;
              if (ix < 0 || ix >= g.in_w) continue;
              yrow[ox] += wv * xrow[ix];
            }
          }
        }
      }
    }
  }
}

namespace {

/// Output indices [lo, hi) whose tap at offset k lands inside [0, in).
std::pair<int64_t, int64_t> valid_range(int64_t k, int64_t pad, int64_t stride, int64_t in,
                                        int64_t out) {
  const int64_t first = pad - k;  // smallest o * stride that is in range
  const int64_t lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const int64_t last = in - 1 + pad - k;
  const int64_t hi = last < 0 ? 0 : std::min(out, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

void conv2d_backward_input(const ConvGeom& g, const double* dy, const double* w, double* dx) {
  const int64_t oh = g.out_h(), ow = g.out_w();
  const int64_t planes = g.batch * g.in_ch;
  // Each input plane is owned by one thread and accumulated in a fixed order.
#pragma omp parallel for schedule(static)
  for (int64_t pl = 0; pl < planes; ++pl) {
    const int64_t b = pl / g.in_ch;
    const int64_t ci = pl % g.in_ch;
    double* dxp = dx + pl * g.in_h * g.in_w;
    for (int64_t co = 0; co < g.out_ch; ++co) {
      const double* dyp = dy + (b * g.out_ch + co) * oh * ow;
      const double* wk = w + (co * g.in_ch + ci) * g.kernel * g.kernel;
      for (int64_t ky = 0; ky < g.kernel; ++ky) {
        const auto [oy0, oy1] = valid_range(ky, g.pad, g.stride, g.in_h, oh);
        for (int64_t kx = 0; kx < g.kernel; ++kx) {
          const auto [ox0, ox1] = valid_range(kx, g.pad, g.stride, g.in_w, ow);
          const double wv = wk[ky * g.kernel + kx];
          for (int64_t oy = oy0; oy < oy1; ++oy) {
            const int64_t off = (oy * g.stride + ky - g.pad) * g.in_w + kx - g.pad;
            const double* d = dyp + oy * ow;
            for (int64_t ox = ox0; ox < ox1; ++ox) dxp[off + ox * g.stride] += wv * d[ox];
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeom& g, const double* x, const double* dy, double* dw,
                            double* db) {
  const int64_t oh = g.out_h(), ow = g.out_w();
#pragma omp parallel for schedule(static)
  for (int64_t co = 0; co < g.out_ch; ++co) {
    if (db) {
      double acc = 0.0;
      for (int64_t b = 0; b < g.batch; ++b) {
        const double* dyp = dy + (b * g.out_ch + co) * oh * ow;
        for (int64_t i = 0; i < oh * ow; ++i) acc += dyp[i];
      }
      db[co] += acc;
    }
    for (int64_t ci = 0; ci < g.in_ch; ++ci) {
      double* dwk = dw + (co * g.in_ch + ci) * g.kernel * g.kernel;
      for (int64_t ky = 0; ky < g.kernel; ++ky) {
        const auto [oy0, oy1] = valid_range(ky, g.pad, g.stride, g.in_h, oh);
        for (int64_t kx = 0; kx < g.kernel; ++kx) {
          const auto [ox0, ox1] = valid_range(kx, g.pad, g.stride, g.in_w, ow);
          double acc = 0.0;
          for (int64_t b = 0; b < g.batch; ++b) {
            const double* xp = x + (b * g.in_ch + ci) * g.in_h * g.in_w;
            const double* dyp = dy + (b * g.out_ch + co) * oh * ow;
            for (int64_t oy = oy0; oy < oy1; ++oy) {
              const int64_t off = (oy * g.stride + ky - g.pad) * g.in_w + kx - g.pad;
              const double* d = dyp + oy * ow;
              for (int64_t ox = ox0; ox < ox1; ++ox) acc += xp[off + ox * g.stride] * d[ox];
            }
          }
          dwk[ky * g.kernel + kx] += acc;
        }
      }
    }
  }
}

void resize_bilinear_forward(const ResizeGeom& g, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < g.planes; ++p) {
    const double* xp = x + p * g.in_h * g.in_w;
    double* yp = y + p * g.out_h * g.out_w;
    for (int64_t oy = 0; oy < g.out_h; ++oy) {
      const BilinearTap ty = bilinear_tap(oy, g.in_h, g.out_h);
      for (int64_t ox = 0; ox < g.out_w; ++ox) {
        const BilinearTap tx = bilinear_tap(ox, g.in_w, g.out_w);
        yp[oy * g.out_w + ox] =
            ty.w0 * (tx.w0 * xp[ty.i0 * g.in_w + tx.i0] + tx.w1 * xp[ty.i0 * g.in_w + tx.i1]) +
            ty.w1 * (tx.w0 * xp[ty.i1 * g.in_w + tx.i0] + tx.w1 * xp[ty.i1 * g.in_w + tx.i1]);
      }
    }
  }
}

void resize_bilinear_backward(const ResizeGeom& g, const double* dy, double* dx) {
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < g.planes; ++p) {
    double* dxp = dx + p * g.in_h * g.in_w;
    const double* dyp = dy + p * g.out_h * g.out_w;
    for (int64_t oy = 0; oy < g.out_h; ++oy) {
      const BilinearTap ty = bilinear_tap(oy, g.in_h, g.out_h);
      for (int64_t ox = 0; ox < g.out_w; ++ox) {
        const BilinearTap tx = bilinear_tap(ox, g.in_w, g.out_w);
        const double d = dyp[oy * g.out_w + ox];
        dxp[ty.i0 * g.in_w + tx.i0] += ty.w0 * tx.w0 * d;
        dxp[ty.i0 * g.in_w + tx.i1] += ty.w0 * tx.w1 * d;
        dxp[ty.i1 * g.in_w + tx.i0] += ty.w1 * tx.w0 * d;
        dxp[ty.i1 * g.in_w + tx.i1] += ty.w1 * tx.w1 * d;
      }
    }
  }
}

void softmax_rows(int64_t rows, int64_t cols, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

}  // namespace sammese::kernels
