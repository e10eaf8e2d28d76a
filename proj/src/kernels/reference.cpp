// SPDX-License-Identifier: Apache-2.0
//
// Serial textbook loops. Written independently of the parallel kernels:
// scatter-form transposed convolution, explicit index arithmetic for resizing.
#include <algorithm>
#include <cmath>
#include <vector>

#include "sammese/kernels.hpp"

namespace sammese::kernels::reference {

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate) {
  for (int64_t bi = 0; bi < s.batch; ++bi) {
    const double* ab = a + bi * s.stride_a;
    const double* bb = b + bi * s.stride_b;
    double* cb = c + bi * s.stride_c;
    for (int64_t i = 0; i < s.m; ++i) {
      for (int64_t j = 0; j < s.n; ++j) {
        double acc = 0.0;
        for (int64_t p = 0; p < s.k; ++p) {
          const double av = s.trans_a ? ab[p * s.m + i] : ab[i * s.k + p];
          const double bv = s.trans_b ? bb[j * s.k + p] : bb[p * s.n + j];
          acc += av * bv;
        }
        cb[i * s.n + j] = accumulate ? cb[i * s.n + j] + acc : acc;
      }
    }
  }
}

void conv2d_forward(const ConvGeom& g, const double* x, const double* w, const double* bias,
                    double* y) {
  const int64_t oh = g.out_h(), ow = g.out_w();
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t co = 0; co < g.out_ch; ++co)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = bias ? bias[co] : 0.0;
          for (int64_t ci = 0; ci < g.in_ch; ++ci)
            for (int64_t ky = 0; ky < g.kernel; ++ky)
              for (int64_t kx = 0; kx < g.kernel; ++kx) {
                const int64_t iy = oy * g.stride + ky - g.pad;
                const int64_t ix = ox * g.stride + kx - g.pad;
                if (iy < 0 || ix < 0 || iy >= g.in_h || ix >= g.in_w) continue;
                acc += w[((co * g.in_ch + ci) * g.kernel + ky) * g.kernel + kx] *
                       x[((b * g.in_ch + ci) * g.in_h + iy) * g.in_w + ix];
              }
          y[((b * g.out_ch + co) * oh + oy) * ow + ox] = acc;
        }
}

void conv2d_backward_input(const ConvGeom& g, const double* dy, const double* w, double* dx) {
  const int64_t oh = g.out_h(), ow = g.out_w();
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t co = 0; co < g.out_ch; ++co)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          const double d = dy[((b * g.out_ch + co) * oh + oy) * ow + ox];
          for (int64_t ci = 0; ci < g.in_ch; ++ci)
            for (int64_t ky = 0; ky < g.kernel; ++ky)
              for (int64_t kx = 0; kx < g.kernel; ++kx) {
                const int64_t iy = oy * g.stride + ky - g.pad;
                const int64_t ix = ox * g.stride + kx - g.pad;
                if (iy < 0 || ix < 0 || iy >= g.in_h || ix >= g.in_w) continue;
                dx[((b * g.in_ch + ci) * g.in_h + iy) * g.in_w + ix] +=
                    w[((co * g.in_ch + ci) * g.kernel + ky) * g.kernel + kx] * d;
              }
        }
}

void conv2d_backward_weight(const ConvGeom& g, const double* x, const double* dy, double* dw,
                            double* db) {
  const int64_t oh = g.out_h(), ow = g.out_w();
  for (int64_t b = 0; b < g.batch; ++b)
    for (int64_t co = 0; co < g.out_ch; ++co)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          const double d = dy[((b * g.out_ch + co) * oh + oy) * ow + ox];
          if (db) db[co] += d;
          for (int64_t ci = 0; ci < g.in_ch; ++ci)
            for (int64_t ky = 0; ky < g.kernel; ++ky)
              for (int64_t kx = 0; kx < g.kernel; ++kx) {
                const int64_t iy = oy * g.stride + ky - g.pad;
                const int64_t ix = ox * g.stride + kx - g.pad;
                if (iy < 0 || ix < 0 || iy >= g.in_h || ix >= g.in_w) continue;
                dw[((co * g.in_ch + ci) * g.kernel + ky) * g.kernel + kx] +=
                    x[((b * g.in_ch + ci) * g.in_h + iy) * g.in_w + ix] * d;
              }
        }
}

namespace {

// Half-pixel source coordinate, clamped at the low edge.
void source_index(int64_t o, int64_t in, int64_t out, int64_t& lo, int64_t& hi, double& frac) {
  double src = (o + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  src = std::max(src, 0.0);
  lo = std::min(static_cast<int64_t>(std::floor(src)), in - 1);
  hi = lo + 1 < in ? lo + 1 : in - 1;
  frac = src - static_cast<double>(lo);
}

}  // namespace

void resize_bilinear_forward(const ResizeGeom& g, const double* x, double* y) {
  for (int64_t p = 0; p < g.planes; ++p)
    for (int64_t oy = 0; oy < g.out_h; ++oy)
      for (int64_t ox = 0; ox < g.out_w; ++ox) {
        int64_t y0, y1, x0, x1;
        double fy, fx;
        source_index(oy, g.in_h, g.out_h, y0, y1, fy);
        source_index(ox, g.in_w, g.out_w, x0, x1, fx);
        const double* xp = x + p * g.in_h * g.in_w;
        const double top = (1 - fx) * xp[y0 * g.in_w + x0] + fx * xp[y0 * g.in_w + x1];
        const double bot = (1 - fx) * xp[y1 * g.in_w + x0] + fx * xp[y1 * g.in_w + x1];
        y[(p * g.out_h + oy) * g.out_w + ox] = (1 - fy) * top + fy * bot;
      }
}

void resize_bilinear_backward(const ResizeGeom& g, const double* dy, double* dx) {
  for (int64_t p = 0; p < g.planes; ++p)
    for (int64_t oy = 0; oy < g.out_h; ++oy)
      for (int64_t ox = 0; ox < g.out_w; ++ox) {
        int64_t y0, y1, x0, x1;
        double fy, fx;
        source_index(oy, g.in_h, g.out_h, y0, y1, fy);
        source_index(ox, g.in_w, g.out_w, x0, x1, fx);
        const double d = dy[(p * g.out_h + oy) * g.out_w + ox];
        double* dxp = dx + p * g.in_h * g.in_w;
        dxp[y0 * g.in_w + x0] += (1 - fy) * (1 - fx) * d;
        dxp[y0 * g.in_w + x1] += (1 - fy) * fx * d;
        dxp[y1 * g.in_w + x0] += fy * (1 - fx) * d;
        dxp[y1 * g.in_w + x1] += fy * fx * d;
      }
}

void softmax_rows(int64_t rows, int64_t cols, const double* x, double* y) {
  for (int64_t r = 0; r < rows; ++r) {
    double mx = -INFINITY;
    for (int64_t j = 0; j < cols; ++j) mx = std::max(mx, x[r * cols + j]);
    double sum = 0.0;
    std::vector<double> e(static_cast<size_t>(cols));
    for (int64_t j = 0; j < cols; ++j) {
      e[j] = std::exp(x[r * cols + j] - mx);
      sum += e[j];
    }
    for (int64_t j = 0; j < cols; ++j) y[r * cols + j] = e[j] / sum;
  }
}

}  // namespace sammese::kernels::reference
