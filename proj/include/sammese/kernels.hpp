// SPDX-License-Identifier: Apache-2.0
//
// Numeric kernels used by the autograd ops. Each kernel exists twice:
// `sammese::kernels` holds the OpenMP-parallel versions used at runtime and
// `sammese::kernels::reference` holds plain serial loops kept as a test oracle
// and benchmark baseline.
//
// Parallel kernels partition work by output element and accumulate each output
// in a fixed serial order, so results do not depend on the thread count.
#pragma once

#include <cstdint>

namespace sammese::kernels {

/// Batched row-major matrix product: for each batch entry,
/// C[m,n] (+)= op(A) * op(B) where op(A) is [m,k] and op(B) is [k,n].
/// A is stored as [m,k] (or [k,m] when trans_a), B as [k,n] (or [n,k] when trans_b).
struct GemmShape {
  int64_t batch = 1;
  int64_t m = 0, n = 0, k = 0;
  bool trans_a = false;
  bool trans_b = false;
  /// Element strides between batch entries; 0 broadcasts the operand.
  int64_t stride_a = 0, stride_b = 0, stride_c = 0;
};

/// NCHW convolution with square kernel, equal stride and zero padding on both axes.
struct ConvGeom {
  int64_t batch = 1;
  int64_t in_ch = 0, out_ch = 0;
  int64_t in_h = 0, in_w = 0;
  int64_t kernel = 1, stride = 1, pad = 0;
  int64_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int64_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

/// Bilinear resampling with half-pixel centres (align_corners = false), edge clamped.
struct ResizeGeom {
  int64_t planes = 1;  // batch * channels
  int64_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
};

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate);

/// w: [out_ch, in_ch, k, k]; bias may be null. y is overwritten.
void conv2d_forward(const ConvGeom& g, const double* x, const double* w, const double* bias,
                    double* y);
/// dx += conv2d^T(dy).
void conv2d_backward_input(const ConvGeom& g, const double* dy, const double* w, double* dx);
/// dw += x (*) dy; db += sum(dy) when db is non-null.
void conv2d_backward_weight(const ConvGeom& g, const double* x, const double* dy, double* dw,
                            double* db);

void resize_bilinear_forward(const ResizeGeom& g, const double* x, double* y);
/// dx += resize^T(dy).
void resize_bilinear_backward(const ResizeGeom& g, const double* dy, double* dx);

/// Row-wise numerically stable softmax.
void softmax_rows(int64_t rows, int64_t cols, const double* x, double* y);

namespace reference {

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate);
void conv2d_forward(const ConvGeom& g, const double* x, const double* w, const double* bias,
                    double* y);
void conv2d_backward_input(const ConvGeom& g, const double* dy, const double* w, double* dx);
void conv2d_backward_weight(const ConvGeom& g, const double* x, const double* dy, double* dw,
                            double* db);
void resize_bilinear_forward(const ResizeGeom& g, const double* x, double* y);
void resize_bilinear_backward(const ResizeGeom& g, const double* dy, double* dx);
void softmax_rows(int64_t rows, int64_t cols, const double* x, double* y);

}  // namespace reference

/// Source index pair and weight for one output coordinate of a bilinear resize.
struct BilinearTap {
  int64_t i0, i1;
  double w0, w1;
};
BilinearTap bilinear_tap(int64_t out_index, int64_t in_size, int64_t out_size);

}  // namespace sammese::kernels
