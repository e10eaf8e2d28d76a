// SPDX-License-Identifier: Apache-2.0
#include "sammese/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "sammese/kernels.hpp"

namespace sammese::ag {

Tensor& Node::grad_buffer() {
  if (grad.empty() && value.numel() > 0) grad = Tensor(value.shape());
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var Var::constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Var(std::move(n));
}

Var Var::leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

namespace {

using Fn = std::function<void(Node&)>;

Var make(Tensor value, std::vector<Var> inputs, Fn fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool any = false;
  for (const Var& v : inputs) any = any || v.requires_grad();
  if (any) {
    n->requires_grad = true;
    for (const Var& v : inputs) {
      if (v.defined()) n->parents.push_back(v.node());
    }
    n->backward_fn = std::move(fn);
  }
  return Var(std::move(n));
}

bool wants(const Var& v) { return v.defined() && v.requires_grad(); }

void add_into(Node& dst, const Tensor& g) {
  Tensor& buf = dst.grad_buffer();
  for (int64_t i = 0; i < g.numel(); ++i) buf[i] += g[i];
}

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
  Tensor out(a.shape());
  const Tensor& x = a.value();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  Tensor y = out;
  return make(std::move(out), {a}, [a, y = std::move(y), dfdx](Node& self) {
    Tensor& ga = a.node()->grad_buffer();
    const Tensor& x = a.value();
    for (int64_t i = 0; i < x.numel(); ++i) ga[i] += self.grad[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace

void backward(const Var& root) {
  if (root.value().numel() != 1) {
    throw ShapeError("backward: root must be a scalar, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Release intermediate gradients; leaves keep theirs for the optimizer.
  for (Node* n : order) {
    if (n->backward_fn) n->grad = Tensor();
  }
}

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return make(std::move(out), {a, b}, [a, b](Node& self) {
    if (wants(a)) add_into(*a.node(), self.grad);
    if (wants(b)) add_into(*b.node(), self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make(std::move(out), {a, b}, [a, b](Node& self) {
    if (wants(a)) add_into(*a.node(), self.grad);
    if (wants(b)) {
      Tensor& g = b.node()->grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make(std::move(out), {a, b}, [a, b](Node& self) {
    if (wants(a)) {
      Tensor& g = a.node()->grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * b.value()[i];
    }
    if (wants(b)) {
      Tensor& g = b.node()->grad_buffer();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * a.value()[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return make(std::move(out), {a}, [a, s](Node& self) {
    Tensor& g = a.node()->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * s;
  });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make(Tensor({1}, s), {a}, [a](Node& self) {
    Tensor& g = a.node()->grad_buffer();
    const double d = self.grad[0];
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += d;
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().numel())); }

Var sum_squares(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  return make(Tensor({1}, s), {a}, [a](Node& self) {
    Tensor& g = a.node()->grad_buffer();
    const double d = self.grad[0];
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += 2.0 * a.value()[i] * d;
  });
}

Var weighted_sum(const Var& a, const Tensor& w) {
  if (w.numel() != a.value().numel()) throw ShapeError("weighted_sum: size mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) s += a.value()[i] * w[i];
  return make(Tensor({1}, s), {a}, [a, w](Node& self) {
    Tensor& g = a.node()->grad_buffer();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += w[i] * self.grad[0];
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (w.value().rank() != 2) throw ShapeError("linear: weight must be [in, out]");
  const int64_t in = w.dim(0), out = w.dim(1);
  if (x.value().rank() < 1 || x.dim(-1) != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  }
  if (b.defined() && b.shape() != Shape{out}) throw ShapeError("linear: bias must be [out]");
  const int64_t rows = x.value().numel() / in;
  Shape os = x.shape();
  os.back() = out;
  Tensor y(os);
  kernels::gemm({1, rows, out, in, false, false, 0, 0, 0}, x.value().data(), w.value().data(),
                y.data(), false);
  if (b.defined()) {
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < out; ++j) y[r * out + j] += b.value()[j];
  }
  return make(std::move(y), {x, w, b}, [x, w, b, rows, in, out](Node& self) {
    if (wants(x)) {
      // dx = dy W^T
      kernels::gemm({1, rows, in, out, false, true, 0, 0, 0}, self.grad.data(), w.value().data(),
                    x.node()->grad_buffer().data(), true);
    }
    if (wants(w)) {
      // dW = x^T dy
      kernels::gemm({1, in, out, rows, true, false, 0, 0, 0}, x.value().data(), self.grad.data(),
                    w.node()->grad_buffer().data(), true);
    }
    if (wants(b)) {
      Tensor& gb = b.node()->grad_buffer();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < out; ++j) gb[j] += self.grad[r * out + j];
    }
  });
}

Var bmm(const Var& a, const Var& b, bool trans_b) {
  if (a.value().rank() != 3 || b.value().rank() != 3 || a.dim(0) != b.dim(0)) {
    throw ShapeError("bmm: expected matching rank-3 operands, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const int64_t kb = trans_b ? b.dim(2) : b.dim(1);
  const int64_t n = trans_b ? b.dim(1) : b.dim(2);
  if (kb != k) throw ShapeError("bmm: inner dimension mismatch");
  Tensor y({batch, m, n});
  kernels::gemm({batch, m, n, k, false, trans_b, m * k, k * n, m * n}, a.value().data(),
                b.value().data(), y.data(), false);
  return make(std::move(y), {a, b}, [a, b, trans_b, batch, m, n, k](Node& self) {
    if (wants(a)) {
      // dA = dC op(B)^T
      kernels::gemm({batch, m, k, n, false, !trans_b, m * n, k * n, m * k}, self.grad.data(),
                    b.value().data(), a.node()->grad_buffer().data(), true);
    }
    if (wants(b)) {
      if (!trans_b) {
        // dB[k,n] = A^T dC
        kernels::gemm({batch, k, n, m, true, false, m * k, m * n, k * n}, a.value().data(),
                      self.grad.data(), b.node()->grad_buffer().data(), true);
      } else {
        // dB[n,k] = dC^T A
        kernels::gemm({batch, n, k, m, true, false, m * n, m * k, n * k}, self.grad.data(),
                      a.value().data(), b.node()->grad_buffer().data(), true);
      }
    }
  });
}

Var softmax(const Var& a) {
  const int64_t cols = a.dim(-1);
  const int64_t rows = a.value().numel() / cols;
  Tensor y(a.shape());
  kernels::softmax_rows(rows, cols, a.value().data(), y.data());
  Tensor ys = y;
  return make(std::move(y), {a}, [a, ys = std::move(ys), rows, cols](Node& self) {
    Tensor& g = a.node()->grad_buffer();
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int64_t j = 0; j < cols; ++j) dot += self.grad[r * cols + j] * ys[r * cols + j];
      for (int64_t j = 0; j < cols; ++j)
        g[r * cols + j] += ys[r * cols + j] * (self.grad[r * cols + j] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const int64_t c = x.dim(-1);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(c) + "]");
  }
  const int64_t rows = x.value().numel() / c;
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.value().data() + r * c;
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = is;
    for (int64_t j = 0; j < c; ++j) {
      const double h = (xr[j] - mu) * is;
      xhat[r * c + j] = h;
      y[r * c + j] = h * gamma.value()[j] + beta.value()[j];
    }
  }
  return make(std::move(y), {x, gamma, beta},
              [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
               c](Node& self) {
                if (wants(gamma) || wants(beta)) {
                  for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < c; ++j) {
                      if (wants(gamma))
                        gamma.node()->grad_buffer()[j] += self.grad[r * c + j] * xhat[r * c + j];
                      if (wants(beta)) beta.node()->grad_buffer()[j] += self.grad[r * c + j];
                    }
                }
                if (wants(x)) {
                  Tensor& gx = x.node()->grad_buffer();
                  const double inv_c = 1.0 / static_cast<double>(c);
                  for (int64_t r = 0; r < rows; ++r) {
                    double s1 = 0.0, s2 = 0.0;
                    for (int64_t j = 0; j < c; ++j) {
                      const double dh = self.grad[r * c + j] * gamma.value()[j];
                      s1 += dh;
                      s2 += dh * xhat[r * c + j];
                    }
                    const double is = inv_std[static_cast<size_t>(r)];
                    for (int64_t j = 0; j < c; ++j) {
                      const double dh = self.grad[r * c + j] * gamma.value()[j];
                      gx[r * c + j] += is * (dh - inv_c * s1 - xhat[r * c + j] * inv_c * s2);
                    }
                  }
                }
              });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int64_t stride, int64_t pad) {
  if (x.value().rank() != 4 || w.value().rank() != 4 || x.dim(1) != w.dim(1) ||
      w.dim(2) != w.dim(3)) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  }
  kernels::ConvGeom g{x.dim(0), x.dim(1), w.dim(0), x.dim(2), x.dim(3), w.dim(2), stride, pad};
  if (g.out_h() <= 0 || g.out_w() <= 0) throw ShapeError("conv2d: empty output");
  if (bias.defined() && bias.shape() != Shape{g.out_ch}) throw ShapeError("conv2d: bad bias");
  Tensor y({g.batch, g.out_ch, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, x.value().data(), w.value().data(),
                          bias.defined() ? bias.value().data() : nullptr, y.data());
  return make(std::move(y), {x, w, bias}, [x, w, bias, g](Node& self) {
    if (wants(x)) {
      kernels::conv2d_backward_input(g, self.grad.data(), w.value().data(),
                                     x.node()->grad_buffer().data());
    }
    if (wants(w) || wants(bias)) {
      // Weight and bias gradients are computed together; discard the unwanted half.
      Tensor dw(w.shape());
      Tensor db({g.out_ch});
      kernels::conv2d_backward_weight(g, x.value().data(), self.grad.data(), dw.data(),
                                      db.data());
      if (wants(w)) add_into(*w.node(), dw);
      if (wants(bias)) add_into(*bias.node(), db);
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& bias, int64_t stride) {
  if (x.value().rank() != 4 || w.value().rank() != 4 || x.dim(1) != w.dim(0) ||
      w.dim(2) != w.dim(3)) {
    throw ShapeError("conv_transpose2d: input " + shape_str(x.shape()) +
                     " incompatible with weight " + shape_str(w.shape()));
  }
  const int64_t k = w.dim(2);
  const int64_t oh = (x.dim(2) - 1) * stride + k;
  const int64_t ow = (x.dim(3) - 1) * stride + k;
  // The equivalent forward convolution maps the output back to the input.
  kernels::ConvGeom g{x.dim(0), w.dim(1), w.dim(0), oh, ow, k, stride, 0};
  Tensor y({x.dim(0), w.dim(1), oh, ow});
  kernels::conv2d_backward_input(g, x.value().data(), w.value().data(), y.data());
  if (bias.defined()) {
    if (bias.shape() != Shape{w.dim(1)}) throw ShapeError("conv_transpose2d: bad bias");
    for (int64_t b = 0; b < y.dim(0); ++b)
      for (int64_t c = 0; c < y.dim(1); ++c)
        for (int64_t i = 0; i < oh * ow; ++i) y[((b * y.dim(1)) + c) * oh * ow + i] +=
            bias.value()[c];
  }
  return make(std::move(y), {x, w, bias}, [x, w, bias, g](Node& self) {
    if (wants(x)) {
      Tensor dx(x.shape());
      kernels::conv2d_forward(g, self.grad.data(), w.value().data(), nullptr, dx.data());
      add_into(*x.node(), dx);
    }
    if (wants(w)) {
      kernels::conv2d_backward_weight(g, self.grad.data(), x.value().data(),
                                      w.node()->grad_buffer().data(), nullptr);
    }
    if (wants(bias)) {
      Tensor& gb = bias.node()->grad_buffer();
      const int64_t plane = g.in_h * g.in_w;
      for (int64_t b = 0; b < g.batch; ++b)
        for (int64_t c = 0; c < g.in_ch; ++c)
          for (int64_t i = 0; i < plane; ++i) gb[c] += self.grad[(b * g.in_ch + c) * plane + i];
    }
  });
}

Var resize_bilinear(const Var& x, int64_t out_h, int64_t out_w) {
  if (x.value().rank() != 4) throw ShapeError("resize_bilinear: expected [b, c, h, w]");
  kernels::ResizeGeom g{x.dim(0) * x.dim(1), x.dim(2), x.dim(3), out_h, out_w};
  Tensor y({x.dim(0), x.dim(1), out_h, out_w});
  kernels::resize_bilinear_forward(g, x.value().data(), y.data());
  return make(std::move(y), {x}, [x, g](Node& self) {
    kernels::resize_bilinear_backward(g, self.grad.data(), x.node()->grad_buffer().data());
  });
}

Var reshape(const Var& x, Shape s) {
  Tensor y = x.value().reshaped(std::move(s));
  return make(std::move(y), {x}, [x](Node& self) { add_into(*x.node(), self.grad); });
}

Var transpose12(const Var& x) {
  if (x.value().rank() != 3) throw ShapeError("transpose12: expected rank 3");
  const int64_t b = x.dim(0), m = x.dim(1), n = x.dim(2);
  Tensor y({b, n, m});
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) y[(bi * n + j) * m + i] = x.value()[(bi * m + i) * n + j];
  return make(std::move(y), {x}, [x, b, m, n](Node& self) {
    Tensor& g = x.node()->grad_buffer();
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) g[(bi * m + i) * n + j] += self.grad[(bi * n + j) * m + i];
  });
}

Var grid_to_tokens(const Var& x) {
  if (x.value().rank() != 4) throw ShapeError("grid_to_tokens: expected [b, c, h, w]");
  return transpose12(reshape(x, {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)}));
}

Var tokens_to_grid(const Var& x, int64_t h, int64_t w) {
  if (x.value().rank() != 3 || x.dim(1) != h * w) {
    throw ShapeError("tokens_to_grid: " + shape_str(x.shape()) + " is not a " +
                     std::to_string(h) + "x" + std::to_string(w) + " token grid");
  }
  return reshape(transpose12(x), {x.dim(0), x.dim(2), h, w});
}

Var concat1(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || sa.size() < 2 || sa[0] != sb[0] ||
      !std::equal(sa.begin() + 2, sa.end(), sb.begin() + 2)) {
    throw ShapeError("concat1: incompatible " + shape_str(sa) + " and " + shape_str(sb));
  }
  const int64_t outer = sa[0];
  const int64_t ia = a.value().numel() / outer;
  const int64_t ib = b.value().numel() / outer;
  Shape so = sa;
  so[1] = sa[1] + sb[1];
  Tensor y(so);
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(a.value().data() + o * ia, ia, y.data() + o * (ia + ib));
    std::copy_n(b.value().data() + o * ib, ib, y.data() + o * (ia + ib) + ia);
  }
  return make(std::move(y), {a, b}, [a, b, outer, ia, ib](Node& self) {
    for (int64_t o = 0; o < outer; ++o) {
      if (wants(a)) {
        Tensor& g = a.node()->grad_buffer();
        for (int64_t i = 0; i < ia; ++i) g[o * ia + i] += self.grad[o * (ia + ib) + i];
      }
      if (wants(b)) {
        Tensor& g = b.node()->grad_buffer();
        for (int64_t i = 0; i < ib; ++i) g[o * ib + i] += self.grad[o * (ia + ib) + ia + i];
      }
    }
  });
}

Var slice1(const Var& x, int64_t start, int64_t len) {
  const Shape& s = x.shape();
  if (s.size() < 2 || start < 0 || len < 0 || start + len > s[1]) {
    throw ShapeError("slice1: range out of bounds for " + shape_str(s));
  }
  const int64_t outer = s[0];
  const int64_t inner = x.value().numel() / (s[0] * std::max<int64_t>(s[1], 1));
  Shape so = s;
  so[1] = len;
  Tensor y(so);
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(x.value().data() + (o * s[1] + start) * inner, len * inner,
                y.data() + o * len * inner);
  return make(std::move(y), {x}, [x, outer, inner, start, len, n1 = s[1]](Node& self) {
    Tensor& g = x.node()->grad_buffer();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < len * inner; ++i)
        g[(o * n1 + start) * inner + i] += self.grad[o * len * inner + i];
  });
}

Var broadcast_batch(const Var& x, int64_t batch) {
  if (x.value().rank() != 2) throw ShapeError("broadcast_batch: expected [n, c]");
  const int64_t n = x.value().numel();
  Tensor y({batch, x.dim(0), x.dim(1)});
  for (int64_t b = 0; b < batch; ++b) std::copy_n(x.value().data(), n, y.data() + b * n);
  return make(std::move(y), {x}, [x, batch, n](Node& self) {
    Tensor& g = x.node()->grad_buffer();
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t i = 0; i < n; ++i) g[i] += self.grad[b * n + i];
  });
}

Var broadcast_channels(const Var& v, int64_t batch, int64_t h, int64_t w) {
  if (v.value().rank() != 1) throw ShapeError("broadcast_channels: expected [c]");
  const int64_t c = v.dim(0);
  Tensor y({batch, c, h, w});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t ci = 0; ci < c; ++ci)
      std::fill_n(y.data() + (b * c + ci) * h * w, h * w, v.value()[ci]);
  return make(std::move(y), {v}, [v, batch, c, h, w](Node& self) {
    Tensor& g = v.node()->grad_buffer();
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < h * w; ++i) g[ci] += self.grad[(b * c + ci) * h * w + i];
  });
}

Var split_heads(const Var& x, int64_t heads) {
  if (x.value().rank() != 3 || x.dim(2) % heads != 0) {
    throw ShapeError("split_heads: width not divisible by head count");
  }
  const int64_t b = x.dim(0), t = x.dim(1), d = x.dim(2) / heads;
  if (heads == 1) return x;
  Tensor y({b * heads, t, d});
  auto src = [=](int64_t bi, int64_t h, int64_t ti, int64_t j) {
    return (bi * t + ti) * heads * d + h * d + j;
  };
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t ti = 0; ti < t; ++ti)
        for (int64_t j = 0; j < d; ++j)
          y[((bi * heads + h) * t + ti) * d + j] = x.value()[src(bi, h, ti, j)];
  return make(std::move(y), {x}, [x, b, heads, t, d, src](Node& self) {
    Tensor& g = x.node()->grad_buffer();
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t h = 0; h < heads; ++h)
        for (int64_t ti = 0; ti < t; ++ti)
          for (int64_t j = 0; j < d; ++j)
            g[src(bi, h, ti, j)] += self.grad[((bi * heads + h) * t + ti) * d + j];
  });
}

Var merge_heads(const Var& x, int64_t heads) {
  if (x.value().rank() != 3 || x.dim(0) % heads != 0) {
    throw ShapeError("merge_heads: batch not divisible by head count");
  }
  if (heads == 1) return x;
  const int64_t b = x.dim(0) / heads, t = x.dim(1), d = x.dim(2);
  Tensor y({b, t, heads * d});
  auto dst = [=](int64_t bi, int64_t h, int64_t ti, int64_t j) {
    return (bi * t + ti) * heads * d + h * d + j;
  };
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t ti = 0; ti < t; ++ti)
        for (int64_t j = 0; j < d; ++j)
          y[dst(bi, h, ti, j)] = x.value()[((bi * heads + h) * t + ti) * d + j];
  return make(std::move(y), {x}, [x, b, heads, t, d, dst](Node& self) {
    Tensor& g = x.node()->grad_buffer();
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t h = 0; h < heads; ++h)
        for (int64_t ti = 0; ti < t; ++ti)
          for (int64_t j = 0; j < d; ++j)
            g[((bi * heads + h) * t + ti) * d + j] += self.grad[dst(bi, h, ti, j)];
  });
}

Var bce_loss(const Var& m, const Tensor& g, double eps) {
  if (m.value().numel() != g.numel()) {
    throw ShapeError("bce_loss: prediction " + shape_str(m.shape()) + " vs target " +
                     shape_str(g.shape()));
  }
  const int64_t n = g.numel();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double p = std::clamp(m.value()[i], eps, 1.0 - eps);
    total += -(g[i] * std::log(p) + (1.0 - g[i]) * std::log(1.0 - p));
  }
  return make(Tensor({1}, total / static_cast<double>(n)), {m}, [m, g, eps, n](Node& self) {
    Tensor& gm = m.node()->grad_buffer();
    const double d = self.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      const double raw = m.value()[i];
      if (raw < eps || raw > 1.0 - eps) continue;
      gm[i] += d * (-g[i] / raw + (1.0 - g[i]) / (1.0 - raw));
    }
  });
}

Var dice_loss(const Var& m, const Tensor& g, double smooth) {
  if (m.value().numel() != g.numel()) {
    throw ShapeError("dice_loss: prediction " + shape_str(m.shape()) + " vs target " +
                     shape_str(g.shape()));
  }
  const int64_t n = g.numel();
  double inter = 0.0, denom = smooth;
  for (int64_t i = 0; i < n; ++i) {
    inter += m.value()[i] * g[i];
    denom += m.value()[i] + g[i];
  }
  const double numer = 2.0 * inter + smooth;
  return make(Tensor({1}, 1.0 - numer / denom), {m}, [m, g, n, numer, denom](Node& self) {
    Tensor& gm = m.node()->grad_buffer();
    const double d = self.grad[0];
    for (int64_t i = 0; i < n; ++i) gm[i] += -d * (2.0 * g[i] * denom - numer) / (denom * denom);
  });
}

}  // namespace sammese::ag
