// SPDX-License-Identifier: Apache-2.0
#include "sammese/nn.hpp"

#include <cmath>

namespace sammese::nn {

Linear Linear::make(const Builder& b, const std::string& name, int64_t in, int64_t out,
                    bool with_bias) {
  return make(b, name, in, out, Init::fan_in(in), with_bias);
}

Linear Linear::make(const Builder& b, const std::string& name, int64_t in, int64_t out,
                    const Init& weight_init, bool with_bias) {
  Linear l;
  l.weight = b.param(name + ".weight", {in, out}, weight_init);
  if (with_bias) l.bias = b.param(name + ".bias", {out}, Init::zeros());
  return l;
}

Conv2d Conv2d::make(const Builder& b, const std::string& name, int64_t in, int64_t out,
                    int64_t kernel, int64_t stride, int64_t pad) {
  Conv2d c;
  c.weight = b.param(name + ".weight", {out, in, kernel, kernel}, Init::fan_in(in * kernel * kernel));
  c.bias = b.param(name + ".bias", {out}, Init::zeros());
  c.stride = stride;
  c.pad = pad < 0 ? kernel / 2 : pad;
  return c;
}

ConvTranspose2d ConvTranspose2d::make(const Builder& b, const std::string& name, int64_t in,
                                      int64_t out, int64_t kernel, int64_t stride) {
  ConvTranspose2d c;
  c.weight = b.param(name + ".weight", {in, out, kernel, kernel}, Init::fan_in(in));
  c.bias = b.param(name + ".bias", {out}, Init::zeros());
  c.stride = stride;
  return c;
}

LayerNorm LayerNorm::make(const Builder& b, const std::string& name, int64_t channels) {
  return {b.param(name + ".gamma", {channels}, Init::ones()),
          b.param(name + ".beta", {channels}, Init::zeros())};
}

Mlp Mlp::make(const Builder& b, const std::string& name, int64_t in, int64_t hidden,
              int64_t out) {
  return {Linear::make(b, name + ".fc1", in, hidden), Linear::make(b, name + ".fc2", hidden, out)};
}

Attention Attention::make(const Builder& b, const std::string& name, int64_t query_dim,
                          int64_t kv_dim, int64_t inner_dim, int64_t heads, bool with_output) {
  if (heads < 1 || inner_dim % heads != 0) {
    throw std::invalid_argument(name + ": inner width " + std::to_string(inner_dim) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
  Attention a;
  a.q = Linear::make(b, name + ".q", query_dim, inner_dim);
  a.k = Linear::make(b, name + ".k", kv_dim, inner_dim);
  a.v = Linear::make(b, name + ".v", kv_dim, inner_dim);
  if (with_output) a.out = Linear::make(b, name + ".out", inner_dim, query_dim);
  a.heads = heads;
  a.inner = inner_dim;
  return a;
}

ag::Var Attention::operator()(const ag::Var& queries, const ag::Var& keys,
                              const ag::Var& values) const {
  const ag::Var qh = ag::split_heads(q(queries), heads);
  const ag::Var kh = ag::split_heads(k(keys), heads);
  const ag::Var vh = ag::split_heads(v(values), heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(inner / heads));
  const ag::Var attn = ag::softmax(ag::scale(ag::bmm(qh, kh, true), scale));
  ag::Var y = ag::merge_heads(ag::bmm(attn, vh, false), heads);
  if (out.weight.defined()) y = out(y);
  return y;
}

}  // namespace sammese::nn
