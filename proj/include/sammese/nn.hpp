// SPDX-License-Identifier: Apache-2.0
//
// Small layer structs built from registry parameters. Layers own no state
// beyond their parameter handles; forwards are pure functions of the inputs.
#pragma once

#include <string>

#include "sammese/autograd.hpp"
#include "sammese/registry.hpp"

namespace sammese::nn {

/// Context passed to layer factories.
struct Builder {
  ParameterRegistry& registry;
  uint64_t seed;
  bool trainable;

  ag::Var param(const std::string& name, const Shape& shape, const Init& init) const {
    return registry.add(name, init.make(shape, seed, name), trainable);
  }
};

struct Linear {
  ag::Var weight;  // [in, out]
  ag::Var bias;    // [out]

  static Linear make(const Builder& b, const std::string& name, int64_t in, int64_t out,
                     bool with_bias = true);
  static Linear make(const Builder& b, const std::string& name, int64_t in, int64_t out,
                     const Init& weight_init, bool with_bias = true);
  ag::Var operator()(const ag::Var& x) const { return ag::linear(x, weight, bias); }
};

struct Conv2d {
  ag::Var weight;  // [out, in, k, k]
  ag::Var bias;    // [out]
  int64_t stride = 1;
  int64_t pad = 0;

  /// "Same" padding for odd kernels when pad < 0.
  static Conv2d make(const Builder& b, const std::string& name, int64_t in, int64_t out,
                     int64_t kernel, int64_t stride = 1, int64_t pad = -1);
  ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }
  int64_t kernel() const { return weight.dim(2); }
};

struct ConvTranspose2d {
  ag::Var weight;  // [in, out, k, k]
  ag::Var bias;
  int64_t stride = 2;

  static ConvTranspose2d make(const Builder& b, const std::string& name, int64_t in, int64_t out,
                              int64_t kernel, int64_t stride);
  ag::Var operator()(const ag::Var& x) const {
    return ag::conv_transpose2d(x, weight, bias, stride);
  }
};

struct LayerNorm {
  ag::Var gamma, beta;
  static LayerNorm make(const Builder& b, const std::string& name, int64_t channels);
  ag::Var operator()(const ag::Var& x) const { return ag::layer_norm(x, gamma, beta); }
};

struct Mlp {
  Linear fc1, fc2;
  static Mlp make(const Builder& b, const std::string& name, int64_t in, int64_t hidden,
                  int64_t out);
  ag::Var operator()(const ag::Var& x) const { return fc2(ag::gelu(fc1(x))); }
};

/// Scaled dot-product attention with learned Q/K/V projections over token
/// sequences [b, t, c]. Heads split the projected width. There is no output
/// projection unless `with_output` is set, so zero value weights give a zero
/// result.
struct Attention {
  Linear q, k, v;
  Linear out;  // weight undefined when absent
  int64_t heads = 1;
  int64_t inner = 0;

  static Attention make(const Builder& b, const std::string& name, int64_t query_dim,
                        int64_t kv_dim, int64_t inner_dim, int64_t heads, bool with_output);

  /// queries: [b, tq, query_dim]; keys/values: [b, tk, kv_dim].
  ag::Var operator()(const ag::Var& queries, const ag::Var& keys, const ag::Var& values) const;
  ag::Var operator()(const ag::Var& queries, const ag::Var& context) const {
    return (*this)(queries, context, context);
  }
};

}  // namespace sammese::nn
