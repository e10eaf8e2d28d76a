// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sammese/autograd.hpp"

namespace sammese {

/// Named learnable arrays partitioned into frozen and trainable sets.
///
/// The owning module is the name's first dot-separated component. Modules of
/// the foundation segmenter and the semantic encoder are frozen by policy and
/// cannot register trainable parameters.
class ParameterRegistry {
 public:
  struct Entry {
    std::string name;
    std::string module;
    ag::Var var;
    bool trainable = false;
  };

  /// Registers a parameter; the name must be unique.
  ag::Var add(const std::string& name, Tensor init, bool trainable);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Entry& entry(const std::string& name) const;
  ag::Var get(const std::string& name) const { return entry(name).var; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<const Entry*> trainable() const;
  std::vector<const Entry*> frozen() const;

  int64_t trainable_count() const;
  int64_t frozen_count() const;

  void zero_grad();

  static std::string module_of(const std::string& name);
  static bool module_is_frozen(const std::string& module);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
};

/// Weight initialisation drawn from a per-parameter stream keyed by
/// (seed, parameter name).
struct Init {
  enum class Kind { zeros, ones, uniform, normal };
  Kind kind = Kind::uniform;
  double scale = 0.0;  // half-width for uniform, std for normal

  static Init zeros() { return {Kind::zeros, 0.0}; }
  static Init ones() { return {Kind::ones, 0.0}; }
  static Init uniform(double a) { return {Kind::uniform, a}; }
  static Init normal(double s) { return {Kind::normal, s}; }
  /// U(-sqrt(3 / fan_in), sqrt(3 / fan_in)): unit gain, variance 1 / fan_in.
  static Init fan_in(int64_t fan);

  Tensor make(const Shape& shape, uint64_t seed, const std::string& name) const;
};

}  // namespace sammese
