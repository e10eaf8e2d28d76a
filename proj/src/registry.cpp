// SPDX-License-Identifier: Apache-2.0
#include "sammese/registry.hpp"

#include <cmath>
#include <stdexcept>

#include "sammese/rng.hpp"

namespace sammese {

std::string ParameterRegistry::module_of(const std::string& name) {
  const auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

bool ParameterRegistry::module_is_frozen(const std::string& module) {
  return module == "foundation" || module == "semantic_encoder";
}

ag::Var ParameterRegistry::add(const std::string& name, Tensor init, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  std::string module = module_of(name);
  if (trainable && module_is_frozen(module)) {
    throw std::invalid_argument("parameter " + name + " belongs to frozen module " + module);
  }
  if (!init.all_finite()) throw std::invalid_argument("non-finite initial value for " + name);
  Entry e{name, std::move(module), ag::Var::leaf(std::move(init), trainable), trainable};
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
  return entries_.back().var;
}

const ParameterRegistry::Entry& ParameterRegistry::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second];
}

std::vector<const ParameterRegistry::Entry*> ParameterRegistry::trainable() const {
  std::vector<const Entry*> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(&e);
  return out;
}

std::vector<const ParameterRegistry::Entry*> ParameterRegistry::frozen() const {
  std::vector<const Entry*> out;
  for (const auto& e : entries_)
    if (!e.trainable) out.push_back(&e);
  return out;
}

int64_t ParameterRegistry::trainable_count() const {
  int64_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.var.value().numel();
  return n;
}

int64_t ParameterRegistry::frozen_count() const {
  int64_t n = 0;
  for (const auto& e : entries_)
    if (!e.trainable) n += e.var.value().numel();
  return n;
}

void ParameterRegistry::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

Init Init::fan_in(int64_t fan) {
  return uniform(std::sqrt(3.0 / static_cast<double>(std::max<int64_t>(fan, 1))));
}

Tensor Init::make(const Shape& shape, uint64_t seed, const std::string& name) const {
  Tensor t(shape);
  switch (kind) {
    case Kind::zeros:
      break;
    case Kind::ones:
      t.fill(1.0);
      break;
    case Kind::uniform: {
      Rng rng(Rng::derive(seed, name));
      for (double& v : t.values()) v = rng.uniform(-scale, scale);
      break;
    }
    case Kind::normal: {
      Rng rng(Rng::derive(seed, name));
      for (double& v : t.values()) v = scale * rng.normal();
      break;
    }
  }
  return t;
}

}  // namespace sammese
