// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sammese {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major array of doubles. Rank and layout are carried by the shape;
/// FeatureMaps are [batch, channels, height, width], TokenSequences are
/// [batch, tokens, channels], SaliencyMaps are [height, width] or [b, 1, h, w].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const;
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(int64_t i, int64_t j);
  double at(int64_t i, int64_t j) const;
  double& at(int64_t i, int64_t j, int64_t k);
  double at(int64_t i, int64_t j, int64_t k) const;
  double& at(int64_t i, int64_t j, int64_t k, int64_t l);
  double at(int64_t i, int64_t j, int64_t k, int64_t l) const;

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape s) const;
  void fill(double v);
  bool all_finite() const;

  /// Bitwise equality of shape and contents.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
void require_shape(const Tensor& t, const Shape& expected, const char* what);

}  // namespace sammese
