// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vtalign {

/// Row-major dense matrix. All kernels are templated on the scalar so the
/// same code path runs in float for training and double for gradient checks.
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Storage type for everything that touches disk: 32-bit floats, row-major.
using Matrix = Mat<float>;

/// Bad input, dangling reference, shape mismatch. The CLI maps this to exit 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient. The CLI maps this to exit 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-position validity flags for a padded stack; false marks padding.
class Mask {
 public:
  Mask() = default;
  explicit Mask(std::vector<bool> valid) : valid_(std::move(valid)) {}

  static Mask all_valid(std::size_t n) { return Mask(std::vector<bool>(n, true)); }

  /// First `valid` positions set, remaining `total - valid` padded.
  static Mask prefix(std::size_t valid, std::size_t total) {
    std::vector<bool> v(total, false);
    for (std::size_t i = 0; i < valid && i < total; ++i) v[i] = true;
    return Mask(std::move(v));
  }

  std::size_t size() const { return valid_.size(); }
  bool operator[](std::size_t i) const { return valid_[i]; }

  std::size_t count_valid() const {
    std::size_t n = 0;
    for (bool b : valid_) n += b ? 1 : 0;
    return n;
  }

 private:
  std::vector<bool> valid_;
};

template <class T>
bool all_finite(const Mat<T>& m) {
  return m.allFinite();
}

}  // namespace vtalign
