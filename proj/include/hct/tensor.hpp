#pragma once

// Dense row-major f64 tensor. This is the only numeric container in the
// project; integer shapes, no strides, no broadcasting. Gradients live in
// the `grad` vector and are filled in by Tape::backward for leaves that
// were registered with requires_grad.

#include <cstdint>
#include <string>
#include <vector>

#include "hct/common.hpp"

namespace hct {

std::string shape_str(const std::vector<int>& shape);
std::int64_t numel_of(const std::vector<int>& shape);

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor from(std::vector<int> shape, std::vector<double> data);

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const;

  // 2-d / 3-d accessors for the common token-matrix and grid layouts.
  double& at(int i, int j);
  double at(int i, int j) const;
  double& at(int i, int j, int k);
  double at(int i, int j, int k) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

}  // namespace hct
