#include "hct/tensor.hpp"

#include <sstream>

namespace hct {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::int64_t numel_of(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

static void check_shape(const std::vector<int>& shape) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor shape must be positive: " + shape_str(shape));
  }
}

Tensor Tensor::zeros(std::vector<int> shape) {
  check_shape(shape);
  Tensor t;
  t.data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.data) v = value;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
  check_shape(shape);
  if (numel_of(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("tensor data size " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(data);
  return t;
}

int Tensor::dim(int i) const {
  if (i < 0 || i >= ndim()) {
    throw ShapeError("dimension index " + std::to_string(i) + " out of range for " +
                     shape_str(shape));
  }
  return shape[static_cast<std::size_t>(i)];
}

double& Tensor::at(int i, int j) {
  return data[static_cast<std::size_t>(i) * shape[1] + j];
}

double Tensor::at(int i, int j) const {
  return data[static_cast<std::size_t>(i) * shape[1] + j];
}

double& Tensor::at(int i, int j, int k) {
  return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
}

double Tensor::at(int i, int j, int k) const {
  return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
}

}  // namespace hct
