#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace hintnart {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major double array, the single carrier for activations,
// parameters and gradients. product(shape) == data.size() always.
struct NdArray {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  NdArray() = default;
  explicit NdArray(std::vector<std::size_t> s);
  NdArray(std::vector<std::size_t> s, std::vector<double> d);
  NdArray(std::initializer_list<std::size_t> s, std::initializer_list<double> d);

  static NdArray zeros(std::vector<std::size_t> s) { return NdArray(std::move(s)); }
  static NdArray full(std::vector<std::size_t> s, double v);
  static NdArray scalar(double v) { return NdArray({std::size_t{1}}, {v}); }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const NdArray& o) const { return shape == o.shape; }
  bool all_finite() const;

  NdArray reshaped(std::vector<std::size_t> s) const;

  std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
bool bit_equal(const NdArray& a, const NdArray& b);

}  // namespace hintnart
