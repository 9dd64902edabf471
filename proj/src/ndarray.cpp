#include "hintnart/ndarray.hpp"

#include <cmath>
#include <cstring>

namespace hintnart {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

NdArray::NdArray(std::vector<std::size_t> s)
    : shape(std::move(s)), data(shape_numel(shape), 0.0) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("NdArray: zero extent in " + shape_str());
  }
}

NdArray::NdArray(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("NdArray: shape/data size mismatch");
  }
}

NdArray::NdArray(std::initializer_list<std::size_t> s, std::initializer_list<double> d)
    : NdArray(std::vector<std::size_t>(s), std::vector<double>(d)) {}

NdArray NdArray::full(std::vector<std::size_t> s, double v) {
  NdArray a(std::move(s));
  for (double& x : a.data) x = v;
  return a;
}

bool NdArray::all_finite() const {
  for (double x : data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

NdArray NdArray::reshaped(std::vector<std::size_t> s) const {
  if (shape_numel(s) != data.size()) {
    throw DimensionError("reshape: element count mismatch");
  }
  return NdArray(std::move(s), data);
}

std::string NdArray::shape_str() const {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

bool bit_equal(const NdArray& a, const NdArray& b) {
  if (a.shape != b.shape) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace hintnart
