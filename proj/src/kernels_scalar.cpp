#include "hintnart/kernels.hpp"

#include <algorithm>

namespace hintnart::kernels {
namespace {

void add_k(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_k(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_k(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_k(const double* a, double c, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

void axpy_k(double c, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + c * x[i];
}

double dot_k(const double* a, const double* b, std::size_t n) {
  double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    p0 += a[i] * b[i];
    p1 += a[i + 1] * b[i + 1];
    p2 += a[i + 2] * b[i + 2];
    p3 += a[i + 3] * b[i + 3];
  }
  double s = (p0 + p2) + (p1 + p3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_k(const double* a, std::size_t n) {
  double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    p0 += a[i];
    p1 += a[i + 1];
    p2 += a[i + 2];
    p3 += a[i + 3];
  }
  double s = (p0 + p2) + (p1 + p3);
  for (; i < n; ++i) s += a[i];
  return s;
}

double sqsum_k(const double* a, std::size_t n) {
  double p0 = 0.0, p1 = 0.0, p2 = 0.0, p3 = 0.0;
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    p0 += a[i] * a[i];
    p1 += a[i + 1] * a[i + 1];
    p2 += a[i + 2] * a[i + 2];
    p3 += a[i + 3] * a[i + 3];
  }
  double s = (p0 + p2) + (p1 + p3);
  for (; i < n; ++i) s += a[i] * a[i];
  return s;
}

double maxval_k(const double* a, std::size_t n) {
  double m = a[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, a[i]);
  return m;
}

void matmul_k(const double* a, const double* b, double* c,
              std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

void matmul_nt_k(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] = dot_k(arow, b + j * k, k);
    }
  }
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend backend{
      "scalar", add_k,   sub_k,    mul_k,    scale_k,  axpy_k,
      dot_k,    sum_k,   sqsum_k,  maxval_k, matmul_k, matmul_nt_k,
  };
  return backend;
}

}  // namespace hintnart::kernels
