#if defined(__aarch64__)

#include "hintnart/kernels.hpp"

#include <arm_neon.h>

#include <algorithm>

// Two float64x2 accumulators emulate the four-lane contract: accA holds
// partials p0,p1 and accB holds p2,p3, so accA+accB = {p0+p2, p1+p3} and the
// final lane add reproduces (p0+p2)+(p1+p3) exactly. No vfma anywhere.

namespace hintnart::kernels {
namespace {

inline double hsum4(float64x2_t acc_a, float64x2_t acc_b) {
  const float64x2_t s2 = vaddq_f64(acc_a, acc_b);
  return vgetq_lane_f64(s2, 0) + vgetq_lane_f64(s2, 1);
}

void add_k(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_k(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_k(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_k(const double* a, double c, double* out, std::size_t n) {
  const float64x2_t vc = vdupq_n_f64(c);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vc));
  }
  for (; i < n; ++i) out[i] = a[i] * c;
}

void axpy_k(double c, const double* x, double* y, std::size_t n) {
  const float64x2_t vc = vdupq_n_f64(c);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t prod = vmulq_f64(vc, vld1q_f64(x + i));
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + c * x[i];
}

double dot_k(const double* a, const double* b, std::size_t n) {
  float64x2_t acc_a = vdupq_n_f64(0.0), acc_b = vdupq_n_f64(0.0);
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    acc_a = vaddq_f64(acc_a, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    acc_b = vaddq_f64(acc_b, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double s = hsum4(acc_a, acc_b);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_k(const double* a, std::size_t n) {
  float64x2_t acc_a = vdupq_n_f64(0.0), acc_b = vdupq_n_f64(0.0);
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    acc_a = vaddq_f64(acc_a, vld1q_f64(a + i));
    acc_b = vaddq_f64(acc_b, vld1q_f64(a + i + 2));
  }
  double s = hsum4(acc_a, acc_b);
  for (; i < n; ++i) s += a[i];
  return s;
}

double sqsum_k(const double* a, std::size_t n) {
  float64x2_t acc_a = vdupq_n_f64(0.0), acc_b = vdupq_n_f64(0.0);
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    const float64x2_t va = vld1q_f64(a + i);
    const float64x2_t vb = vld1q_f64(a + i + 2);
    acc_a = vaddq_f64(acc_a, vmulq_f64(va, va));
    acc_b = vaddq_f64(acc_b, vmulq_f64(vb, vb));
  }
  double s = hsum4(acc_a, acc_b);
  for (; i < n; ++i) s += a[i] * a[i];
  return s;
}

double maxval_k(const double* a, std::size_t n) {
  if (n < 2) return a[0];
  float64x2_t acc = vld1q_f64(a);
  std::size_t i = 2;
  for (; i + 2 <= n; i += 2) {
    acc = vmaxq_f64(acc, vld1q_f64(a + i));
  }
  double m = std::max(vgetq_lane_f64(acc, 0), vgetq_lane_f64(acc, 1));
  for (; i < n; ++i) m = std::max(m, a[i]);
  return m;
}

void matmul_k(const double* a, const double* b, double* c,
              std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const float64x2_t va = vdupq_n_f64(aip);
      const double* brow = b + p * n;
      std::size_t j = 0;
      for (; j + 2 <= n; j += 2) {
        const float64x2_t prod = vmulq_f64(va, vld1q_f64(brow + j));
        vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j), prod));
      }
      for (; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
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

const Backend& neon_backend() {
  static const Backend backend{
      "neon",  add_k,   sub_k,    mul_k,    scale_k,  axpy_k,
      dot_k,   sum_k,   sqsum_k,  maxval_k, matmul_k, matmul_nt_k,
  };
  return backend;
}

}  // namespace hintnart::kernels

#endif  // aarch64
