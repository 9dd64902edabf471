#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hintnart::kernels {

// Dense double-precision inner loops behind the tensor ops. Every backend
// (scalar reference, AVX2, NEON) must produce bit-identical results:
//   - elementwise kernels round once per element (mul then add, never fma);
//   - reduction kernels keep four interleaved partial accumulators over the
//     4-aligned prefix, combine them as (p0+p2)+(p1+p3), and fold the
//     remainder in sequentially;
//   - matmul runs i-k-j so each output element accumulates in k order.
// The equivalence suite asserts exact equality between backends.
struct Backend {
  const char* name;
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(const double* a, double c, double* out, std::size_t n);
  // y += c * x
  void (*axpy)(double c, const double* x, double* y, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*sqsum)(const double* a, std::size_t n);
  double (*maxval)(const double* a, std::size_t n);  // n >= 1
  // C[m x n] = A[m x k] * B[k x n], C overwritten
  void (*matmul)(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n);
  // C[m x n] = A[m x k] * B[n x k]^T
  void (*matmul_nt)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);
};

const Backend& scalar_backend();

#if defined(__x86_64__) || defined(_M_X64)
bool avx2_supported();
const Backend& avx2_backend();
#endif
#if defined(__aarch64__)
const Backend& neon_backend();
#endif

// Active backend. Defaults to the widest one the CPU supports; the
// HINTNART_KERNELS environment variable or select() can force another.
const Backend& active();
bool select(const std::string& name);
std::vector<std::string> available();

}  // namespace hintnart::kernels
