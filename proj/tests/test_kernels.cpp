#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hintnart/kernels.hpp"
#include "hintnart/rng.hpp"

using namespace hintnart;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// naive O(mkn) oracle, plain left-to-right accumulation
std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
  return c;
}

}  // namespace

TEST_CASE("scalar backend is always available") {
  const auto names = kernels::available();
  CHECK(names.size() >= 1);
  CHECK(names[0] == "scalar");
  CHECK(kernels::select("scalar"));
  CHECK(std::string(kernels::active().name) == "scalar");
  CHECK_FALSE(kernels::select("no-such-backend"));
}

TEST_CASE("matmul matches a naive oracle") {
  Rng rng(42);
  for (const auto& name : kernels::available()) {
    REQUIRE(kernels::select(name));
    const auto& kb = kernels::active();
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t m = 1 + rng.below(9), k = 1 + rng.below(9), n = 1 + rng.below(9);
      const auto a = random_vec(rng, m * k);
      const auto b = random_vec(rng, k * n);
      std::vector<double> c(m * n, -99.0);
      kb.matmul(a.data(), b.data(), c.data(), m, k, n);
      const auto ref = naive_matmul(a, b, m, k, n);
      for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("every backend produces bit-identical results") {
  const auto names = kernels::available();
  if (names.size() < 2) return;  // nothing to compare on this host

  Rng rng(7);
  // lengths straddling the 4-lane blocking, including tails
  const std::size_t sizes[] = {1, 2, 3, 4, 5, 7, 8, 15, 16, 31, 64, 257};
  for (std::size_t n : sizes) {
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n);
    const double alpha = rng.uniform(-1.5, 1.5);

    struct Result {
      std::vector<double> add, sub, mul, scale, axpy;
      double dot, sum, sqsum, maxval;
    };
    std::vector<Result> results;
    for (const auto& name : names) {
      REQUIRE(kernels::select(name));
      const auto& kb = kernels::active();
      Result r;
      r.add.resize(n);
      r.sub.resize(n);
      r.mul.resize(n);
      r.scale.resize(n);
      r.axpy = b;
      kb.add(a.data(), b.data(), r.add.data(), n);
      kb.sub(a.data(), b.data(), r.sub.data(), n);
      kb.mul(a.data(), b.data(), r.mul.data(), n);
      kb.scale(a.data(), alpha, r.scale.data(), n);
      kb.axpy(alpha, a.data(), r.axpy.data(), n);
      r.dot = kb.dot(a.data(), b.data(), n);
      r.sum = kb.sum(a.data(), n);
      r.sqsum = kb.sqsum(a.data(), n);
      r.maxval = kb.maxval(a.data(), n);
      results.push_back(std::move(r));
    }
    for (std::size_t i = 1; i < results.size(); ++i) {
      CHECK(results[i].add == results[0].add);
      CHECK(results[i].sub == results[0].sub);
      CHECK(results[i].mul == results[0].mul);
      CHECK(results[i].scale == results[0].scale);
      CHECK(results[i].axpy == results[0].axpy);
      CHECK(results[i].dot == results[0].dot);
      CHECK(results[i].sum == results[0].sum);
      CHECK(results[i].sqsum == results[0].sqsum);
      CHECK(results[i].maxval == results[0].maxval);
    }
  }

  // matmul variants, odd shapes included
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t m = 1 + rng.below(13), k = 1 + rng.below(13), n = 1 + rng.below(13);
    const auto a = random_vec(rng, m * k);
    const auto b = random_vec(rng, k * n);
    const auto bt = random_vec(rng, n * k);
    std::vector<std::vector<double>> mm, mmnt;
    for (const auto& name : names) {
      REQUIRE(kernels::select(name));
      const auto& kb = kernels::active();
      std::vector<double> c(m * n), cnt(m * n);
      kb.matmul(a.data(), b.data(), c.data(), m, k, n);
      kb.matmul_nt(a.data(), bt.data(), cnt.data(), m, k, n);
      mm.push_back(std::move(c));
      mmnt.push_back(std::move(cnt));
    }
    for (std::size_t i = 1; i < mm.size(); ++i) {
      CHECK(mm[i] == mm[0]);
      CHECK(mmnt[i] == mmnt[0]);
    }
  }
  kernels::select(names.back());
}

TEST_CASE("reduction kernels agree with plain summation within rounding") {
  Rng rng(3);
  kernels::select("scalar");
  const auto& kb = kernels::active();
  for (std::size_t n : {1u, 5u, 100u, 1023u}) {
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n);
    double dot = 0.0, sum = 0.0, sq = 0.0, mx = a[0];
    for (std::size_t i = 0; i < n; ++i) {
      dot += a[i] * b[i];
      sum += a[i];
      sq += a[i] * a[i];
      mx = std::max(mx, a[i]);
    }
    CHECK(kb.dot(a.data(), b.data(), n) == doctest::Approx(dot).epsilon(1e-12));
    CHECK(kb.sum(a.data(), n) == doctest::Approx(sum).epsilon(1e-12));
    CHECK(kb.sqsum(a.data(), n) == doctest::Approx(sq).epsilon(1e-12));
    CHECK(kb.maxval(a.data(), n) == mx);
  }
}
