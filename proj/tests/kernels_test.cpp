// OpenMP kernels against serial references and naive oracles. The contract
// under test is bit-identity: every parallel kernel must produce exactly the
// bytes its serial twin produces, for any thread cap.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "dilo/kernels.hpp"
#include "dilo/rng.hpp"
#include "test_util.hpp"

using namespace dilo;
using testutil::bytes_equal;

namespace {

std::vector<double> naive_matmul(const std::vector<double>& a,
                                 const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
      c[i * n + j] = acc;
    }
  return c;
}

}  // namespace

TEST_CASE("matmul matches a naive triple loop and its serial twin") {
  CounterRng rng(11, "kernels/matmul");
  const std::size_t sizes[][3] = {
      {1, 1, 1}, {3, 4, 5}, {7, 7, 7}, {16, 3, 9}, {33, 17, 21}, {64, 64, 64}};
  for (const auto& s : sizes) {
    const std::size_t m = s[0], k = s[1], n = s[2];
    std::vector<double> a = testutil::random_vec(rng, m * k);
    std::vector<double> b = testutil::random_vec(rng, k * n);
    std::vector<double> c(m * n), cs(m * n);
    kernels::matmul(a.data(), b.data(), c.data(), m, k, n);
    kernels::matmul_serial(a.data(), b.data(), cs.data(), m, k, n);
    CHECK(bytes_equal(c, cs));
    std::vector<double> oracle = naive_matmul(a, b, m, k, n);
    for (std::size_t i = 0; i < c.size(); ++i)
      CHECK(c[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul_acc accumulates into the destination") {
  CounterRng rng(12, "kernels/acc");
  const std::size_t m = 9, k = 5, n = 7;
  std::vector<double> a = testutil::random_vec(rng, m * k);
  std::vector<double> b = testutil::random_vec(rng, k * n);
  std::vector<double> c0 = testutil::random_vec(rng, m * n);
  std::vector<double> c = c0;
  kernels::matmul_acc(a.data(), b.data(), c.data(), m, k, n);
  std::vector<double> prod = naive_matmul(a, b, m, k, n);
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK(c[i] == doctest::Approx(c0[i] + prod[i]).epsilon(1e-12));
}

TEST_CASE("matmul_nt_acc computes c += a * b^T") {
  CounterRng rng(13, "kernels/nt");
  const std::size_t m = 6, n = 5, k = 8;  // a is m x n, b is k x n, c is m x k
  std::vector<double> a = testutil::random_vec(rng, m * n);
  std::vector<double> b = testutil::random_vec(rng, k * n);
  std::vector<double> c(m * k, 0.0);
  kernels::matmul_nt_acc(a.data(), b.data(), c.data(), m, n, k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < n; ++l) acc += a[i * n + l] * b[j * n + l];
      CHECK(c[i * k + j] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("matmul_tn_acc computes c += a^T * b") {
  CounterRng rng(14, "kernels/tn");
  const std::size_t m = 7, k = 4, n = 6;  // a is m x k, b is m x n, c is k x n
  std::vector<double> a = testutil::random_vec(rng, m * k);
  std::vector<double> b = testutil::random_vec(rng, m * n);
  std::vector<double> c(k * n, 0.0);
  kernels::matmul_tn_acc(a.data(), b.data(), c.data(), m, k, n);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < m; ++l) acc += a[l * k + i] * b[l * n + j];
      CHECK(c[i * n + j] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("pairwise_distances matches a double loop and its serial twin") {
  CounterRng rng(15, "kernels/pairwise");
  for (std::size_t v : {1, 2, 17, 50}) {
    std::vector<double> pts = testutil::random_vec(rng, 3 * v);
    std::vector<double> d(v * v), ds(v * v);
    kernels::pairwise_distances(pts.data(), v, d.data());
    kernels::pairwise_distances_serial(pts.data(), v, ds.data());
    CHECK(bytes_equal(d, ds));
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t j = 0; j < v; ++j) {
        double dx = pts[3 * i] - pts[3 * j];
        double dy = pts[3 * i + 1] - pts[3 * j + 1];
        double dz = pts[3 * i + 2] - pts[3 * j + 2];
        double want = std::sqrt(dx * dx + dy * dy + dz * dz);
        CHECK(d[i * v + j] == doctest::Approx(want).epsilon(1e-12));
      }
  }
}

TEST_CASE("nn_sq_dists matches an exhaustive scan and its serial twin") {
  CounterRng rng(16, "kernels/nn");
  const std::size_t na = 23, nb = 31;
  std::vector<double> a = testutil::random_vec(rng, 3 * na);
  std::vector<double> b = testutil::random_vec(rng, 3 * nb);
  std::vector<double> out(na), outs(na);
  kernels::nn_sq_dists(a.data(), na, b.data(), nb, out.data());
  kernels::nn_sq_dists_serial(a.data(), na, b.data(), nb, outs.data());
  CHECK(bytes_equal(out, outs));
  for (std::size_t i = 0; i < na; ++i) {
    double best = 1e300;
    for (std::size_t j = 0; j < nb; ++j) {
      double dx = a[3 * i] - b[3 * j];
      double dy = a[3 * i + 1] - b[3 * j + 1];
      double dz = a[3 * i + 2] - b[3 * j + 2];
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    CHECK(out[i] == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("results are bit-identical for any thread cap") {
  CounterRng rng(17, "kernels/threads");
  const std::size_t m = 41, k = 29, n = 37, v = 43;
  std::vector<double> a = testutil::random_vec(rng, m * k);
  std::vector<double> b = testutil::random_vec(rng, k * n);
  std::vector<double> pts = testutil::random_vec(rng, 3 * v);

  auto run_all = [&](std::vector<double>& c, std::vector<double>& d,
                     std::vector<double>& nn) {
    c.assign(m * n, 0.0);
    d.assign(v * v, 0.0);
    nn.assign(v, 0.0);
    kernels::matmul(a.data(), b.data(), c.data(), m, k, n);
    kernels::pairwise_distances(pts.data(), v, d.data());
    kernels::nn_sq_dists(pts.data(), v, pts.data() + 3, v - 1, nn.data());
  };

  std::vector<double> c1, d1, nn1, cN, dN, nnN;
  set_threads(1);
  run_all(c1, d1, nn1);
  for (int threads : {2, 3, 4, 7}) {
    set_threads(threads);
    run_all(cN, dN, nnN);
    CHECK(bytes_equal(c1, cN));
    CHECK(bytes_equal(d1, dN));
    CHECK(bytes_equal(nn1, nnN));
  }
  set_threads(1);
}
