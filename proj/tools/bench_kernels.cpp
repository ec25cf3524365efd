// Compares the OpenMP kernels against their serial reference
// implementations: wall time, speedup, and maximum absolute deviation
// (expected 0: both orderings accumulate identically per output element).
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "dilo/kernels.hpp"
#include "dilo/rng.hpp"

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(
             clock::now().time_since_epoch())
      .count();
}

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_ms();
    fn();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(a[i] - b[i]));
  }
  return m;
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", dilo::max_threads());
  std::printf("%-28s %10s %10s %8s %12s\n", "kernel", "serial_ms", "omp_ms",
              "speedup", "max_abs_diff");
  dilo::CounterRng rng(42, "bench");

  for (std::size_t n : {128, 256, 512}) {
    std::vector<double> a(n * n), b(n * n), c1(n * n), c2(n * n);
    rng.fill_normal(a.data(), a.size(), 1.0);
    rng.fill_normal(b.data(), b.size(), 1.0);
    const double ts = time_best_of(3, [&] {
      dilo::kernels::matmul_serial(a.data(), b.data(), c1.data(), n, n, n);
    });
    const double tp = time_best_of(3, [&] {
      dilo::kernels::matmul(a.data(), b.data(), c2.data(), n, n, n);
    });
    char label[64];
    std::snprintf(label, sizeof(label), "matmul %zux%zu", n, n);
    std::printf("%-28s %10.2f %10.2f %7.2fx %12.3g\n", label, ts, tp, ts / tp,
                max_abs_diff(c1, c2));
  }

  for (std::size_t v : {512, 1024, 2048}) {
    std::vector<double> pts(v * 3), d1(v * v), d2(v * v);
    rng.fill_normal(pts.data(), pts.size(), 1.0);
    const double ts = time_best_of(3, [&] {
      dilo::kernels::pairwise_distances_serial(pts.data(), v, d1.data());
    });
    const double tp = time_best_of(3, [&] {
      dilo::kernels::pairwise_distances(pts.data(), v, d2.data());
    });
    char label[64];
    std::snprintf(label, sizeof(label), "pairwise_distances V=%zu", v);
    std::printf("%-28s %10.2f %10.2f %7.2fx %12.3g\n", label, ts, tp, ts / tp,
                max_abs_diff(d1, d2));
  }

  for (std::size_t v : {512, 1024, 2048}) {
    std::vector<double> a(v * 3), b(v * 3), o1(v), o2(v);
    rng.fill_normal(a.data(), a.size(), 1.0);
    rng.fill_normal(b.data(), b.size(), 1.0);
    const double ts = time_best_of(3, [&] {
      dilo::kernels::nn_sq_dists_serial(a.data(), v, b.data(), v, o1.data());
    });
    const double tp = time_best_of(3, [&] {
      dilo::kernels::nn_sq_dists(a.data(), v, b.data(), v, o2.data());
    });
    char label[64];
    std::snprintf(label, sizeof(label), "nn_sq_dists V=%zu", v);
    std::printf("%-28s %10.2f %10.2f %7.2fx %12.3g\n", label, ts, tp, ts / tp,
                max_abs_diff(o1, o2));
  }
  return 0;
}
