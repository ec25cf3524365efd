#include "dilo/kernels.hpp"

#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dilo {

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace kernels {

// Row i of c depends only on row i of a, so rows parallelize cleanly and the
// k-accumulation below stays in one fixed order per output element.
static inline void matmul_row(const double* a, const double* b, double* c,
                              std::size_t i, std::size_t k, std::size_t n) {
  double* ci = c + i * n;
  const double* ai = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = ai[p];
    const double* bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
  }
}

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
    matmul_row(a, b, c, static_cast<std::size_t>(i), k, n);
}

void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
}

void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
    matmul_row(a, b, c, static_cast<std::size_t>(i), k, n);
}

void matmul_nt_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t n, std::size_t k) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const double* bj = b + j * n;
      double acc = 0.0;
      for (std::size_t p = 0; p < n; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(k); ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < m; ++p) {
      const double av = a[p * k + i];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

static inline void pairwise_row(const double* pts, std::size_t v, double* out,
                                std::size_t i) {
  const double xi = pts[3 * i], yi = pts[3 * i + 1], zi = pts[3 * i + 2];
  double* oi = out + i * v;
  for (std::size_t j = 0; j < v; ++j) {
    const double dx = xi - pts[3 * j];
    const double dy = yi - pts[3 * j + 1];
    const double dz = zi - pts[3 * j + 2];
    oi[j] = std::sqrt(dx * dx + dy * dy + dz * dz);
  }
}

void pairwise_distances(const double* pts, std::size_t v, double* out) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(v); ++i)
    pairwise_row(pts, v, out, static_cast<std::size_t>(i));
}

void pairwise_distances_serial(const double* pts, std::size_t v, double* out) {
  for (std::size_t i = 0; i < v; ++i) pairwise_row(pts, v, out, i);
}

static inline double nn_one(const double* a, std::size_t i,
                            const double* b, std::size_t nb) {
  const double xi = a[3 * i], yi = a[3 * i + 1], zi = a[3 * i + 2];
  double best = HUGE_VAL;
  for (std::size_t j = 0; j < nb; ++j) {
    const double dx = xi - b[3 * j];
    const double dy = yi - b[3 * j + 1];
    const double dz = zi - b[3 * j + 2];
    const double d = dx * dx + dy * dy + dz * dz;
    if (d < best) best = d;
  }
  return best;
}

void nn_sq_dists(const double* a, std::size_t na,
                 const double* b, std::size_t nb, double* out) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(na); ++i)
    out[i] = nn_one(a, static_cast<std::size_t>(i), b, nb);
}

void nn_sq_dists_serial(const double* a, std::size_t na,
                        const double* b, std::size_t nb, double* out) {
  for (std::size_t i = 0; i < na; ++i) out[i] = nn_one(a, i, b, nb);
}

}  // namespace kernels
}  // namespace dilo
