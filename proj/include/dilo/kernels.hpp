#pragma once

#include <cstddef>

namespace dilo {

// Caps OpenMP worker count for the whole process; n <= 0 leaves the default.
void set_threads(int n);
int max_threads();

namespace kernels {

// Dense numeric kernels. Each OpenMP variant parallelizes over independent
// output elements and keeps every per-element reduction in a fixed serial
// order, so results are bit-identical to the *_serial reference regardless
// of thread count. The serial versions are kept as test oracles and for the
// benchmark target.

// c[m x n] = a[m x k] * b[k x n], row-major. c may not alias a or b.
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

// c[m x n] += a[m x k] * b[k x n].
void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);

// c[m x k] += a[m x n] * b[k x n]^T  (i.e. a * transpose(b)).
void matmul_nt_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t n, std::size_t k);

// c[k x n] += a[m x k]^T * b[m x n]  (i.e. transpose(a) * b).
void matmul_tn_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

// out[v x v], out[i*v+j] = euclidean distance between points i and j of a
// v x 3 row-major array.
void pairwise_distances(const double* pts, std::size_t v, double* out);
void pairwise_distances_serial(const double* pts, std::size_t v, double* out);

// out[i] = min over j of squared distance from a-point i to b-point j.
// a is na x 3, b is nb x 3.
void nn_sq_dists(const double* a, std::size_t na,
                 const double* b, std::size_t nb, double* out);
void nn_sq_dists_serial(const double* a, std::size_t na,
                        const double* b, std::size_t nb, double* out);

}  // namespace kernels
}  // namespace dilo
