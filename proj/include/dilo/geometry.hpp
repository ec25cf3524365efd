#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "dilo/tensor.hpp"

namespace dilo {

// V points, xyz packed row-major (3V doubles).
struct PointCloud {
  std::size_t V = 0;
  std::vector<double> xyz;

  static PointCloud zeros(std::size_t v) { return {v, std::vector<double>(3 * v, 0.0)}; }
  double* point(std::size_t i) { return xyz.data() + 3 * i; }
  const double* point(std::size_t i) const { return xyz.data() + 3 * i; }
};

struct Mesh {
  PointCloud cloud;
  std::vector<std::array<int, 3>> faces;  // 0-based vertex indices
};

// Symmetric V x V euclidean distance matrix, zero diagonal.
struct DistanceMatrix {
  std::size_t V = 0;
  std::vector<double> d;
  double at(std::size_t i, std::size_t j) const { return d[i * V + j]; }
};

DistanceMatrix pairwise(const PointCloud& pts);

// Mean squared per-vertex displacement between clouds in correspondence.
double pmd(const PointCloud& y, const PointCloud& x);

// Symmetric chamfer: mean of the two directed average squared
// nearest-neighbour distances. Either cloud empty is a contract error.
double chamfer(const PointCloud& a, const PointCloud& b);

// Squared Frobenius distance between the two distance matrices.
double recon_loss(const PointCloud& y, const PointCloud& x);

// Differentiable path used in training: ||pairwise(y) - target||_F^2 where
// `target` is a precomputed V x V distance matrix tensor.
Tensor recon_loss_t(const Tensor& y, const Tensor& target);

Tensor cloud_to_tensor(const PointCloud& pts, bool requires_grad = false);
PointCloud tensor_to_cloud(const Tensor& t);

// Rigid alignment of y onto x (least-squares rotation + translation).
// det(R) is forced to +1 unless allow_reflection. All points of y coincident
// degenerates to a pure translation of centroids.
PointCloud procrustes_align(const PointCloud& y, const PointCloud& x,
                            bool allow_reflection = false);

}  // namespace dilo
