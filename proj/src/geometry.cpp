#include "dilo/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "dilo/errors.hpp"
#include "dilo/kernels.hpp"
#include "dilo/ops.hpp"

namespace dilo {

DistanceMatrix pairwise(const PointCloud& pts) {
  DistanceMatrix out;
  out.V = pts.V;
  out.d.resize(pts.V * pts.V);
  kernels::pairwise_distances(pts.xyz.data(), pts.V, out.d.data());
  return out;
}

double pmd(const PointCloud& y, const PointCloud& x) {
  if (y.V != x.V)
    throw DimensionError("pmd: clouds have " + std::to_string(y.V) + " and " +
                         std::to_string(x.V) + " points");
  if (y.V == 0) throw ContractError("pmd: empty cloud");
  double acc = 0.0;
  for (std::size_t i = 0; i < 3 * y.V; ++i) {
    const double d = y.xyz[i] - x.xyz[i];
    acc += d * d;
  }
  return acc / static_cast<double>(y.V);
}

double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.V == 0 || b.V == 0) throw ContractError("chamfer: empty cloud");
  std::vector<double> ab(a.V), ba(b.V);
  kernels::nn_sq_dists(a.xyz.data(), a.V, b.xyz.data(), b.V, ab.data());
  kernels::nn_sq_dists(b.xyz.data(), b.V, a.xyz.data(), a.V, ba.data());
  double sab = 0.0, sba = 0.0;
  for (double v : ab) sab += v;
  for (double v : ba) sba += v;
  return 0.5 * (sab / static_cast<double>(a.V) + sba / static_cast<double>(b.V));
}

double recon_loss(const PointCloud& y, const PointCloud& x) {
  if (y.V != x.V)
    throw DimensionError("recon_loss: clouds have " + std::to_string(y.V) +
                         " and " + std::to_string(x.V) + " points");
  DistanceMatrix dy = pairwise(y), dx = pairwise(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < dy.d.size(); ++i) {
    const double d = dy.d[i] - dx.d[i];
    acc += d * d;
  }
  return acc;
}

Tensor pairwise_distances_t(const Tensor& points) {
  if (points.rank() != 2 || points.dim(1) != 3)
    throw DimensionError("pairwise_distances: expected [V,3], got " +
                         shape_str(points.shape()));
  const std::size_t v = points.dim(0);
  Tensor out = Tensor::zeros({v, v});
  kernels::pairwise_distances(points.data(), v, out.data());
  if (Graph::active() && points.tracked()) {
    Tensor p = points;
    out.mark_tracked();
    Graph::active()->record([p, out, v]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      const double* d = out.data();
      const double* pts = p.data();
      double* gp = p.grad_data();
      // d D[i,j] / d p_i = (p_i - p_j) / D[i,j]; both orientations of the
      // (i,j) entry land on p_i here so each row of gp has a single owner.
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(v); ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        for (std::size_t j = 0; j < v; ++j) {
          const double dij = d[i * v + j];
          if (dij <= 0.0) continue;  // diagonal / coincident: subgradient 0
          const double w = (g[i * v + j] + g[j * v + i]) / dij;
          gp[3 * i + 0] += w * (pts[3 * i + 0] - pts[3 * j + 0]);
          gp[3 * i + 1] += w * (pts[3 * i + 1] - pts[3 * j + 1]);
          gp[3 * i + 2] += w * (pts[3 * i + 2] - pts[3 * j + 2]);
        }
      }
    });
  }
  return out;
}

Tensor recon_loss_t(const Tensor& y, const Tensor& target) {
  if (target.rank() != 2 || target.dim(0) != target.dim(1) ||
      y.rank() != 2 || y.dim(1) != 3 || y.dim(0) != target.dim(0))
    throw DimensionError("recon_loss: points " + shape_str(y.shape()) +
                         " vs target " + shape_str(target.shape()));
  return sum_of_squares(sub(pairwise_distances_t(y), target));
}

Tensor cloud_to_tensor(const PointCloud& pts, bool requires_grad) {
  return Tensor::from_data({pts.V, 3}, pts.xyz, requires_grad);
}

PointCloud tensor_to_cloud(const Tensor& t) {
  if (t.rank() != 2 || t.dim(1) != 3)
    throw DimensionError("tensor_to_cloud: expected [V,3], got " +
                         shape_str(t.shape()));
  return PointCloud{t.dim(0), t.values()};
}

PointCloud procrustes_align(const PointCloud& y, const PointCloud& x,
                            bool allow_reflection) {
  if (y.V != x.V || y.V == 0)
    throw DimensionError("procrustes_align: clouds have " +
                         std::to_string(y.V) + " and " + std::to_string(x.V) +
                         " points");
  const double n = static_cast<double>(y.V);
  Eigen::Vector3d cy = Eigen::Vector3d::Zero(), cx = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < y.V; ++i) {
    cy += Eigen::Map<const Eigen::Vector3d>(y.point(i));
    cx += Eigen::Map<const Eigen::Vector3d>(x.point(i));
  }
  cy /= n;
  cx /= n;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < y.V; ++i) {
    const Eigen::Vector3d a = Eigen::Map<const Eigen::Vector3d>(y.point(i)) - cy;
    const Eigen::Vector3d b = Eigen::Map<const Eigen::Vector3d>(x.point(i)) - cx;
    h += a * b.transpose();
  }
  Eigen::Matrix3d r;
  if (h.norm() < 1e-300) {
    r = Eigen::Matrix3d::Identity();
  } else {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(
        h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
    r = v * u.transpose();
    if (!allow_reflection && r.determinant() < 0.0) {
      Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
      flip(2, 2) = -1.0;
      r = v * flip * u.transpose();
    }
  }
  PointCloud out = PointCloud::zeros(y.V);
  for (std::size_t i = 0; i < y.V; ++i) {
    const Eigen::Vector3d p =
        r * (Eigen::Map<const Eigen::Vector3d>(y.point(i)) - cy) + cx;
    out.point(i)[0] = p[0];
    out.point(i)[1] = p[1];
    out.point(i)[2] = p[2];
  }
  return out;
}

}  // namespace dilo
