#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dilo/config.hpp"
#include "dilo/geometry.hpp"
#include "dilo/nets.hpp"

namespace dilo {

// Spatial segmentation of a point cloud. Every point is assigned, every
// cluster is non-empty, and the assignment is the Lloyd fixed point reached
// from the seeded k-means++ initialization.
struct Segmentation {
  std::size_t k = 0;
  std::vector<int> assignment;     // length V
  std::vector<double> centroids;   // k x 3, row-major
};

Segmentation kmeans(const PointCloud& points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iters = 100);

// Sum of squared point-to-assigned-centroid distances.
double kmeans_objective(const PointCloud& points, const Segmentation& seg);

// Bernoulli(0.5) cluster-retention masks. Sample 0 is always all-ones;
// all-zero draws are resampled. Requires n_samples >= k + 2 so the
// surrogate below is over-determined.
std::vector<std::vector<std::uint8_t>> sample_masks(std::size_t k,
                                                    std::size_t n_samples,
                                                    std::uint64_t seed);

// Drops the points of masked-out clusters, preserving input order among the
// survivors.
PointCloud perturb(const PointCloud& x, const Segmentation& seg,
                   const std::vector<std::uint8_t>& mask);

// Scalar black-box output of the chosen encoder on a perturbed cloud.
// latent_similarity: -|encode(x_pert) - encode(x_orig)|_2 (0 is maximal);
// component: the component-th coordinate of encode(x_pert).
double model_response(Model& model, const PointCloud& x_pert,
                      const PointCloud& x_orig, const ExplainConfig& cfg);

// Similarity of a mask to the all-ones reference: dot(m,1)/(|m||1|).
double cosine_weight(const std::vector<std::uint8_t>& mask);

// Positive importance supports similarity to the unperturbed output.
struct ImportanceMap {
  double intercept = 0.0;
  std::vector<double> cluster_importance;  // length k
  std::vector<double> vertex_importance;   // length V, constant per cluster
};

// Weighted least squares with intercept over the masks, solved by normal
// equations with a small ridge jitter for solvability.
ImportanceMap fit_surrogate(const std::vector<std::vector<std::uint8_t>>& masks,
                            const std::vector<double>& responses,
                            const std::vector<double>& weights,
                            const Segmentation& seg);

// Full pipeline: segment, sample masks, evaluate encoder responses, fit the
// weighted surrogate. Deterministic given (seed, cfg).
ImportanceMap explain_encoder(Model& model, const PointCloud& x,
                              const ExplainConfig& cfg, std::uint64_t seed,
                              Segmentation* seg_out = nullptr);

// ASCII PLY with per-vertex color (positive -> blue, negative -> red,
// zero -> white; flipped when flip_colors) and the raw importance as a
// `quality` property.
void export_importance_ply(const PointCloud& x, const ImportanceMap& map,
                           const std::string& path, bool flip_colors);

// CSV rows: vertex_id,cluster_id,importance
void export_importance_csv(const Segmentation& seg, const ImportanceMap& map,
                           const std::string& path);

}  // namespace dilo
