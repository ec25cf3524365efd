#include "dilo/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Dense>

#include "dilo/errors.hpp"
#include "dilo/rng.hpp"

namespace dilo {

namespace {

double sq_dist3(const double* a, const double* b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

Segmentation kmeans(const PointCloud& points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iters) {
  const std::size_t v = points.V;
  if (v == 0) throw ContractError("kmeans: empty point cloud");
  if (k == 0) throw ContractError("kmeans: k must be >= 1");
  if (k > v) {
    throw ContractError("kmeans: k=" + std::to_string(k) + " exceeds V=" +
                        std::to_string(v));
  }
  CounterRng rng(seed, "explain/kmeans");

  Segmentation seg;
  seg.k = k;
  seg.centroids.assign(k * 3, 0.0);
  seg.assignment.assign(v, 0);

  // k-means++ seeding: first centroid uniform, then proportional to the
  // squared distance to the nearest chosen centroid.
  std::vector<double> d2(v, 0.0);
  std::size_t first = rng.next_index(v);
  for (int c = 0; c < 3; ++c) seg.centroids[c] = points.xyz[first * 3 + c];
  for (std::size_t i = 0; i < v; ++i) {
    d2[i] = sq_dist3(&points.xyz[i * 3], &seg.centroids[0]);
  }
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < v; ++i) total += d2[i];
    std::size_t pick;
    if (total <= 0.0) {
      pick = rng.next_index(v);
    } else {
      const double u = rng.next_uniform() * total;
      double acc = 0.0;
      pick = v - 1;
      for (std::size_t i = 0; i < v; ++i) {
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    for (int t = 0; t < 3; ++t) {
      seg.centroids[c * 3 + t] = points.xyz[pick * 3 + t];
    }
    for (std::size_t i = 0; i < v; ++i) {
      d2[i] = std::min(d2[i], sq_dist3(&points.xyz[i * 3], &seg.centroids[c * 3]));
    }
  }

  std::vector<std::size_t> counts(k, 0);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // Assignment step; ties go to the lowest cluster id.
    bool changed = false;
    for (std::size_t i = 0; i < v; ++i) {
      int best = 0;
      double best_d = sq_dist3(&points.xyz[i * 3], &seg.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist3(&points.xyz[i * 3], &seg.centroids[c * 3]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (seg.assignment[i] != best) {
        seg.assignment[i] = best;
        changed = true;
      }
    }
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < v; ++i) {
      counts[static_cast<std::size_t>(seg.assignment[i])]++;
    }
    // Empty-cluster repair: steal the farthest point from the largest cluster.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t big = 0;
      for (std::size_t c2 = 1; c2 < k; ++c2) {
        if (counts[c2] > counts[big]) big = c2;
      }
      std::size_t far_i = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < v; ++i) {
        if (static_cast<std::size_t>(seg.assignment[i]) != big) continue;
        const double d = sq_dist3(&points.xyz[i * 3], &seg.centroids[big * 3]);
        if (d > far_d) {
          far_d = d;
          far_i = i;
        }
      }
      seg.assignment[far_i] = static_cast<int>(c);
      counts[big]--;
      counts[c]++;
      changed = true;
    }
    // Update step.
    std::fill(seg.centroids.begin(), seg.centroids.end(), 0.0);
    for (std::size_t i = 0; i < v; ++i) {
      const std::size_t c = static_cast<std::size_t>(seg.assignment[i]);
      for (int t = 0; t < 3; ++t) seg.centroids[c * 3 + t] += points.xyz[i * 3 + t];
    }
    for (std::size_t c = 0; c < k; ++c) {
      for (int t = 0; t < 3; ++t) {
        seg.centroids[c * 3 + t] /= static_cast<double>(counts[c]);
      }
    }
    if (!changed) break;
  }
  return seg;
}

double kmeans_objective(const PointCloud& points, const Segmentation& seg) {
  if (seg.assignment.size() != points.V) {
    throw ContractError("kmeans_objective: segmentation does not match cloud");
  }
  double obj = 0.0;
  for (std::size_t i = 0; i < points.V; ++i) {
    obj += sq_dist3(&points.xyz[i * 3],
                    &seg.centroids[static_cast<std::size_t>(seg.assignment[i]) * 3]);
  }
  return obj;
}

std::vector<std::vector<std::uint8_t>> sample_masks(std::size_t k,
                                                    std::size_t n_samples,
                                                    std::uint64_t seed) {
  if (k == 0) throw ContractError("sample_masks: k must be >= 1");
  if (n_samples < k + 2) {
    throw ContractError("sample_masks: need n_samples >= k + 2 (" +
                        std::to_string(k + 2) + "), got " +
                        std::to_string(n_samples));
  }
  CounterRng rng(seed, "explain/masks");
  std::vector<std::vector<std::uint8_t>> masks;
  masks.reserve(n_samples);
  masks.emplace_back(k, std::uint8_t{1});  // sample 0: the unperturbed input
  for (std::size_t s = 1; s < n_samples; ++s) {
    std::vector<std::uint8_t> m(k, 0);
    bool any = false;
    while (!any) {
      for (std::size_t j = 0; j < k; ++j) {
        m[j] = rng.next_uniform() < 0.5 ? 1 : 0;
        any = any || m[j] != 0;
      }
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

PointCloud perturb(const PointCloud& x, const Segmentation& seg,
                   const std::vector<std::uint8_t>& mask) {
  if (seg.assignment.size() != x.V) {
    throw ContractError("perturb: segmentation does not match cloud");
  }
  if (mask.size() != seg.k) {
    throw ContractError("perturb: mask length " + std::to_string(mask.size()) +
                        " != k=" + std::to_string(seg.k));
  }
  PointCloud out;
  out.xyz.reserve(x.xyz.size());
  for (std::size_t i = 0; i < x.V; ++i) {
    if (mask[static_cast<std::size_t>(seg.assignment[i])]) {
      out.xyz.insert(out.xyz.end(), x.xyz.begin() + 3 * i,
                     x.xyz.begin() + 3 * (i + 1));
      out.V++;
    }
  }
  if (out.V == 0) {
    throw ContractError("perturb: mask removes every point");
  }
  return out;
}

double model_response(Model& model, const PointCloud& x_pert,
                      const PointCloud& x_orig, const ExplainConfig& cfg) {
  auto encode = [&](const PointCloud& pc) {
    // Clustering and perturbation stay in world space; only the encoder input
    // is converted to network space via the model's input_scale.
    Tensor x = cloud_to_tensor(pc);
    const double scale = model.cfg.input_scale;
    if (scale != 1.0) {
      for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] *= scale;
    }
    return cfg.encoder == "s" ? model.encode_s(x) : model.encode_z(x);
  };
  if (cfg.mode == "component") {
    Tensor e = encode(x_pert);
    if (cfg.component >= e.size()) {
      throw ContractError("model_response: component " +
                          std::to_string(cfg.component) +
                          " out of range for code size " +
                          std::to_string(e.size()));
    }
    return e.data()[cfg.component];
  }
  Tensor ep = encode(x_pert);
  Tensor eo = encode(x_orig);
  double ss = 0.0;
  for (std::size_t i = 0; i < ep.size(); ++i) {
    const double d = ep.data()[i] - eo.data()[i];
    ss += d * d;
  }
  return -std::sqrt(ss);
}

double cosine_weight(const std::vector<std::uint8_t>& mask) {
  std::size_t ones = 0;
  for (std::uint8_t b : mask) ones += b != 0;
  if (ones == 0) throw ContractError("cosine_weight: zero mask");
  return static_cast<double>(ones) /
         (std::sqrt(static_cast<double>(ones)) *
          std::sqrt(static_cast<double>(mask.size())));
}

ImportanceMap fit_surrogate(const std::vector<std::vector<std::uint8_t>>& masks,
                            const std::vector<double>& responses,
                            const std::vector<double>& weights,
                            const Segmentation& seg) {
  const std::size_t n = masks.size();
  const std::size_t k = seg.k;
  if (n != responses.size() || n != weights.size()) {
    throw ContractError("fit_surrogate: masks/responses/weights count mismatch");
  }
  if (n <= k + 1) {
    throw ContractError("fit_surrogate: need more samples (" +
                        std::to_string(n) + ") than coefficients (" +
                        std::to_string(k + 1) + ")");
  }
  const std::size_t p = k + 1;  // intercept + one coefficient per cluster
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  std::vector<double> row(p);
  for (std::size_t i = 0; i < n; ++i) {
    if (masks[i].size() != k) {
      throw ContractError("fit_surrogate: mask length mismatch at sample " +
                          std::to_string(i));
    }
    row[0] = 1.0;
    for (std::size_t j = 0; j < k; ++j) row[j + 1] = masks[i][j] ? 1.0 : 0.0;
    const double w = weights[i];
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < p; ++c) a(r, c) += w * row[r] * row[c];
      rhs(r) += w * row[r] * responses[i];
    }
  }
  for (std::size_t r = 0; r < p; ++r) a(r, r) += 1e-10;
  Eigen::VectorXd beta = a.ldlt().solve(rhs);
  for (std::size_t r = 0; r < p; ++r) {
    if (!std::isfinite(beta(r))) {
      throw Error("fit_surrogate: design is rank-deficient even after "
                  "regularization; increase the number of samples");
    }
  }

  ImportanceMap map;
  map.intercept = beta(0);
  map.cluster_importance.resize(k);
  for (std::size_t j = 0; j < k; ++j) map.cluster_importance[j] = beta(j + 1);
  map.vertex_importance.resize(seg.assignment.size());
  for (std::size_t i = 0; i < seg.assignment.size(); ++i) {
    map.vertex_importance[i] =
        map.cluster_importance[static_cast<std::size_t>(seg.assignment[i])];
  }
  return map;
}

ImportanceMap explain_encoder(Model& model, const PointCloud& x,
                              const ExplainConfig& cfg, std::uint64_t seed,
                              Segmentation* seg_out) {
  Segmentation seg = kmeans(x, cfg.k, seed);
  auto masks = sample_masks(cfg.k, cfg.samples, seed);
  std::vector<double> responses(masks.size()), weights(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    PointCloud xp = perturb(x, seg, masks[i]);
    responses[i] = model_response(model, xp, x, cfg);
    weights[i] = cosine_weight(masks[i]);
  }
  ImportanceMap map = fit_surrogate(masks, responses, weights, seg);
  if (seg_out != nullptr) *seg_out = seg;
  return map;
}

void export_importance_ply(const PointCloud& x, const ImportanceMap& map,
                           const std::string& path, bool flip_colors) {
  if (map.vertex_importance.size() != x.V) {
    throw ContractError("export_importance_ply: importance/cloud size mismatch");
  }
  double peak = 0.0;
  for (double v : map.vertex_importance) peak = std::max(peak, std::fabs(v));
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::fprintf(f,
               "ply\nformat ascii 1.0\n"
               "comment per-vertex importance; %s\n"
               "element vertex %zu\n"
               "property float x\nproperty float y\nproperty float z\n"
               "property uchar red\nproperty uchar green\nproperty uchar blue\n"
               "property float quality\nend_header\n",
               flip_colors ? "positive=red negative=blue"
                           : "positive=blue negative=red",
               x.V);
  for (std::size_t i = 0; i < x.V; ++i) {
    double val = map.vertex_importance[i];
    if (flip_colors) val = -val;
    int r = 255, g = 255, b = 255;
    if (peak > 0.0) {
      const double t = std::fabs(val) / peak;
      const int fade = static_cast<int>(std::lround(255.0 * (1.0 - t)));
      if (val >= 0.0) {
        r = fade;
        g = fade;
        b = 255;
      } else {
        r = 255;
        g = fade;
        b = fade;
      }
    }
    std::fprintf(f, "%.9g %.9g %.9g %d %d %d %.9g\n", x.xyz[i * 3],
                 x.xyz[i * 3 + 1], x.xyz[i * 3 + 2], r, g, b,
                 map.vertex_importance[i]);
  }
  if (std::fclose(f) != 0) throw IoError("short write to '" + path + "'");
}

void export_importance_csv(const Segmentation& seg, const ImportanceMap& map,
                           const std::string& path) {
  if (map.vertex_importance.size() != seg.assignment.size()) {
    throw ContractError("export_importance_csv: importance/segmentation mismatch");
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::fprintf(f, "vertex_id,cluster_id,importance\n");
  for (std::size_t i = 0; i < seg.assignment.size(); ++i) {
    std::fprintf(f, "%zu,%d,%.17g\n", i, seg.assignment[i],
                 map.vertex_importance[i]);
  }
  if (std::fclose(f) != 0) throw IoError("short write to '" + path + "'");
}

}  // namespace dilo
