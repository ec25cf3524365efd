#include "dilo/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "json.hpp"

#include "dilo/errors.hpp"

namespace dilo {

using nlohmann::json;

namespace {

// Networks operate on geometry multiplied by the model's input_scale; this
// converts a world-space cloud into that space.
Tensor to_net_space(const Model& model, const PointCloud& cloud) {
  Tensor x = cloud_to_tensor(cloud);
  const double scale = model.cfg.input_scale;
  if (scale != 1.0) {
    for (std::size_t t = 0; t < x.size(); ++t) x.data()[t] *= scale;
  }
  return x;
}

}  // namespace

PointCloud transfer(Model& model, const PointCloud& shape_src,
                    const PointCloud& deform_src) {
  Tensor xs = to_net_space(model, shape_src);
  Tensor xd = to_net_space(model, deform_src);
  Tensor s = model.encode_s(xs);
  Tensor z = model.encode_z(xd);
  Tensor y = model.generate(z, s);
  const double scale = model.cfg.input_scale;
  if (scale != 1.0) {
    for (std::size_t t = 0; t < y.size(); ++t) y.data()[t] /= scale;
  }
  return tensor_to_cloud(y);
}

std::vector<TransferPair> load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
  std::vector<TransferPair> out;
  try {
    for (const auto& item : j.at("pairs")) {
      TransferPair p;
      p.shape_source = item.at("shape_source").get<std::string>();
      p.deform_source = item.at("deform_source").get<std::string>();
      p.ground_truth = item.at("ground_truth").get<std::string>();
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
  if (out.empty()) throw ParseError("'" + path + "': no pairs");
  return out;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

const Mesh& mesh_by_id(const Dataset& data, const std::string& id) {
  auto it = data.by_id.find(id);
  if (it == data.by_id.end()) {
    throw ContractError("transfer pair references unknown instance '" + id + "'");
  }
  return data.meshes[it->second];
}

}  // namespace

TransferEval eval_transfer(Model& model, const Dataset& data,
                           const std::vector<TransferPair>& pairs, bool align,
                           bool allow_reflection) {
  if (pairs.empty()) throw ContractError("eval_transfer: no pairs");
  TransferEval ev;
  for (const auto& pr : pairs) {
    const Mesh& ms = mesh_by_id(data, pr.shape_source);
    const Mesh& md = mesh_by_id(data, pr.deform_source);
    const Mesh& gt = mesh_by_id(data, pr.ground_truth);
    PointCloud y = transfer(model, ms.cloud, md.cloud);
    PointCloud ya = align ? procrustes_align(y, gt.cloud, allow_reflection) : y;
    PointCloud bs = align ? procrustes_align(ms.cloud, gt.cloud, allow_reflection)
                          : ms.cloud;
    PointCloud bd = align ? procrustes_align(md.cloud, gt.cloud, allow_reflection)
                          : md.cloud;
    const double ours = pmd(ya, gt.cloud);
    const double copy_shape = pmd(bs, gt.cloud);
    const double copy_deform = pmd(bd, gt.cloud);
    ev.ours.push_back(ours);
    ev.copy_shape.push_back(copy_shape);
    ev.copy_deform.push_back(copy_deform);
    ev.ratio.push_back(std::min(copy_shape, copy_deform) /
                       std::max(ours, 1e-12));
    ev.chamfer_ours.push_back(chamfer(ya, gt.cloud));
  }
  ev.mean_ours = mean(ev.ours);
  ev.mean_copy_shape = mean(ev.copy_shape);
  ev.mean_copy_deform = mean(ev.copy_deform);
  ev.mean_chamfer = mean(ev.chamfer_ours);
  ev.median_ratio = median(ev.ratio);
  return ev;
}

LinearProbe fit_probe(const std::vector<std::vector<double>>& features,
                      const std::vector<int>& labels, std::size_t n_classes,
                      const ProbeConfig& cfg) {
  if (features.empty()) throw ContractError("fit_probe: no features");
  if (features.size() != labels.size()) {
    throw ContractError("fit_probe: feature/label count mismatch");
  }
  if (n_classes < 2) throw ContractError("fit_probe: need at least 2 classes");
  const std::size_t n = features.size();
  const std::size_t f = features[0].size();
  for (const auto& row : features) {
    if (row.size() != f) throw ContractError("fit_probe: ragged feature rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
      throw ContractError("fit_probe: label " + std::to_string(y) +
                          " outside [0, " + std::to_string(n_classes) + ")");
    }
  }

  LinearProbe p;
  p.n_features = f;
  p.n_classes = n_classes;
  p.mu.assign(f, 0.0);
  p.sd.assign(f, 1.0);
  if (cfg.standardize) {
    for (std::size_t j = 0; j < f; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += features[i][j];
      m /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = features[i][j] - m;
        var += d * d;
      }
      var /= static_cast<double>(n);
      p.mu[j] = m;
      const double s = std::sqrt(var);
      p.sd[j] = (s == 0.0) ? 1.0 : s;
    }
  }

  // Standardized design matrix, row-major n x f.
  std::vector<double> X(n * f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      X[i * f + j] = (features[i][j] - p.mu[j]) / p.sd[j];
    }
  }

  const std::size_t k = n_classes;
  p.W.assign(f * k, 0.0);
  p.b.assign(k, 0.0);
  std::vector<double> logits(n * k), g(n * k);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        double v = p.b[c];
        for (std::size_t j = 0; j < f; ++j) v += X[i * f + j] * p.W[j * k + c];
        logits[i * k + c] = v;
      }
      double mx = logits[i * k];
      for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, logits[i * k + c]);
      double sum = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        logits[i * k + c] = std::exp(logits[i * k + c] - mx);
        sum += logits[i * k + c];
      }
      for (std::size_t c = 0; c < k; ++c) {
        const double prob = logits[i * k + c] / sum;
        const double y = (static_cast<std::size_t>(labels[i]) == c) ? 1.0 : 0.0;
        g[i * k + c] = (prob - y) / static_cast<double>(n);
      }
    }
    for (std::size_t j = 0; j < f; ++j) {
      for (std::size_t c = 0; c < k; ++c) {
        double gw = 2.0 * cfg.reg * p.W[j * k + c];
        for (std::size_t i = 0; i < n; ++i) gw += X[i * f + j] * g[i * k + c];
        p.W[j * k + c] -= cfg.lr * gw;
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      double gb = 0.0;
      for (std::size_t i = 0; i < n; ++i) gb += g[i * k + c];
      p.b[c] -= cfg.lr * gb;
    }
  }
  return p;
}

int probe_predict(const LinearProbe& p, const std::vector<double>& feature) {
  if (feature.size() != p.n_features) {
    throw DimensionError("probe_predict: feature size " +
                         std::to_string(feature.size()) + ", expected " +
                         std::to_string(p.n_features));
  }
  int best = 0;
  double best_v = -1e300;
  for (std::size_t c = 0; c < p.n_classes; ++c) {
    double v = p.b[c];
    for (std::size_t j = 0; j < p.n_features; ++j) {
      v += (feature[j] - p.mu[j]) / p.sd[j] * p.W[j * p.n_classes + c];
    }
    if (v > best_v) {  // strict: ties resolve to the lowest class index
      best_v = v;
      best = static_cast<int>(c);
    }
  }
  return best;
}

double probe_accuracy(const LinearProbe& p,
                      const std::vector<std::vector<double>>& features,
                      const std::vector<int>& labels) {
  if (features.empty() || features.size() != labels.size()) {
    throw ContractError("probe_accuracy: feature/label count mismatch");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (probe_predict(p, features[i]) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(features.size());
}

DisentanglementEval eval_dscore(Model& model, const Dataset& data,
                                const std::string& train_split,
                                const std::string& eval_split,
                                const ProbeConfig& cfg) {
  auto split_of = [&](const std::string& name) {
    std::vector<std::size_t> idxs = data.split_indices(name);
    if (idxs.empty()) {
      throw ContractError("eval_dscore: dataset has no '" + name + "' split");
    }
    return idxs;
  };
  const std::vector<std::size_t> tr = split_of(train_split);
  const std::vector<std::size_t> ev = split_of(eval_split);

  std::map<int, int> class_map;
  for (std::size_t idx : tr) {
    class_map.emplace(data.manifest.entries[idx].deform_class, 0);
  }
  int next = 0;
  for (auto& [cls, remap] : class_map) {
    (void)cls;
    remap = next++;
  }
  const std::size_t k = class_map.size();
  if (k < 2) throw ContractError("eval_dscore: fewer than 2 deformation classes");

  auto collect = [&](const std::vector<std::size_t>& idxs,
                     std::vector<std::vector<double>>& fz,
                     std::vector<std::vector<double>>& fs,
                     std::vector<int>& labels) {
    for (std::size_t idx : idxs) {
      const ManifestEntry& me = data.manifest.entries[idx];
      auto it = class_map.find(me.deform_class);
      if (it == class_map.end()) {
        throw ContractError("eval_dscore: instance '" + me.id +
                            "' has deformation class " +
                            std::to_string(me.deform_class) +
                            " never seen in the probe train split");
      }
      Tensor x = to_net_space(model, data.meshes[idx].cloud);
      fz.push_back(model.encode_z(x).values());
      fs.push_back(model.encode_s(x).values());
      labels.push_back(it->second);
    }
  };

  std::vector<std::vector<double>> ztr, str, zev, sev;
  std::vector<int> ytr, yev;
  collect(tr, ztr, str, ytr);
  collect(ev, zev, sev, yev);

  LinearProbe pz = fit_probe(ztr, ytr, k, cfg);
  LinearProbe ps = fit_probe(str, ytr, k, cfg);

  DisentanglementEval out;
  out.n_classes = k;
  out.n_train = tr.size();
  out.n_eval = ev.size();
  out.e_z = probe_accuracy(pz, zev, yev);
  out.e_s = probe_accuracy(ps, sev, yev);
  out.d_score = std::fabs(out.e_z - out.e_s);
  std::vector<std::size_t> counts(k, 0);
  for (int y : yev) counts[static_cast<std::size_t>(y)]++;
  out.chance = static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
               static_cast<double>(yev.size());
  return out;
}

std::string format_milli(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", value * 1e3);
  return std::string(buf);
}

}  // namespace dilo
