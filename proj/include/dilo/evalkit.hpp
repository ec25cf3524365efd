#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dilo/config.hpp"
#include "dilo/dataset.hpp"
#include "dilo/geometry.hpp"
#include "dilo/nets.hpp"

namespace dilo {

// Swaps factors between two meshes: the shape code is encoded from
// shape_src, the deformation code from deform_src, and the generator
// produces the combined instance. Inference only; no gradients recorded.
PointCloud transfer(Model& model, const PointCloud& shape_src,
                    const PointCloud& deform_src);

struct TransferPair {
  std::string shape_source;
  std::string deform_source;
  std::string ground_truth;
};

// Reads {"pairs": [{"shape_source","deform_source","ground_truth"}, ...]}.
std::vector<TransferPair> load_pairs(const std::string& path);

struct TransferEval {
  // Per-pair point-to-point error (after optional rigid alignment) for the
  // transferred mesh and for the two trivial baselines that return one of
  // the source meshes unchanged.
  std::vector<double> ours, copy_shape, copy_deform;
  std::vector<double> ratio;        // min(baselines) / ours, per pair
  std::vector<double> chamfer_ours; // symmetric chamfer of the transfer
  double mean_ours = 0, mean_copy_shape = 0, mean_copy_deform = 0;
  double mean_chamfer = 0;
  double median_ratio = 0;
};

TransferEval eval_transfer(Model& model, const Dataset& data,
                           const std::vector<TransferPair>& pairs, bool align,
                           bool allow_reflection);

// Multinomial logistic probe trained by full-batch gradient descent from a
// zero initialization, with internal per-feature standardization.
struct LinearProbe {
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> W;   // n_features x n_classes, row-major
  std::vector<double> b;   // n_classes
  std::vector<double> mu;  // standardization mean
  std::vector<double> sd;  // standardization scale (zeros replaced by 1)
};

LinearProbe fit_probe(const std::vector<std::vector<double>>& features,
                      const std::vector<int>& labels, std::size_t n_classes,
                      const ProbeConfig& cfg);
int probe_predict(const LinearProbe& p, const std::vector<double>& feature);
double probe_accuracy(const LinearProbe& p,
                      const std::vector<std::vector<double>>& features,
                      const std::vector<int>& labels);

struct DisentanglementEval {
  double e_z = 0;      // probe accuracy from deformation codes
  double e_s = 0;      // probe accuracy from shape codes
  double d_score = 0;  // |e_z - e_s|
  double chance = 0;   // majority-class frequency on the eval split
  std::size_t n_classes = 0;
  std::size_t n_train = 0, n_eval = 0;
};

// Trains one probe per encoder on train_split features to predict the
// deformation class, evaluates both on eval_split, and reports the accuracy
// gap. Classes are the distinct deformation classes of the train split.
DisentanglementEval eval_dscore(Model& model, const Dataset& data,
                                const std::string& train_split,
                                const std::string& eval_split,
                                const ProbeConfig& cfg);

// Fixed-point report format: value scaled by 1e3, two decimals ("0.06").
std::string format_milli(double value);

}  // namespace dilo
