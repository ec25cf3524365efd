#pragma once

#include <map>
#include <string>
#include <vector>

#include "dilo/checkpoint.hpp"
#include "dilo/config.hpp"
#include "dilo/dataset.hpp"
#include "dilo/stage1.hpp"

namespace dilo {

// Mean squared error over code dimensions: mean_j (pred_j - target_j)^2.
// This is the anchor-term convention; with code dimension d, a weight of d
// reproduces a plain summed squared norm.
Tensor code_mse(const Tensor& pred, const Tensor& target);

// Stage-2 objective for a single instance: the encoders read the raw point
// cloud, their codes drive the generator, and the codes are anchored to the
// frozen stage-1 codes by MSE penalties (see code_mse).
Tensor stage2_loss(Model& model, const Tensor& x_points,
                   const Tensor& target_dist, const Tensor& z_star,
                   const Tensor& s_star, const Stage2Config& sc);

struct Stage2Result {
  Model model;  // generator + modulator + both encoders
  std::map<std::string, AdamState> adam;
  std::vector<EpochLog> curve;
  std::string parent_hash;  // params.bin checksum of the stage-1 checkpoint
};

// Trains encoders (and fine-tunes the generator/modulator) against the
// frozen stage-1 codes over the train split. The stage-1 checkpoint supplies
// network weights (unless from_scratch), the code targets, and the model
// architecture; optimizer state starts fresh.
Stage2Result train_stage2(const Dataset& data, const Checkpoint& stage1_ck,
                          const RunConfig& cfg, bool verbose = true);

}  // namespace dilo
