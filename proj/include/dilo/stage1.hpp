#pragma once

#include <map>
#include <string>
#include <vector>

#include "dilo/config.hpp"
#include "dilo/dataset.hpp"
#include "dilo/latents.hpp"
#include "dilo/nets.hpp"
#include "dilo/optim.hpp"

namespace dilo {

// One row of a training curve: epoch mean objective plus the learning rates
// that were in effect.
struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr_a = 0.0;  // network learning rate
  double lr_b = 0.0;  // latent (stage 1) / encoder (stage 2) learning rate
};

void write_loss_csv(const std::string& path, const std::vector<EpochLog>& curve,
                    const std::string& header);

// Stage-1 objective for a single instance: distance-matrix reconstruction of
// generate(z + noise, s) plus lambda * |z|^2 on the clean deformation code.
// noise, when non-null, must be an untracked tensor of z's shape.
Tensor stage1_loss(Model& model, const Tensor& z, const Tensor& s,
                   const Tensor& target_dist, double lambda,
                   const Tensor* noise);

struct Stage1Result {
  Model model;
  LatentTable latents;
  std::map<std::string, AdamState> net_adam;
  std::vector<EpochLog> curve;
};

// Joint optimization of generator/modulator weights and free per-group /
// per-instance codes over the train split. Deterministic for a fixed config
// and seed, independent of thread count.
Stage1Result train_stage1(const Dataset& data, const RunConfig& cfg,
                          bool verbose = true);

}  // namespace dilo
