#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "dilo/nets.hpp"

namespace dilo {

struct Stage1Config {
  double lambda = 1e-3;     // L2 penalty on deformation codes
  double sigma2 = 9e-4;     // variance of the additive code noise
  double lr_net = 1e-4;
  double lr_latent = 3e-3;
  double lr_min = 1e-5;
  double latent_init_std = 0.01;
  std::size_t epochs = 200;
  std::size_t batch_size = 4;
};

struct Stage2Config {
  double lr_net = 1e-4;
  double lr_enc = 4e-4;
  double lr_min = 1e-5;
  double w_recon = 1.0;
  double w_dis_z = 1.0;
  double w_dis_s = 1.0;
  std::size_t epochs = 200;
  std::size_t batch_size = 4;
  bool from_scratch = false;  // ablation: ignore stage 1, recon term only
};

struct ProbeConfig {
  double reg = 1e-3;
  double lr = 0.1;
  std::size_t steps = 500;
  bool standardize = true;
};

struct ExplainConfig {
  std::size_t k = 12;
  std::size_t samples = 256;
  std::string encoder = "z";               // "s" (shape) or "z" (deformation)
  std::string mode = "latent_similarity";  // or "component"
  std::size_t component = 0;
  bool flip_colors = false;
};

struct SynthConfig {
  std::size_t groups = 8;
  std::size_t deforms = 32;
  std::size_t v_target = 128;
  std::size_t pairs = 100;
};

struct RunConfig {
  std::uint64_t seed = 7;
  int threads = 0;  // 0 = leave runtime default
  ModelConfig model;
  Stage1Config stage1;
  Stage2Config stage2;
  ProbeConfig probe;
  ExplainConfig explain;
  SynthConfig synth;
};

RunConfig default_config();

// Full effective config, including every defaulted value.
nlohmann::json config_to_json(const RunConfig& cfg);

// Overlays a (possibly partial) JSON object onto cfg. Unknown keys raise
// ConfigError naming the key.
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);

// defaults -> file overlay -> validation
RunConfig load_config_file(const std::string& path);

void validate_config(const RunConfig& cfg);

}  // namespace dilo
