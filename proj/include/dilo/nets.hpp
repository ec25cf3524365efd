#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dilo/tensor.hpp"

namespace dilo {

// Feature renormalization with injected scale/shift, the core generator
// block: gamma * (h - mean) / (std + eps) + beta, statistics over the whole
// rank-1 feature vector (population variance).
Tensor adain(const Tensor& h, const Tensor& gamma, const Tensor& beta,
             double eps);

// Per-feature normalization of a [V,C] activation across the V points of one
// sample, with learned per-feature affine. Plays the role batch
// normalization has in minibatched trainers but is deterministic and
// batch-free.
Tensor feature_norm(const Tensor& h, const Tensor& gamma, const Tensor& beta,
                    double eps);

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct GeneratorConfig {
  std::vector<std::size_t> front_widths{64};  // hidden widths, code -> first block
  // Widths of the styled blocks; the final block width is V*points_channels,
  // derived unless adain_out_width pins it explicitly (then it must match).
  std::vector<std::size_t> adain_widths{32, 64, 128, 256};
  std::size_t adain_out_width = 0;
  std::size_t points_channels = 4;
  std::vector<std::size_t> tail_widths{64};  // per-point hidden widths -> 3
  double leaky_slope = 0.02;
  double eps_norm = 1e-5;
};

struct ModulatorConfig {
  std::size_t hidden = 64;
};

struct EncoderConfig {
  std::vector<std::size_t> point_widths{32, 48, 64, 96};
  std::vector<std::size_t> head_widths{96};
  bool input_transform = true;
  bool feature_transform = true;
  std::size_t feature_transform_at = 2;  // applied before this per-point layer
  std::size_t tnet_hidden = 16;
  double eps_norm = 1e-5;
};

struct ModelConfig {
  std::size_t d_s = 16;
  std::size_t d_z = 16;
  // Unit conversion between world geometry and network space: every point
  // cloud is multiplied by this factor before entering a network, and
  // generated clouds are divided by it on the way out. Calibrated once so
  // the reconstruction and code-anchor terms train at compatible magnitudes
  // for meter-scale input; part of the model contract and serialized with it.
  double input_scale = 0.4;
  GeneratorConfig gen;
  ModulatorConfig mod;
  EncoderConfig enc;
};

struct Linear {
  Tensor w, b;
};

class CounterRng;

// Deformation branch: FC front stack, then J blocks of
// adain(gamma_j, beta_j) -> linear -> leaky_relu, reshape to [V,C], then a
// shared per-point tail down to xyz.
class GeneratorNet {
 public:
  GeneratorNet() = default;
  GeneratorNet(const GeneratorConfig& cfg, std::size_t d_z, std::size_t v,
               CounterRng& rng);
  Tensor forward(const Tensor& z, const std::vector<Tensor>& gammas,
                 const std::vector<Tensor>& betas) const;
  std::size_t n_blocks() const { return widths_.size(); }
  const std::vector<std::size_t>& block_widths() const { return widths_; }
  void collect_params(std::vector<NamedParam>& out) const;

 private:
  GeneratorConfig cfg_;
  std::size_t v_ = 0;
  std::vector<std::size_t> widths_;  // resolved block widths incl. final
  std::vector<Linear> front_, blocks_, tail_;
};

// Shape branch: trunk FC from s, then per-block zero-initialized heads with
// bias 1 (gamma) / 0 (beta), so at initialization every block sees the
// identity style and the output is independent of s.
class ModulatorNet {
 public:
  ModulatorNet() = default;
  ModulatorNet(const ModulatorConfig& cfg, std::size_t d_s,
               const std::vector<std::size_t>& block_widths, double leaky_slope,
               CounterRng& rng);
  void forward(const Tensor& s, std::vector<Tensor>& gammas,
               std::vector<Tensor>& betas) const;
  void collect_params(std::vector<NamedParam>& out) const;

 private:
  double slope_ = 0.02;
  Linear trunk_;
  std::vector<Linear> gamma_heads_, beta_heads_;
};

// Point-cloud encoder: optional identity-initialized input/feature affine
// transforms, shared per-point MLP with per-feature normalization + ReLU,
// global max-pool, FC head to the code. Handles any V >= 1 and is invariant
// to point order.
class EncoderNet {
 public:
  EncoderNet() = default;
  EncoderNet(const EncoderConfig& cfg, std::size_t d_code, CounterRng& rng);
  Tensor forward(const Tensor& x) const;  // [V,3] -> [d_code]
  void collect_params(std::vector<NamedParam>& out) const;

 private:
  struct TNet {
    Linear mlp, head;
    std::size_t dim = 0;
  };
  Tensor apply_tnet(const TNet& t, const Tensor& x) const;

  EncoderConfig cfg_;
  std::vector<Linear> convs_;
  std::vector<Linear> norms_;  // w = gamma, b = beta
  std::optional<TNet> input_t_, feature_t_;
  std::vector<Linear> head_;
};

// The trainable bundle. Stage 1 builds it without encoders; stage 2 adds
// them. Parameter collection order is fixed and backs the checkpoint layout.
struct Model {
  ModelConfig cfg;
  std::size_t V = 0;
  GeneratorNet gen;
  ModulatorNet mod;
  std::optional<EncoderNet> enc_s, enc_z;

  static Model build(const ModelConfig& cfg, std::size_t v, std::uint64_t seed,
                     bool with_encoders = false);
  void add_encoders(std::uint64_t seed);

  Tensor generate(const Tensor& z_in, const Tensor& s) const;
  Tensor encode_s(const Tensor& x) const;
  Tensor encode_z(const Tensor& x) const;

  std::vector<NamedParam> params() const;  // generator+modulator[+encoders]
};

void validate_model_config(const ModelConfig& cfg, std::size_t v);

}  // namespace dilo
