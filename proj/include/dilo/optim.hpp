#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dilo/tensor.hpp"

namespace dilo {

// Per-tensor Adam state. Keeping the step counter per state (rather than per
// optimizer) lets latent codes that are touched only in some batches keep
// correct bias correction.
struct AdamState {
  std::vector<double> m, v;
  std::uint64_t step = 0;

  void init(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update of `param` from its accumulated gradient. A missing
// gradient buffer counts as zero gradient. Throws Error on non-finite
// gradients, naming `name` and the step.
void adam_step(Tensor& param, AdamState& state, double lr,
               const AdamConfig& cfg, const std::string& name);

// Cosine decay from lr_init at step 0 to lr_min at step total_steps.
// Steps past the end clamp to lr_min (warns once on stderr).
class CosineSchedule {
 public:
  CosineSchedule(double lr_init, double lr_min, std::uint64_t total_steps);
  double lr_at(std::uint64_t step) const;

 private:
  double lr_init_, lr_min_;
  std::uint64_t total_;
  mutable bool warned_ = false;
};

}  // namespace dilo
