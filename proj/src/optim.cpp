#include "dilo/optim.hpp"

#include <cmath>
#include <cstdio>

#include "dilo/errors.hpp"

namespace dilo {

void adam_step(Tensor& param, AdamState& state, double lr,
               const AdamConfig& cfg, const std::string& name) {
  const std::size_t n = param.size();
  if (state.m.size() != n)
    throw ContractError("adam_step: state size " +
                        std::to_string(state.m.size()) + " vs param " +
                        std::to_string(n) + " for " + name);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double* g = param.has_grad() ? param.grad().data() : nullptr;
  double* p = param.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g ? g[i] : 0.0;
    if (!std::isfinite(gi))
      throw Error("adam_step: non-finite gradient in " + name + " at step " +
                  std::to_string(state.step));
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gi;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

CosineSchedule::CosineSchedule(double lr_init, double lr_min,
                               std::uint64_t total_steps)
    : lr_init_(lr_init), lr_min_(lr_min), total_(total_steps) {
  if (total_steps == 0) throw ContractError("cosine schedule: zero steps");
}

double CosineSchedule::lr_at(std::uint64_t step) const {
  if (step > total_) {
    if (!warned_) {
      std::fprintf(stderr,
                   "warning: schedule stepped past end (%llu > %llu); "
                   "clamping to lr_min\n",
                   static_cast<unsigned long long>(step),
                   static_cast<unsigned long long>(total_));
      warned_ = true;
    }
    return lr_min_;
  }
  const double t = static_cast<double>(step) / static_cast<double>(total_);
  return lr_min_ +
         0.5 * (lr_init_ - lr_min_) * (1.0 + std::cos(3.14159265358979323846 * t));
}

}  // namespace dilo
