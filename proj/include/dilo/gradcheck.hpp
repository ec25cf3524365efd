#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dilo/tensor.hpp"

namespace dilo {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Compares tape gradients of a scalar-valued builder against central finite
// differences over every element of every tracked input. Relative error uses
// |a-n| / max(1e-4 * max(1, |loss|), |a|+|n|); the floor scales with the loss
// because central-difference roundoff noise does too, and acts as an absolute
// tolerance of tol * 1e-4 per unit of loss for near-zero gradients.
double fd_max_rel_err(const std::function<Tensor(void)>& build_loss,
                      const std::vector<Tensor>& tracked_inputs,
                      double h = 1e-5);

// One case per registered op kind (several shape/axis variants where it
// matters), plus composed toy models: generator+modulator, the
// distance-matrix reconstruction path, and the encoder with both affine
// transforms enabled.
std::vector<GradCheckResult> gradcheck_all(double h = 1e-5, double tol = 1e-4,
                                           std::uint64_t seed = 1234);

}  // namespace dilo
