#pragma once

#include <string>
#include <vector>

#include "dilo/tensor.hpp"

namespace dilo {

// Differentiable op set. Every op validates shapes up front (DimensionError
// with op name and offending shapes), computes the forward result, and when
// a tape is active and any input is tracked, records a closure that adds its
// gradient contribution into each tracked input.

Tensor matmul(const Tensor& a, const Tensor& b);     // {m,k}x{k,n} or {k}x{k,n}
Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor div(const Tensor& a, const Tensor& b);        // elementwise
Tensor scalar_mul(const Tensor& a, double c);
Tensor scalar_add(const Tensor& a, double c);
Tensor leaky_relu(const Tensor& a, double slope = 0.02);
Tensor relu(const Tensor& a);
Tensor sqrt_elem(const Tensor& a);                   // d/dx at 0 taken as 0
Tensor mean_over_axis(const Tensor& a, std::size_t axis);
Tensor variance_over_axis(const Tensor& a, std::size_t axis);  // population
Tensor max_over_axis(const Tensor& a, std::size_t axis);  // first-max subgrad
Tensor broadcast(const Tensor& a, const Shape& target);   // right-aligned
Tensor reshape(const Tensor& a, const Shape& target);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor sum_of_squares(const Tensor& a);              // scalar

// V x 3 points -> V x V euclidean distance matrix, registered as a custom op
// with a hand-written backward; subgradient 0 on the diagonal and for
// coincident points. Implemented alongside the geometry kernels.
Tensor pairwise_distances_t(const Tensor& points);

// Dispatcher over the registered op kinds, used by the gradient checker.
enum class OpKind {
  kMatmul, kAdd, kSub, kMul, kDiv, kScalarMul, kScalarAdd,
  kLeakyRelu, kRelu, kSqrt, kMeanOverAxis, kVarianceOverAxis,
  kMaxOverAxis, kBroadcast, kReshape, kConcat, kSumOfSquares,
  kPairwiseDistances,
};

struct OpAttrs {
  double scalar = 0.0;
  double slope = 0.02;
  std::size_t axis = 0;
  Shape target;
};

Tensor forward_op(OpKind op, const std::vector<Tensor>& inputs,
                  const OpAttrs& attrs);
const char* op_name(OpKind op);

}  // namespace dilo
