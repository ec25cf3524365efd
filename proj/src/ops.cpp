#include "dilo/ops.hpp"

#include <cmath>

#include "dilo/errors.hpp"
#include "dilo/kernels.hpp"

namespace dilo {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!shape_eq(a.shape(), b.shape()))
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " differ");
}

bool should_record(const Tensor& a) { return Graph::active() && a.tracked(); }
bool should_record(const Tensor& a, const Tensor& b) {
  return Graph::active() && (a.tracked() || b.tracked());
}

void mark_and_record(Tensor& out, std::function<void()> fn) {
  out.mark_tracked();
  Graph::active()->record(std::move(fn));
}

// Reduction geometry for rank-1 (axis 0) and rank-2 (axis 0 or 1) tensors:
// n_out output slots, each reducing n_red strided elements.
struct ReduceDims {
  std::size_t n_out, n_red, out_stride, red_stride;
};

ReduceDims reduce_dims(const char* op, const Tensor& a, std::size_t axis) {
  if (a.rank() == 1) {
    if (axis != 0)
      throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                           " out of range for " + shape_str(a.shape()));
    return {1, a.dim(0), 0, 1};
  }
  if (a.rank() == 2) {
    if (axis == 0) return {a.dim(1), a.dim(0), 1, a.dim(1)};
    if (axis == 1) return {a.dim(0), a.dim(1), a.dim(1), 1};
  }
  throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                       " out of range for " + shape_str(a.shape()));
}

Shape reduced_shape(const Tensor& a, std::size_t axis) {
  if (a.rank() == 1) return {};
  return {a.dim(axis == 0 ? 1 : 0)};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2 || (a.rank() != 1 && a.rank() != 2) ||
      a.dim(a.rank() - 1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const std::size_t m = a.rank() == 2 ? a.dim(0) : 1;
  const std::size_t k = b.dim(0);
  const std::size_t n = b.dim(1);
  Shape out_shape = a.rank() == 2 ? Shape{m, n} : Shape{n};
  Tensor out = Tensor::zeros(out_shape);
  kernels::matmul(a.data(), b.data(), out.data(), m, k, n);
  if (should_record(a, b)) {
    mark_and_record(out, [a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      if (a.tracked()) kernels::matmul_nt_acc(g, b.data(), a.grad_data(), m, n, k);
      if (b.tracked()) kernels::matmul_tn_acc(a.data(), g, b.grad_data(), m, k, n);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (should_record(a, b)) {
    mark_and_record(out, [a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      if (a.tracked()) {
        double* ga = a.grad_data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (b.tracked()) {
        double* gb = b.grad_data();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (should_record(a, b)) {
    mark_and_record(out, [a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      if (a.tracked()) {
        double* ga = a.grad_data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (b.tracked()) {
        double* gb = b.grad_data();
        for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("elementwise_mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (should_record(a, b)) {
    mark_and_record(out, [a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      if (a.tracked()) {
        double* ga = a.grad_data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * b.data()[i];
      }
      if (b.tracked()) {
        double* gb = b.grad_data();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * a.data()[i];
      }
    });
  }
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape("elementwise_div", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] / b.data()[i];
  if (should_record(a, b)) {
    mark_and_record(out, [a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      if (a.tracked()) {
        double* ga = a.grad_data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / b.data()[i];
      }
      if (b.tracked()) {
        double* gb = b.grad_data();
        for (std::size_t i = 0; i < n; ++i)
          gb[i] -= g[i] * a.data()[i] / (b.data()[i] * b.data()[i]);
      }
    });
  }
  return out;
}

Tensor scalar_mul(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
  if (should_record(a)) {
    mark_and_record(out, [a, out, c, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

Tensor scalar_add(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + c;
  if (should_record(a)) {
    mark_and_record(out, [a, out, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor leaky_relu(const Tensor& a, double slope) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.data()[i];
    out.data()[i] = x >= 0.0 ? x : slope * x;
  }
  if (should_record(a)) {
    mark_and_record(out, [a, out, slope, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < n; ++i)
        ga[i] += g[i] * (a.data()[i] >= 0.0 ? 1.0 : slope);
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    out.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  if (should_record(a)) {
    mark_and_record(out, [a, out, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < n; ++i)
        if (a.data()[i] > 0.0) ga[i] += g[i];
    });
  }
  return out;
}

Tensor sqrt_elem(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.data()[i];
    if (x < 0.0)
      throw ContractError("sqrt: negative input " + std::to_string(x));
    out.data()[i] = std::sqrt(x);
  }
  if (should_record(a)) {
    mark_and_record(out, [a, out, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < n; ++i) {
        const double y = out.data()[i];
        if (y > 0.0) ga[i] += g[i] * 0.5 / y;
      }
    });
  }
  return out;
}

Tensor mean_over_axis(const Tensor& a, std::size_t axis) {
  const ReduceDims d = reduce_dims("mean_over_axis", a, axis);
  Tensor out = Tensor::zeros(reduced_shape(a, axis));
  for (std::size_t o = 0; o < d.n_out; ++o) {
    double acc = 0.0;
    for (std::size_t r = 0; r < d.n_red; ++r)
      acc += a.data()[o * d.out_stride + r * d.red_stride];
    out.data()[o] = acc / static_cast<double>(d.n_red);
  }
  if (should_record(a)) {
    mark_and_record(out, [a, out, d]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      double* ga = a.grad_data();
      const double inv = 1.0 / static_cast<double>(d.n_red);
      for (std::size_t o = 0; o < d.n_out; ++o)
        for (std::size_t r = 0; r < d.n_red; ++r)
          ga[o * d.out_stride + r * d.red_stride] += g[o] * inv;
    });
  }
  return out;
}

Tensor variance_over_axis(const Tensor& a, std::size_t axis) {
  const ReduceDims d = reduce_dims("variance_over_axis", a, axis);
  Tensor out = Tensor::zeros(reduced_shape(a, axis));
  std::vector<double> means(d.n_out);
  const double inv = 1.0 / static_cast<double>(d.n_red);
  for (std::size_t o = 0; o < d.n_out; ++o) {
    double acc = 0.0;
    for (std::size_t r = 0; r < d.n_red; ++r)
      acc += a.data()[o * d.out_stride + r * d.red_stride];
    const double mu = acc * inv;
    means[o] = mu;
    double var = 0.0;
    for (std::size_t r = 0; r < d.n_red; ++r) {
      const double c = a.data()[o * d.out_stride + r * d.red_stride] - mu;
      var += c * c;
    }
    out.data()[o] = var * inv;
  }
  if (should_record(a)) {
    mark_and_record(out, [a, out, d, means = std::move(means), inv]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      double* ga = a.grad_data();
      for (std::size_t o = 0; o < d.n_out; ++o)
        for (std::size_t r = 0; r < d.n_red; ++r) {
          const std::size_t ix = o * d.out_stride + r * d.red_stride;
          ga[ix] += g[o] * 2.0 * (a.data()[ix] - means[o]) * inv;
        }
    });
  }
  return out;
}

Tensor max_over_axis(const Tensor& a, std::size_t axis) {
  const ReduceDims d = reduce_dims("max_over_axis", a, axis);
  Tensor out = Tensor::zeros(reduced_shape(a, axis));
  std::vector<std::size_t> arg(d.n_out);
  for (std::size_t o = 0; o < d.n_out; ++o) {
    double best = a.data()[o * d.out_stride];
    std::size_t best_r = 0;
    for (std::size_t r = 1; r < d.n_red; ++r) {
      const double v = a.data()[o * d.out_stride + r * d.red_stride];
      if (v > best) {
        best = v;
        best_r = r;
      }
    }
    out.data()[o] = best;
    arg[o] = best_r;
  }
  if (should_record(a)) {
    mark_and_record(out, [a, out, d, arg = std::move(arg)]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      double* ga = a.grad_data();
      for (std::size_t o = 0; o < d.n_out; ++o)
        ga[o * d.out_stride + arg[o] * d.red_stride] += g[o];
    });
  }
  return out;
}

namespace {

// Right-aligned broadcast map: for each target dim, the source dim index or
// npos when the source has no (or a size-1) dim there.
struct BcastPlan {
  Shape in, out;
  bool compatible() const {
    const std::size_t off = out.size() - in.size();
    for (std::size_t i = 0; i < in.size(); ++i)
      if (in[i] != 1 && in[i] != out[i + off]) return false;
    return true;
  }
  std::size_t map(std::size_t flat_out) const {
    // Decompose flat_out over `out`, clamp broadcast dims, recompose over `in`.
    const std::size_t off = out.size() - in.size();
    std::size_t idx[2] = {0, 0};
    for (std::size_t i = out.size(); i-- > 0;) {
      idx[i] = flat_out % out[i];
      flat_out /= out[i];
    }
    std::size_t flat_in = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      const std::size_t v = in[i] == 1 ? 0 : idx[i + off];
      flat_in = flat_in * in[i] + v;
    }
    return flat_in;
  }
};

}  // namespace

Tensor broadcast(const Tensor& a, const Shape& target) {
  BcastPlan plan{a.shape(), target};
  if (target.size() > 2 || a.rank() > target.size() || !plan.compatible())
    throw DimensionError("broadcast: cannot expand " + shape_str(a.shape()) +
                         " to " + shape_str(target));
  Tensor out = Tensor::zeros(target);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[plan.map(i)];
  if (should_record(a)) {
    mark_and_record(out, [a, out, plan, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < n; ++i) ga[plan.map(i)] += g[i];
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, const Shape& target) {
  if (shape_size(target) != a.size() || target.size() > 2)
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " +
                         shape_str(target) + " changes element count");
  Tensor out = Tensor::from_data(target, a.values());
  if (should_record(a)) {
    mark_and_record(out, [a, out]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank() || a.rank() == 0 || axis >= a.rank())
    throw DimensionError("concat: bad axis " + std::to_string(axis) +
                         " for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const std::size_t other = 1 - axis;
  if (a.rank() == 2 && a.dim(other) != b.dim(other))
    throw DimensionError("concat: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " disagree off-axis");
  Shape out_shape = a.shape();
  out_shape[axis] += b.dim(axis);
  Tensor out = Tensor::zeros(out_shape);
  // Copy rows/segments; rank-1 treated as a single row along axis 0 pieces.
  const std::size_t rows = a.rank() == 1 ? 1 : (axis == 0 ? 1 : a.dim(0));
  const std::size_t wa = a.size() / rows, wb = b.size() / rows;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < wa; ++i)
      out.data()[r * (wa + wb) + i] = a.data()[r * wa + i];
    for (std::size_t i = 0; i < wb; ++i)
      out.data()[r * (wa + wb) + wa + i] = b.data()[r * wb + i];
  }
  if (should_record(a, b)) {
    mark_and_record(out, [a, b, out, rows, wa, wb]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad_data();
      if (a.tracked()) {
        double* ga = a.grad_data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < wa; ++i)
            ga[r * wa + i] += g[r * (wa + wb) + i];
      }
      if (b.tracked()) {
        double* gb = b.grad_data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < wb; ++i)
            gb[r * wb + i] += g[r * (wa + wb) + wa + i];
      }
    });
  }
  return out;
}

Tensor sum_of_squares(const Tensor& a) {
  Tensor out = Tensor::zeros({});
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * a.data()[i];
  out.data()[0] = acc;
  if (should_record(a)) {
    mark_and_record(out, [a, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad_data()[0];
      double* ga = a.grad_data();
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += 2.0 * g * a.data()[i];
    });
  }
  return out;
}

Tensor forward_op(OpKind op, const std::vector<Tensor>& in,
                  const OpAttrs& at) {
  switch (op) {
    case OpKind::kMatmul: return matmul(in[0], in[1]);
    case OpKind::kAdd: return add(in[0], in[1]);
    case OpKind::kSub: return sub(in[0], in[1]);
    case OpKind::kMul: return mul(in[0], in[1]);
    case OpKind::kDiv: return div(in[0], in[1]);
    case OpKind::kScalarMul: return scalar_mul(in[0], at.scalar);
    case OpKind::kScalarAdd: return scalar_add(in[0], at.scalar);
    case OpKind::kLeakyRelu: return leaky_relu(in[0], at.slope);
    case OpKind::kRelu: return relu(in[0]);
    case OpKind::kSqrt: return sqrt_elem(in[0]);
    case OpKind::kMeanOverAxis: return mean_over_axis(in[0], at.axis);
    case OpKind::kVarianceOverAxis: return variance_over_axis(in[0], at.axis);
    case OpKind::kMaxOverAxis: return max_over_axis(in[0], at.axis);
    case OpKind::kBroadcast: return broadcast(in[0], at.target);
    case OpKind::kReshape: return reshape(in[0], at.target);
    case OpKind::kConcat: return concat(in[0], in[1], at.axis);
    case OpKind::kSumOfSquares: return sum_of_squares(in[0]);
    case OpKind::kPairwiseDistances: return pairwise_distances_t(in[0]);
  }
  throw ContractError("forward_op: unknown op kind");
}

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "elementwise_mul";
    case OpKind::kDiv: return "elementwise_div";
    case OpKind::kScalarMul: return "scalar_mul";
    case OpKind::kScalarAdd: return "scalar_add";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kRelu: return "relu";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kMeanOverAxis: return "mean_over_axis";
    case OpKind::kVarianceOverAxis: return "variance_over_axis";
    case OpKind::kMaxOverAxis: return "max_over_axis";
    case OpKind::kBroadcast: return "broadcast";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConcat: return "concat";
    case OpKind::kSumOfSquares: return "sum_of_squares";
    case OpKind::kPairwiseDistances: return "pairwise_distances";
  }
  return "?";
}

}  // namespace dilo
