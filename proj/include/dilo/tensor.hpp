#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace dilo {

// Dense row-major shape, rank 0 (scalar), 1 or 2.
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);
bool shape_eq(const Shape& a, const Shape& b);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first use
  bool requires_grad = false;
  bool tracked = false;  // produced by a recorded op or requires_grad
};
}  // namespace detail

// Shared-storage handle; copying a Tensor aliases the same buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& values() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) {
    impl_->requires_grad = v;
    if (v) impl_->tracked = true;
  }
  bool tracked() const { return impl_->tracked; }
  void mark_tracked() { impl_->tracked = true; }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Zero-initialized on first access. Const like shared_ptr::get: the handle
  // is const, the shared buffer it designates is not.
  double* grad_data() const;
  const std::vector<double>& grad() const { return impl_->grad; }
  void zero_grad();

  double item() const;
  double at(std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t i, std::size_t j) const {
    return impl_->data[i * impl_->shape[1] + j];
  }

  Tensor clone() const;
  bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Define-by-run tape. Constructing a Graph makes it the active tape; ops
// record backward closures onto it while any input is tracked. Destruction
// restores the previously active tape. Recording and backward are
// single-threaded by contract.
class Graph {
 public:
  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* active();

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and runs recorded closures in exact reverse
  // recording order. Gradients accumulate additively across fan-out.
  // Throws ContractError if loss is not scalar.
  void backward(Tensor loss);

 private:
  std::vector<std::function<void()>> nodes_;
  Graph* prev_ = nullptr;
};

}  // namespace dilo
