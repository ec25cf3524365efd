#include "dilo/tensor.hpp"

#include "dilo/errors.hpp"

namespace dilo {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  if (shape.size() > 2)
    throw DimensionError("tensor rank > 2 unsupported: " + shape_str(shape));
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data.assign(shape_size(t.impl_->shape), 0.0);
  t.impl_->requires_grad = requires_grad;
  t.impl_->tracked = requires_grad;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values,
                         bool requires_grad) {
  if (shape_size(shape) != values.size())
    throw DimensionError("from_data: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  Tensor t = zeros(std::move(shape), requires_grad);
  t.impl_->data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double v) { return from_data({}, {v}); }

double* Tensor::grad_data() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad.data();
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
}

double Tensor::item() const {
  if (impl_->data.size() != 1)
    throw ContractError("item(): tensor of shape " + shape_str(impl_->shape) +
                        " is not scalar");
  return impl_->data[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>(*impl_);
  return t;
}

namespace {
thread_local Graph* g_active = nullptr;
}

Graph::Graph() {
  prev_ = g_active;
  g_active = this;
}

Graph::~Graph() { g_active = prev_; }

Graph* Graph::active() { return g_active; }

void Graph::record(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
}

void Graph::backward(Tensor loss) {
  if (loss.size() != 1)
    throw ContractError("backward: loss of shape " + shape_str(loss.shape()) +
                        " is not scalar");
  loss.grad_data()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

}  // namespace dilo
