#include "pegan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace pegan {

namespace detail {

struct Node {
  const char* op = "";
  std::vector<Tensor> inputs;
  std::function<void(std::span<const double>)> backward;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;
};

}  // namespace detail

namespace {

std::string& fault_slot() {
  static std::string op;
  return op;
}

std::size_t& fault_hits() {
  static std::size_t hits = 0;
  return hits;
}

void validate_shape(const Shape& shape) {
  for (auto extent : shape)
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  validate_shape(shape);
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size())
    throw ShapeError("shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

void Tensor::require_defined() const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
}

const Shape& Tensor::shape() const {
  require_defined();
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  require_defined();
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  require_defined();
  if (impl_->node) throw UsageError("cannot write into a recorded (non-leaf) tensor");
  return impl_->data;
}

double Tensor::item() const {
  require_defined();
  if (impl_->data.size() != 1)
    throw UsageError("item() on tensor of shape " + shape_str(impl_->shape));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  require_defined();
  if (impl_->node) throw UsageError("requires_grad can only be set on leaves");
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  require_defined();
  if (impl_->grad.empty()) throw UsageError("tensor has no gradient");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const {
  require_defined();
  return Tensor(impl_->shape, impl_->data);
}

void Tensor::check_finite(const std::string& context) const {
  require_defined();
  if (!all_finite(impl_->data)) throw NumericError("non-finite value in " + context);
}

void Tensor::backward() const {
  require_defined();
  if (impl_->data.size() != 1)
    throw UsageError("backward() needs a scalar output, got shape " + shape_str(impl_->shape));
  if (!impl_->requires_grad) throw UsageError("backward() on a tensor that does not require grad");
  if (!impl_->node) {
    impl_->grad.assign(1, 1.0);
    return;
  }
  if (impl_->node->consumed)
    throw UsageError("backward() called twice on the same graph; record it again");

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    if (t->node && next < t->node->inputs.size()) {
      auto* child = t->node->inputs[next++].impl().get();
      if (child && child->node && child->requires_grad && visited.insert(child).second)
        stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(t);
    stack.pop_back();
  }

  for (auto* t : order)
    if (t->node->consumed)
      throw UsageError("graph segment already swept by an earlier backward(); record it again");

  impl_->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* t = *it;
    if (!t->grad.empty()) t->node->backward(t->grad);
  }
  for (auto* t : order) {
    t->node->consumed = true;
    t->node->backward = nullptr;
    t->node->inputs.clear();
    if (t != impl_.get()) {
      t->grad.clear();
      t->grad.shrink_to_fit();
    }
  }
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs,
                   std::function<void(std::span<const double>)> backward) {
  if (!all_finite(values)) throw NumericError(std::string("non-finite output from ") + op);
  Tensor out(std::move(shape), std::move(values));
  bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                [](const Tensor& t) { return t.requires_grad(); });
  if (needs_grad) {
    auto node = std::make_shared<detail::Node>();
    node->op = op;
    node->inputs = inputs;
    node->backward = std::move(backward);
    out.impl_->node = std::move(node);
    out.impl_->requires_grad = true;
  }
  return out;
}

std::span<double> grad_accumulator(const Tensor& t) {
  auto& impl = *t.impl();
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad;
}

namespace debug {
void inject_backward_fault(const std::string& op) {
  fault_slot() = op;
  fault_hits() = 0;
}
bool backward_fault(const char* op) {
  const bool hit = !fault_slot().empty() && fault_slot() == op;
  if (hit) ++fault_hits();
  return hit;
}
std::size_t backward_fault_hits() { return fault_hits(); }
}  // namespace debug

}  // namespace pegan
