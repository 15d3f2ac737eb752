// SPDX-License-Identifier: Apache-2.0

#include "urwkv/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace urwkv {

namespace {
thread_local bool g_grad_enabled = true;

void require_defined(const detail::TensorImpl *impl) {
  if (impl == nullptr) {
    throw std::logic_error("operation on an undefined tensor");
  }
}
} // namespace

std::size_t shape_numel(const Shape &shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) {
      os << 'x';
    }
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double> &TensorImpl::grad_ref() {
  if (!has_grad) {
    grad.assign(data.size(), 0.0);
    has_grad = true;
  }
  return grad;
}

Tensor make_result(Shape shape, std::vector<double> data, const char *op,
                   std::vector<Tensor> parents, BackwardFn fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->op = op;
  bool any = false;
  if (g_grad_enabled) {
    for (const Tensor &p : parents) {
      any = any || needs_grad(p);
    }
  }
  if (any) {
    impl->requires_grad = true;
    impl->parents.reserve(parents.size());
    for (const Tensor &p : parents) {
      impl->parents.push_back(p.impl_ptr());
    }
    impl->backward_fn = std::move(fn);
  }
  return Tensor(std::move(impl));
}

} // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) {
      throw std::invalid_argument("tensor extents must be positive, got " +
                                  shape_str(shape));
    }
  }
  std::vector<double> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) {
      throw std::invalid_argument("tensor extents must be positive, got " +
                                  shape_str(shape));
    }
  }
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("shape " + shape_str(shape) + " needs " +
                                std::to_string(shape_numel(shape)) +
                                " values, got " +
                                std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape{1}, {value}, requires_grad);
}

const Shape &Tensor::shape() const {
  require_defined(impl_.get());
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape &s = shape();
  if (axis >= s.size()) {
    throw std::out_of_range("axis " + std::to_string(axis) +
                            " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const {
  require_defined(impl_.get());
  return impl_->data.size();
}

std::span<const double> Tensor::data() const {
  require_defined(impl_.get());
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  require_defined(impl_.get());
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item() on tensor of shape " +
                                shape_str(shape()));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const {
  require_defined(impl_.get());
  return impl_->requires_grad;
}

void Tensor::set_requires_grad(bool value) {
  require_defined(impl_.get());
  if (!is_leaf()) {
    throw std::logic_error("requires_grad can only be changed on leaves");
  }
  impl_->requires_grad = value;
}

bool Tensor::is_leaf() const {
  require_defined(impl_.get());
  return !impl_->backward_fn;
}

bool Tensor::has_grad() const {
  require_defined(impl_.get());
  return impl_->has_grad;
}

std::span<const double> Tensor::grad() const {
  require_defined(impl_.get());
  if (!impl_->has_grad) {
    throw std::logic_error("tensor has no gradient; call backward() first");
  }
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  require_defined(impl_.get());
  return impl_->grad_ref();
}

void Tensor::zero_grad() {
  require_defined(impl_.get());
  impl_->grad.clear();
  impl_->has_grad = false;
}

void Tensor::backward() const {
  require_defined(impl_.get());
  if (impl_->data.size() != 1) {
    throw std::invalid_argument("backward() needs a scalar, got shape " +
                                shape_str(impl_->shape));
  }
  if (!impl_->requires_grad) {
    throw std::logic_error(
        "backward() on a tensor that does not require grad");
  }
  ComputationTape::record(*this).run_backward();
}

Tensor Tensor::detach() const {
  require_defined(impl_.get());
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl_->requires_grad = impl_->requires_grad && is_leaf();
  return t;
}

const std::string &Tensor::op_name() const {
  require_defined(impl_.get());
  return impl_->op;
}

ComputationTape ComputationTape::record(const Tensor &root) {
  ComputationTape tape;
  if (!root.defined()) {
    return tape;
  }
  // Iterative post-order DFS; a node is emitted after all of its parents.
  std::unordered_set<detail::TensorImpl *> visited;
  std::vector<std::pair<detail::TensorImpl *, std::size_t>> stack;
  stack.emplace_back(root.impl(), 0);
  visited.insert(root.impl());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorImpl *parent = node->parents[next].get();
      ++next;
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void ComputationTape::run_backward() const {
  if (nodes_.empty()) {
    return;
  }
  for (detail::TensorImpl *node : nodes_) {
    if (node->backward_fn) {
      node->grad.clear();
      node->has_grad = false;
    }
  }
  detail::TensorImpl *root = nodes_.back();
  std::vector<double> &seed = root->grad_ref();
  for (double &g : seed) {
    g += 1.0;
  }
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::TensorImpl *node = *it;
    if (node->backward_fn && node->has_grad) {
      node->backward_fn(*node);
    }
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

} // namespace urwkv
