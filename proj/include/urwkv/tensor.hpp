// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tensor.hpp
 * @brief  Dense row-major f64 tensor with reverse-mode automatic
 *         differentiation.
 *
 * A Tensor is a cheap handle onto shared storage. Operations that consume
 * tensors requiring gradients record a backward closure and their parents;
 * Tensor::backward() orders the reachable graph topologically and replays
 * the closures once each. Gradients accumulate into leaves until
 * zero_grad() is called.
 */

#ifndef URWKV_TENSOR_HPP
#define URWKV_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace urwkv {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape &shape);
std::string shape_str(const Shape &shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<TensorImpl>> parents;
  /// Propagates this node's grad into its parents. Empty for leaves.
  std::function<void(TensorImpl &)> backward_fn;

  /// Grad buffer, allocated as zeros on first use.
  std::vector<double> &grad_ref();
};

} // namespace detail

class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  explicit operator bool() const { return defined(); }

  const Shape &shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view. Only meant for leaves (parameters, inputs); writing into
  /// a tensor another node has already consumed invalidates that graph.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf grads accumulate across
  /// calls; interior grads are recomputed on every call.
  void backward() const;

  /// Same data, no history.
  Tensor detach() const;
  Tensor clone() const;

  const std::string &op_name() const;

  detail::TensorImpl *impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl> &impl_ptr() const { return impl_; }

  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Reachable graph in topological order (parents before children).
class ComputationTape {
public:
  static ComputationTape record(const Tensor &root);

  std::span<detail::TensorImpl *const> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds root grad with ones and replays every node once in reverse order.
  void run_backward() const;

private:
  std::vector<detail::TensorImpl *> nodes_;
};

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

namespace detail {

using BackwardFn = std::function<void(TensorImpl &)>;

/// Wraps a freshly computed result. History is attached only when grad mode
/// is on and at least one parent requires grad.
Tensor make_result(Shape shape, std::vector<double> data, const char *op,
                   std::vector<Tensor> parents, BackwardFn fn);

inline bool needs_grad(const Tensor &t) {
  return t.defined() && t.impl()->requires_grad;
}

} // namespace detail

} // namespace urwkv

#endif // URWKV_TENSOR_HPP
