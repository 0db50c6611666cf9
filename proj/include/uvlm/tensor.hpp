#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "uvlm/errors.hpp"

namespace uvlm {

// Dense 64-bit float tensor with shared storage, an optional gradient buffer
// and reverse-mode autodiff via the thread-local Tape. Copying a Tensor is a
// shallow copy; clone() copies storage.
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<Impl>()) {}

  explicit Tensor(std::vector<size_t> shape, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    impl_->shape = std::move(shape);
    size_t n = 1;
    for (size_t d : impl_->shape) {
      if (d == 0) throw DimensionError("tensor dimension must be positive");
      n *= d;
    }
    impl_->values.assign(n, 0.0);
    set_requires_grad(requires_grad);
  }

  static Tensor scalar(double v) {
    Tensor t({1});
    t.impl_->values[0] = v;
    return t;
  }

  static Tensor from_values(std::vector<size_t> shape,
                            std::vector<double> values,
                            bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    if (values.size() != t.size())
      throw DimensionError("value count does not match shape");
    t.impl_->values = std::move(values);
    return t;
  }

  const std::vector<size_t>& shape() const { return impl_->shape; }
  size_t ndim() const { return impl_->shape.size(); }
  size_t dim(size_t i) const { return impl_->shape.at(i); }
  size_t size() const { return impl_->values.size(); }

  // Row/column view of the trailing two (or sole) dimensions.
  size_t rows() const {
    return ndim() >= 2 ? impl_->shape[ndim() - 2] : 1;
  }
  size_t cols() const {
    return ndim() >= 1 ? impl_->shape[ndim() - 1] : 1;
  }

  bool is_scalar() const { return size() == 1; }

  std::vector<double>& values() { return impl_->values; }
  const std::vector<double>& values() const { return impl_->values; }

  double& at(size_t i) { return impl_->values[i]; }
  double at(size_t i) const { return impl_->values[i]; }
  double& at(size_t r, size_t c) { return impl_->values[r * cols() + c]; }
  double at(size_t r, size_t c) const { return impl_->values[r * cols() + c]; }

  double item() const {
    if (!is_scalar()) throw ContractError("item() requires a scalar tensor");
    return impl_->values[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) {
    impl_->requires_grad = v;
    if (v && impl_->grad.size() != impl_->values.size())
      impl_->grad.assign(impl_->values.size(), 0.0);
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<double>& grad() { return impl_->grad; }
  const std::vector<double>& grad() const { return impl_->grad; }
  void zero_grad() {
    if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }

  bool is_leaf() const { return impl_->leaf; }
  void mark_non_leaf() { impl_->leaf = false; }

  Tensor clone() const {
    Tensor t;
    t.impl_->shape = impl_->shape;
    t.impl_->values = impl_->values;
    return t;
  }

  // Identity of the underlying storage (for attach/detach bookkeeping).
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < impl_->shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(impl_->shape[i]);
    }
    return s + "]";
  }

 private:
  struct Impl {
    std::vector<size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until requires_grad is set
    bool requires_grad = false;
    bool leaf = true;
  };
  std::shared_ptr<Impl> impl_;
};

// Define-by-run tape. Constructing a Tape makes it the active tape for the
// current thread; ops record backward closures onto it while any of their
// inputs require grad. Without an active tape ops run in inference mode.
class Tape {
 public:
  Tape() {
    prev_ = current_;
    current_ = this;
  }
  ~Tape() { current_ = prev_; }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_; }

  void record(Tensor output, std::function<void()> backward_fn) {
    nodes_.push_back({std::move(output), std::move(backward_fn)});
  }

  // Seeds d(loss)/d(loss) = 1 and replays recorded ops in reverse. Gradients
  // of non-leaf tensors are cleared first so repeated calls accumulate into
  // leaves only.
  void backward(Tensor& loss) {
    if (!loss.is_scalar())
      throw ContractError("backward requires a scalar loss, got shape " +
                          loss.shape_str());
    for (auto& n : nodes_) {
      if (!n.output.is_leaf()) n.output.zero_grad();
    }
    if (!loss.has_grad())
      throw ContractError("backward: loss was not recorded on this tape");
    loss.grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->backward_fn) it->backward_fn();
    }
  }

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor output;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
  Tape* prev_ = nullptr;
  static thread_local Tape* current_;
};

}  // namespace uvlm
