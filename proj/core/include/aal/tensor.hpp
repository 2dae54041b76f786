#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aal/error.hpp"

namespace aal {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
class Tape;

/// Dense row-major array with optional participation in reverse-mode
/// differentiation. Copies share storage (handle semantics); use clone() or
/// detach() for an independent buffer.
template <typename T>
class Tensor {
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a backward pass or ensure_grad()
    bool requires_grad = false;
  };

 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<Impl>()) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("shape " + shape_str(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
    }
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  /// Size of one axis; negative axes count from the end.
  std::size_t dim(std::ptrdiff_t axis) const {
    const auto r = static_cast<std::ptrdiff_t>(rank());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw DimensionError("axis out of range for shape " + shape_str(shape()));
    return impl_->shape[static_cast<std::size_t>(axis)];
  }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T* ptr() { return impl_->data.data(); }
  const T* ptr() const { return impl_->data.data(); }
  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  T item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  // Gradient storage is shared by every handle, so a const handle still
  // exposes it for accumulation by backward rules.
  bool has_grad() const noexcept { return impl_ && !impl_->grad.empty(); }
  std::span<T> grad() const { return impl_->grad; }
  std::span<T> ensure_grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
  }
  void zero_grad() const {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }
  void clear_grad() { impl_->grad.clear(); }

  /// Independent copy of the values, cut from any tape.
  Tensor detach() const { return Tensor(impl_->shape, impl_->data); }
  Tensor clone() const {
    Tensor t = detach();
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
  }

  bool is_same(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of primitive applications on one thread. backward()
/// replays the recorded rules in reverse order, so gradients are a pure
/// function of the forward computation.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Tensor<T> output, std::vector<Tensor<T>> inputs, std::function<void()> rule) {
    entries_.push_back(Entry{std::move(output), std::move(inputs), std::move(rule)});
  }

  void backward(Tensor<T> loss) {
    if (loss.numel() != 1) throw DimensionError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw InputError("loss does not depend on any tensor that requires grad");
    loss.ensure_grad()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      it->output.ensure_grad();
      for (auto& in : it->inputs) {
        if (in.requires_grad()) in.ensure_grad();
      }
      it->rule();
    }
  }

  std::size_t size() const noexcept { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Tape receiving records on the calling thread, or nullptr.
  static Tape*& active() {
    thread_local Tape* current = nullptr;
    return current;
  }

 private:
  struct Entry {
    Tensor<T> output;
    std::vector<Tensor<T>> inputs;
    std::function<void()> rule;
  };
  std::vector<Entry> entries_;
};

/// Makes `tape` the active recorder for this thread while in scope.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : prev_(Tape<T>::active()) { Tape<T>::active() = &tape; }
  ~TapeScope() { Tape<T>::active() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* prev_;
};

/// Suspends recording; outputs computed in scope never require grad.
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : prev_(Tape<T>::active()) { Tape<T>::active() = nullptr; }
  ~NoGradScope() { Tape<T>::active() = prev_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* prev_;
};

}  // namespace aal
