#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

// Reverse-mode automatic differentiation over dense 64-bit tensors.
// Eager execution: every primitive runs immediately and, when a tape is
// active and some input requires gradients, pushes one record holding the
// vector-Jacobian product. backward() replays the records in reverse.

namespace mira::ad {

struct TensorImpl {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until touched by backward()
  bool requires_grad = false;

  std::size_t size() const { return data.size(); }
  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_vector(std::vector<double> values, bool requires_grad = false);
  static Tensor from_matrix(std::size_t rows, std::size_t cols,
                            std::vector<double> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return impl_->shape; }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t rows() const { return impl_->shape.at(0); }
  std::size_t cols() const { return impl_->shape.at(1); }
  bool is_scalar() const { return impl_->data.size() == 1; }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  std::vector<double>& grad() { return impl_->grad; }
  const std::vector<double>& grad() const { return impl_->grad; }
  bool has_grad() const { return impl_->has_grad(); }
  void zero_grad() { impl_->grad.clear(); }

  double value() const { return impl_->data.at(0); }
  double& at(std::size_t i) { return impl_->data.at(i); }
  double at(std::size_t i) const { return impl_->data.at(i); }
  double& at(std::size_t r, std::size_t c) { return impl_->data.at(r * cols() + c); }
  double at(std::size_t r, std::size_t c) const { return impl_->data.at(r * cols() + c); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

class Tape {
 public:
  // Backward closures run in reverse record order; each reads the gradients
  // written by later records and accumulates into its inputs. Closures
  // capture their tensors by value, which keeps the intermediates alive.
  void record(std::function<void()> backward_fn);

  // Seeds d(loss)/d(loss) = 1 and replays all records in reverse.
  // Repeated calls without clearing gradients accumulate.
  void backward(const Tensor& loss);

  void clear();
  std::size_t record_count() const { return records_.size(); }

 private:
  std::vector<std::function<void()>> records_;
};

// The active tape is a thread-local; ops record onto it when set.
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace mira::ad
