#include "mira/tensor.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mira::ad {

namespace {
thread_local Tape* t_active_tape = nullptr;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}
}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_product(shape), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = value;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_vector({value}, requires_grad);
}

Tensor Tensor::from_vector(std::vector<double> values, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = {values.size()};
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_matrix(std::size_t rows, std::size_t cols,
                           std::vector<double> values, bool requires_grad) {
  if (values.size() != rows * cols) {
    throw std::invalid_argument("from_matrix: " + std::to_string(values.size()) +
                                " values for " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = {rows, cols};
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

void Tape::record(std::function<void()> backward_fn) {
  records_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar()) {
    throw std::invalid_argument("backward: loss must be a 1-element tensor");
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    (*it)();
  }
}

void Tape::clear() { records_.clear(); }

Tape* active_tape() { return t_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) {
  t_active_tape = &tape;
}

TapeScope::~TapeScope() { t_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(t_active_tape) { t_active_tape = nullptr; }

NoGradScope::~NoGradScope() { t_active_tape = previous_; }

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace mira::ad
