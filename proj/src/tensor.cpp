#include "pointssm/tensor.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "pointssm/common.hpp"

namespace pointssm {

namespace {

std::atomic<bool> g_finite_checks{true};

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension");
    n *= d;
  }
  return n;
}

thread_local GradTape* g_active_tape = nullptr;

}  // namespace

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool on) { g_finite_checks.store(on, std::memory_order_relaxed); }

Tensor Tensor::empty(std::vector<int64_t> shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  int64_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data.resize(size_t(n));
  impl->requires_grad = requires_grad;
  return wrap_impl(std::move(impl));
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  Tensor t = empty(std::move(shape), requires_grad);
  std::fill(t.impl()->data.begin(), t.impl()->data.end(), 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, bool requires_grad) {
  Tensor t = empty(std::move(shape), requires_grad);
  std::fill(t.impl()->data.begin(), t.impl()->data.end(), value);
  return t;
}

Tensor Tensor::from_vector(std::vector<int64_t> shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != int64_t(values.size()))
    throw std::invalid_argument("tensor: shape does not match value count");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return wrap_impl(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_vector({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  Tensor t = empty(std::move(shape), requires_grad);
  for (double& v : t.impl()->data) v = stddev * rng.normal();
  return t;
}

Tensor Tensor::uniform(std::vector<int64_t> shape, Rng& rng, double lo, double hi,
                       bool requires_grad) {
  Tensor t = empty(std::move(shape), requires_grad);
  for (double& v : t.impl()->data) v = rng.uniform(lo, hi);
  return t;
}

double Tensor::item() const {
  if (!impl_ || impl_->numel() != 1)
    throw std::invalid_argument("tensor: item() needs exactly one element");
  return impl_->data[0];
}

Tensor Tensor::clone(bool requires_grad) const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->requires_grad = requires_grad;
  return wrap_impl(std::move(impl));
}

void GradTape::record(const char* op, std::function<void()> backward) {
  nodes_.push_back(Node{op, std::move(backward)});
}

void GradTape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("grad tape: backward called twice");
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("grad tape: loss must be a defined scalar");
  if (!loss.requires_grad())
    throw std::invalid_argument("grad tape: loss does not require grad");
  consumed_ = true;
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

GradTape* GradTape::active() { return g_active_tape; }

TapeScope::TapeScope(GradTape& tape) {
  prev_ = g_active_tape;
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = prev_; }

void check_finite(const Tensor& t, const char* op) {
  if (!finite_checks_enabled()) return;
  for (double v : t.impl()->data) {
    if (!std::isfinite(v))
      throw NumericError(std::string(op) + ": non-finite value produced");
  }
}

}  // namespace pointssm
