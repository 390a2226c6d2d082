#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "pointssm/rng.hpp"

namespace pointssm {

struct TensorImpl {
  std::vector<int64_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is first accumulated
  bool requires_grad = false;

  int64_t numel() const { return int64_t(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Value-semantics handle to a shared flat f64 buffer. Tensors are immutable
// once created except for explicit in-place optimizer updates; ops always
// allocate fresh outputs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor empty(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from_vector(std::vector<int64_t> shape,
                            std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // i.i.d. N(0, stddev^2)
  static Tensor randn(std::vector<int64_t> shape, Rng& rng,
                      double stddev = 1.0, bool requires_grad = false);
  // i.i.d. U(lo, hi)
  static Tensor uniform(std::vector<int64_t> shape, Rng& rng, double lo,
                        double hi, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int64_t>& shape() const { return impl_->shape; }
  int ndim() const { return int(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[size_t(i)]; }
  int64_t numel() const { return impl_->numel(); }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  double item() const;  // numel()==1 only

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  double* grad() { impl_->ensure_grad(); return impl_->grad.data(); }
  const double* grad() const { return impl_->grad.data(); }
  void zero_grad() { if (impl_ && !impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0); }

  // Deep copy of the data (grad not copied).
  Tensor clone(bool requires_grad = false) const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend Tensor wrap_impl(std::shared_ptr<TensorImpl>);
};

inline Tensor wrap_impl(std::shared_ptr<TensorImpl> impl) {
  return Tensor(std::move(impl));
}

// Eager reverse-mode tape. Ops record backward closures while a tape is
// active; backward() replays them in exact reverse order. A tape is
// single-owner: one training step, one backward call, no sharing across
// threads (the active tape is thread-local).
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(const char* op, std::function<void()> backward);
  // Seeds d(loss)/d(loss) = 1 and runs all recorded closures last-to-first.
  // loss must be a recorded scalar; a second call on the same tape throws.
  void backward(const Tensor& loss);

  size_t num_ops() const { return nodes_.size(); }
  static GradTape* active();

 private:
  friend class TapeScope;
  struct Node {
    const char* op;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* prev_;
};

// Throws NumericError if any entry is NaN/Inf (no-op when finite checks are
// disabled). Called at every op boundary.
void check_finite(const Tensor& t, const char* op);

}  // namespace pointssm
