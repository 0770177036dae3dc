#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "lcadapt/common.hpp"

namespace lcadapt {

struct Shape4 {
  int64_t n = 0, c = 0, h = 0, w = 0;

  int64_t numel() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    return strf("%lldx%lldx%lldx%lld", (long long)n, (long long)c,
                (long long)h, (long long)w);
  }
};

namespace detail {
struct TensorImpl {
  Shape4 shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until touched by a backward pass
};
}  // namespace detail

// Dense (n, c, h, w) array with paired gradient storage. Copies share the
// underlying buffer; training code relies on that for parameter identity.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape4 s) {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = s;
    t.impl_->data.assign(static_cast<size_t>(s.numel()), 0.0);
    return t;
  }

  static Tensor full(Shape4 s, double v) {
    Tensor t = zeros(s);
    for (auto& x : t.impl_->data) x = v;
    return t;
  }

  static Tensor from(Shape4 s, std::vector<double> values) {
    if (static_cast<int64_t>(values.size()) != s.numel()) {
      throw ConfigError(strf("tensor init: %zu values for shape %s",
                             values.size(), s.str().c_str()));
    }
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = s;
    t.impl_->data = std::move(values);
    return t;
  }

  static Tensor scalar(double v) { return full({1, 1, 1, 1}, v); }

  bool defined() const { return impl_ != nullptr; }
  const Shape4& shape() const { return impl_->shape; }
  int64_t numel() const { return impl_->shape.numel(); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }

  double& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    const Shape4& s = impl_->shape;
    return impl_->data[static_cast<size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
  }
  double at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    const Shape4& s = impl_->shape;
    return impl_->data[static_cast<size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
  }

  double item() const {
    if (numel() != 1)
      throw ConfigError(strf("item() on non-scalar tensor %s", shape().str().c_str()));
    return impl_->data[0];
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }

  std::vector<double>& grad() {
    if (impl_->grad.empty())
      impl_->grad.assign(static_cast<size_t>(numel()), 0.0);
    return impl_->grad;
  }
  const std::vector<double>& grad() const { return impl_->grad; }

  void zero_grad() {
    if (!impl_->grad.empty())
      std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Reverse-mode tape. Ops append closures during forward; backward() seeds the
// loss gradient with 1 and replays the closures in reverse order, which is a
// valid topological order by construction.
class Tape {
 public:
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  size_t size() const { return steps_.size(); }

  void backward(const Tensor& loss) {
    if (loss.numel() != 1)
      throw ConfigError(strf("backward: loss must be scalar, got %s",
                             loss.shape().str().c_str()));
    check_finite(loss.data(), "loss value");
    Tensor l = loss;
    l.grad()[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> steps_;
};

}  // namespace lcadapt
