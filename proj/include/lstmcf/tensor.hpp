#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lstmcf {

// Dimension sizes, outermost first. Feature maps are channel-major:
// {channels, height, width}.
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Global numeric precision. Values are always held in double storage; in
// f32 mode every op output and parameter update is rounded through float.
enum class Precision { f32, f64 };
void set_precision(Precision p);
Precision precision();
inline double round_to_precision(double v, Precision p) {
  return p == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};
}  // namespace detail

// Dense row-major array of doubles with an optional gradient buffer.
//
// Copies share storage (handle semantics). Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);
  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  const Tensor& set_requires_grad(bool on) const;

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Gradient buffers stay writable through const handles; only values are
  // frozen. Allocates a zero buffer on first use.
  std::span<double> grad_mut() const;
  void zero_grad() const;

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  // Channel-major accessors for rank-3 maps.
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return impl_->data[(c * impl_->shape[1] + y) * impl_->shape[2] + x];
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return impl_->data[(c * impl_->shape[1] + y) * impl_->shape[2] + x];
  }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Ordered record of differentiable operations.
//
// Ops executed while a TapeScope is active append one node each. Nodes are
// appended in execution order, so inputs always precede their consumers and
// reverse iteration is a valid reverse topological order. A tape replays
// backward once; a second backward() on the same tape throws until reset().
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  void record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn);
  void backward(const Tensor& root);
  void reset();

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  bool consumed() const { return consumed_; }
  // Number of node backward functions invoked by the last backward().
  std::size_t visited() const { return visited_; }

 private:
  std::vector<Node> nodes_;
  bool consumed_ = false;
  std::size_t visited_ = 0;
};

// Installs a tape as the recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording for the current thread (inference, finite differences).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape() noexcept;

}  // namespace lstmcf
