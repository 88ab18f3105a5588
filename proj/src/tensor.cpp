#include "lstmcf/tensor.hpp"

#include <sstream>
#include <stdexcept>

#include "lstmcf/error.hpp"

namespace lstmcf {

namespace {
Precision g_precision = Precision::f64;
thread_local Tape* t_active_tape = nullptr;
}  // namespace

void set_precision(Precision p) { g_precision = p; }
Precision precision() { return g_precision; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

static void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimension must be >= 1, got " + shape_string(shape));
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  validate_shape(shape);
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<detail::TensorImpl>()) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size())
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_string(shape));
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

const Tensor& Tensor::set_requires_grad(bool on) const {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::grad_mut() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data);
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void Tape::record(std::string op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  if (consumed_) throw std::logic_error("recording onto a tape that was already replayed; call reset()");
  nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& root) {
  if (consumed_) throw std::logic_error("backward() called twice on the same tape; call reset() first");
  if (!root.defined() || root.numel() != 1)
    throw ShapeError("backward() requires a scalar root, got " +
                     (root.defined() ? shape_string(root.shape()) : std::string("undefined")));
  Tensor seed = root;
  seed.grad_mut()[0] += 1.0;
  visited_ = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
    ++visited_;
  }
  consumed_ = true;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
  visited_ = 0;
}

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(t_active_tape) { t_active_tape = nullptr; }
NoGradScope::~NoGradScope() { t_active_tape = previous_; }

Tape* active_tape() noexcept { return t_active_tape; }

}  // namespace lstmcf
