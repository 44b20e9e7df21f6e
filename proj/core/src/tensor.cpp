#include "lowlight/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lowlight/error.hpp"

namespace lowlight {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kShapeMismatch: return "shape mismatch";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kNotFound: return "not found";
    case ErrorKind::kInvariant: return "invariant violation";
  }
  return "unknown";
}

}  // namespace lowlight

namespace lowlight::engine {

namespace {

GradTape*& active_slot() {
  thread_local GradTape* tape = nullptr;
  return tape;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : impl_(std::make_shared<Impl>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " elements, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw Error(ErrorKind::kInvalidArgument, "tensor: undefined");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const float> Tensor::data() const {
  if (!impl_) return {};
  return impl_->data;
}

std::span<float> Tensor::mutable_data() {
  if (!impl_) return {};
  return impl_->data;
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_) throw Error(ErrorKind::kInvalidArgument, "tensor: undefined");
  impl_->requires_grad = on;
  return *this;
}

std::span<const float> Tensor::grad() const {
  if (!impl_) return {};
  return impl_->grad;
}

std::span<float> Tensor::mutable_grad() const {
  if (!impl_) throw Error(ErrorKind::kInvalidArgument, "tensor: undefined");
  if (impl_->grad.size() != impl_->data.size()) {
    impl_->grad.assign(impl_->data.size(), 0.0f);
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

float Tensor::at(std::size_t n, std::size_t c, std::size_t y,
                 std::size_t x) const {
  const auto& s = shape();
  if (s.size() != 4) throw ShapeError("tensor: at() needs a rank-4 tensor");
  return impl_->data[((n * s[1] + c) * s[2] + y) * s[3] + x];
}

Tensor Tensor::clone() const {
  if (!impl_) return {};
  Tensor out(impl_->shape, impl_->data);
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

bool Tensor::all_finite() const {
  if (!impl_) return true;
  return std::all_of(impl_->data.begin(), impl_->data.end(),
                     [](float v) { return std::isfinite(v); });
}

GradTape::GradTape() : previous_(active_slot()) { active_slot() = this; }

GradTape::~GradTape() { active_slot() = previous_; }

GradTape* GradTape::active() noexcept { return active_slot(); }

bool GradTape::recording(std::initializer_list<const Tensor*> inputs) noexcept {
  if (!active_slot()) return false;
  for (const Tensor* t : inputs) {
    if (t && t->requires_grad()) return true;
  }
  return false;
}

void GradTape::record(Backward backward) {
  entries_.push_back(std::move(backward));
}

void GradTape::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw Error(ErrorKind::kInvalidArgument,
                "backward: loss does not depend on any trainable tensor");
  }
  loss.mutable_grad()[0] = 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

NoGradGuard::NoGradGuard() : saved_(active_slot()) { active_slot() = nullptr; }

NoGradGuard::~NoGradGuard() { active_slot() = saved_; }

}  // namespace lowlight::engine
