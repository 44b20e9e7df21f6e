#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lowlight::engine {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major float32 array. Copies share storage; ops never write into
// their inputs, they allocate a fresh output. The gradient buffer lives next
// to the data and is filled by GradTape::backward.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const float> data() const;
  // Write access is meant for freshly created tensors and optimizer updates.
  std::span<float> mutable_data();

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const noexcept { return impl_ && !impl_->grad.empty(); }
  std::span<const float> grad() const;
  // Allocates a zero gradient on first use.
  // Shallow const: the handle is const, the shared storage is not.
  std::span<float> mutable_grad() const;
  void zero_grad();

  // NCHW element access for rank-4 tensors.
  float at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const;

  Tensor clone() const;
  bool shares_storage(const Tensor& other) const noexcept {
    return impl_ == other.impl_;
  }
  bool all_finite() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Reverse-mode tape. Constructing a tape makes it the active one on this
// thread; ops executed while a tape is active and at least one input
// requires grad append a backward closure. Destruction restores the previous
// tape.
class GradTape {
 public:
  using Backward = std::function<void()>;

  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* active() noexcept;
  static bool recording(std::initializer_list<const Tensor*> inputs) noexcept;

  void record(Backward backward);
  std::size_t size() const noexcept { return entries_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. The tape is
  // consumed.
  void backward(Tensor& loss);

 private:
  std::vector<Backward> entries_;
  GradTape* previous_ = nullptr;
};

// Disables recording within its scope (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradTape* saved_;
};

}  // namespace lowlight::engine
