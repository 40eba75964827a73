#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sert {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float64 array with optional gradient buffer.
///
/// Tensor is a cheap handle: copies share storage. Values are treated as
/// immutable once an operation has consumed them; the only sanctioned
/// in-place writers are construction code and optimizer steps.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;
  bool defined() const { return impl_ != nullptr; }

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double operator[](std::size_t i) const { return data()[i]; }
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Gradient buffer, allocated (zeroed) on first access.
  std::span<double> grad_buffer() const;
  void zero_grad();
  void drop_grad();

  /// Storage-independent copy with no gradient state.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  /// Throws NumericError naming `what` if any value is NaN or infinite.
  void check_finite(const std::string& what) const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// Records differentiable operations for one reverse sweep.
///
/// Operations record onto the tape bound to the current thread by a
/// TapeGuard, and only when at least one input requires a gradient.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and runs the recorded rules in reverse.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

class TapeGuard {
 public:
  explicit TapeGuard(Tape& tape);
  ~TapeGuard();
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Output tensor wired for recording when any input requires a gradient.
/// Returns true when the caller must record a backward rule.
bool needs_record(std::initializer_list<const Tensor*> inputs);

}  // namespace sert
