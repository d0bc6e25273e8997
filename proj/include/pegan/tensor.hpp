#ifndef PEGAN_TENSOR_HPP
#define PEGAN_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pegan/errors.hpp"

namespace pegan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class Mode { train, eval };

namespace detail {
struct TensorImpl;
struct Node;
}  // namespace detail

/// Dense row-major array of doubles that can take part in a reverse-mode
/// differentiation graph.
///
/// Tensor is a handle: copies share storage, the same way parameters are
/// shared between a model and its optimizer. Use clone() for a deep copy.
/// Image tensors use the batch x channels x height x width layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);

  bool defined() const noexcept { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view; only leaves may be written, recorded results are immutable.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// New leaf holding a copy of the values, cut off from any graph.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  /// Throws NumericError naming `context` if any element is NaN or infinite.
  void check_finite(const std::string& context) const;

  /// Reverse-mode sweep from this scalar. Each recorded graph can be swept
  /// once; intermediate gradients and saved state are released afterwards.
  void backward() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  void require_defined() const;

  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_result(const char*, Shape, std::vector<double>, const std::vector<Tensor>&,
                            std::function<void(std::span<const double>)>);
};

bool all_finite(std::span<const double> values);

/// Creates the output of a primitive and, when any input requires a
/// gradient, records a node whose backward closure receives dL/d(output)
/// and accumulates into the inputs through grad_accumulator().
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs,
                   std::function<void(std::span<const double>)> backward);

/// Gradient buffer of `t`, zero-initialised on first use. Only meaningful for
/// tensors that require a gradient.
std::span<double> grad_accumulator(const Tensor& t);

namespace debug {
/// Test hook: scales the input-gradient of the named primitive by 1.5 so
/// the gradient checker can be shown to catch a broken derivative.
/// An empty name disables the fault.
void inject_backward_fault(const std::string& op);
bool backward_fault(const char* op);
/// Backward passes the current fault has corrupted since it was injected.
std::size_t backward_fault_hits();
}  // namespace debug

}  // namespace pegan

#endif  // PEGAN_TENSOR_HPP
