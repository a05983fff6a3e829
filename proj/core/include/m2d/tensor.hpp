#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "m2d/errors.hpp"
#include "m2d/rng.hpp"

namespace m2d {

using Shape = std::vector<std::int64_t>;

std::string shape_to_string(const Shape& s);
std::int64_t shape_numel(const Shape& s);

class GradMap;

namespace detail {

using BackwardFn = std::function<void(const std::vector<double>& gout, GradMap& sink)>;

// One vertex of the computation graph. Values are immutable after
// construction; the optimizer mutates parameter data through the explicit
// update hook on Tensor.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty means "no gradient accumulated yet"
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  BackwardFn backward;

  // True when gradients must flow to or through this node.
  bool tracks_grad() const { return requires_grad || static_cast<bool>(backward); }
};

}  // namespace detail

// Gradient buffers keyed by graph node, produced by compute_gradients.
// Keeping gradients out of the shared nodes lets concurrent evaluations of
// the same parameters each hold their own buffers.
class GradMap {
 public:
  std::vector<double>& accumulate_buffer(const detail::TensorNode* n);
  const std::vector<double>* find(const detail::TensorNode* n) const;
  std::size_t size() const { return buffers_.size(); }

 private:
  std::unordered_map<const detail::TensorNode*, std::vector<double>> buffers_;
};

// Dense n-dimensional tensor of 64-bit floats, row-major, with optional
// reverse-mode gradient tracking. Cheap to copy (shared handle).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Tensor fan_in_init(Shape shape, std::int64_t fan_in, Rng& rng, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  std::int64_t dim(int i) const;
  std::int64_t numel() const;
  bool requires_grad() const;

  const std::vector<double>& data() const;
  double value() const;  // scalar tensors only
  double at(std::initializer_list<std::int64_t> idx) const;

  bool has_grad() const;
  const std::vector<double>& grad() const;  // UsageError when absent
  void zero_grad();
  // Adds into the accumulated gradient (allocating it at zero when absent).
  void accumulate_grad(const std::vector<double>& g);

  // Runs reverse-mode differentiation from this scalar and accumulates the
  // result into the .grad of every leaf tensor with requires_grad.
  void backward() const;

  // Explicit in-place update (optimizer hook). Graphs built before the call
  // must not be reused afterwards. Throws NumericError on non-finite values.
  void update_data(const std::vector<double>& new_data);

  detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

  // Factory for ops: wraps a freshly computed result and its backward pass.
  static Tensor make_result(Shape shape, std::vector<double> data,
                            std::vector<std::shared_ptr<detail::TensorNode>> parents,
                            detail::BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode pass from a scalar root. Pure: does not touch any .grad, so
// several evaluations sharing parameters may run on different threads.
GradMap compute_gradients(const Tensor& root);

// Throws NumericError naming `what` if any value is NaN or infinite.
void ensure_finite(const std::vector<double>& values, const char* what);

}  // namespace m2d
