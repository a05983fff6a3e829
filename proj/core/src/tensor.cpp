#include "m2d/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace m2d {

std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

void ensure_finite(const std::vector<double>& values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite value produced");
    }
  }
}

// ---------------------------------------------------------------------------
// GradMap

std::vector<double>& GradMap::accumulate_buffer(const detail::TensorNode* n) {
  auto it = buffers_.find(n);
  if (it == buffers_.end()) {
    it = buffers_.emplace(n, std::vector<double>(n->data.size(), 0.0)).first;
  }
  return it->second;
}

const std::vector<double>* GradMap::find(const detail::TensorNode* n) const {
  auto it = buffers_.find(n);
  return it == buffers_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Tensor

static void validate_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_to_string(shape));
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  validate_shape(shape);
  auto n = std::make_shared<detail::TensorNode>();
  n->data.assign(shape_numel(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  validate_shape(shape);
  if (!std::isfinite(value)) throw NumericError("Tensor::full: non-finite fill value");
  auto n = std::make_shared<detail::TensorNode>();
  n->data.assign(shape_numel(shape), value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  validate_shape(shape);
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("from_data: shape " + shape_to_string(shape) + " wants " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  ensure_finite(data, "from_data");
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

Tensor Tensor::fan_in_init(Shape shape, std::int64_t fan_in, Rng& rng, bool requires_grad) {
  if (fan_in <= 0) throw ConfigError("fan_in_init: fan_in must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> data,
                           std::vector<std::shared_ptr<detail::TensorNode>> parents,
                           detail::BackwardFn backward) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("make_result: shape " + shape_to_string(shape) +
                         " does not match value count " + std::to_string(data.size()));
  }
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool any_tracked = false;
  for (const auto& p : parents) {
    if (p && p->tracks_grad()) any_tracked = true;
  }
  if (any_tracked) {
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

const Shape& Tensor::shape() const {
  if (!node_) throw UsageError("shape() on undefined tensor");
  return node_->shape;
}

std::int64_t Tensor::dim(int i) const {
  const auto& s = shape();
  if (i < 0 || i >= static_cast<int>(s.size())) {
    throw IndexError("dim " + std::to_string(i) + " out of range for " + shape_to_string(s));
  }
  return s[i];
}

std::int64_t Tensor::numel() const {
  if (!node_) return 0;
  return static_cast<std::int64_t>(node_->data.size());
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::data() const {
  if (!node_) throw UsageError("data() on undefined tensor");
  return node_->data;
}

double Tensor::value() const {
  if (numel() != 1) throw UsageError("value() requires a scalar, got " + shape_to_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
  const auto& s = shape();
  if (idx.size() != s.size()) {
    throw IndexError("at(): rank mismatch for " + shape_to_string(s));
  }
  std::int64_t flat = 0;
  int i = 0;
  for (auto v : idx) {
    if (v < 0 || v >= s[i]) throw IndexError("at(): index out of range");
    flat = flat * s[i] + v;
    ++i;
  }
  return node_->data[static_cast<std::size_t>(flat)];
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw UsageError("grad() called but no gradient has been accumulated");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
  if (!node_) throw UsageError("accumulate_grad on undefined tensor");
  if (g.size() != node_->data.size()) {
    throw DimensionError("accumulate_grad: size mismatch");
  }
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) node_->grad[i] += g[i];
}

void Tensor::update_data(const std::vector<double>& new_data) {
  if (!node_) throw UsageError("update_data on undefined tensor");
  if (new_data.size() != node_->data.size()) {
    throw DimensionError("update_data: size mismatch");
  }
  ensure_finite(new_data, "update_data");
  node_->data = new_data;
}

// ---------------------------------------------------------------------------
// Reverse mode

static std::vector<detail::TensorNode*> topo_order(detail::TensorNode* root) {
  // Iterative post-order DFS; graphs can be thousands of nodes deep.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p && p->tracks_grad() && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  return order;
}

GradMap compute_gradients(const Tensor& root) {
  if (root.numel() != 1) {
    throw UsageError("compute_gradients: root must be a scalar, got " +
                     shape_to_string(root.shape()));
  }
  GradMap gm;
  detail::TensorNode* r = root.node();
  if (!r->tracks_grad()) return gm;
  gm.accumulate_buffer(r)[0] = 1.0;
  auto order = topo_order(r);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (!n->backward) continue;
    const auto* g = gm.find(n);
    if (!g) continue;
    n->backward(*g, gm);
  }
  return gm;
}

void Tensor::backward() const {
  GradMap gm = compute_gradients(*this);
  auto order = topo_order(node_.get());
  for (detail::TensorNode* n : order) {
    if (!n->requires_grad || !n->parents.empty()) continue;
    const auto* g = gm.find(n);
    if (!g) continue;
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
    for (std::size_t i = 0; i < g->size(); ++i) n->grad[i] += (*g)[i];
  }
}

}  // namespace m2d
