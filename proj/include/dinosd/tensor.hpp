#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <utility>

#include "dinosd/common.hpp"

namespace dsd {

class Tape;

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0: leaf / not produced on any tape
};

// Shared-handle dense tensor. Copying a Tensor aliases the same storage;
// use clone() for a deep copy.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<TensorNode>()) {}

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<TensorNode>()) {
    if (numel(shape) != data.size())
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }

  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& data() { return node_->data; }
  double item() const {
    if (node_->data.size() != 1)
      throw ShapeError("item(): tensor has " + std::to_string(node_->data.size()) + " elements");
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const {
    if (node_->grad.empty()) throw TapeError("grad(): no gradient has been populated");
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  Tensor clone() const {
    Tensor t(node_->shape, node_->data, node_->requires_grad);
    return t;
  }

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  friend class Tape;
  std::shared_ptr<TensorNode> node_;
};

// Define-by-run tape. At most one tape is active per thread; ops record
// themselves while a tape is active and any input requires grad.
class Tape {
 public:
  Tape() : id_(next_id()++) {
    if (active_) throw TapeError("a tape is already active on this thread");
    active_ = this;
  }
  ~Tape() { active_ = nullptr; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(std::vector<std::shared_ptr<TensorNode>> inputs, std::shared_ptr<TensorNode> output,
              std::function<void()> backward_fn) {
    output->tape_id = id_;
    ops_.push_back({std::move(inputs), std::move(output), std::move(backward_fn)});
  }

  std::size_t op_count() const { return ops_.size(); }
  std::uint64_t id() const { return id_; }

  void backward(const Tensor& loss) {
    if (loss.size() != 1) throw TapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
    if (backward_done_) throw TapeError("backward: tape already traversed; rebuild the forward pass");
    if (loss.node()->tape_id != id_)
      throw TapeError("backward: loss was not produced on this tape (stale or detached)");
    backward_done_ = true;
    loss.node()->grad.assign(1, 1.0);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (it->output->grad.empty()) continue;  // unreachable from the loss
      it->backward_fn();
    }
  }

 private:
  struct Op {
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::shared_ptr<TensorNode> output;
    std::function<void()> backward_fn;
  };
  static std::uint64_t& next_id() {
    static std::uint64_t id = 1;
    return id;
  }
  static thread_local Tape* active_;
  std::vector<Op> ops_;
  bool backward_done_ = false;
  std::uint64_t id_;
};

inline thread_local Tape* Tape::active_ = nullptr;

inline std::vector<double>& ensure_grad(const std::shared_ptr<TensorNode>& n) {
  if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
  return n->grad;
}

// Truncated normal init (resample beyond 2 std), the usual transformer init.
inline Tensor randn_trunc(Shape shape, double std_dev, std::mt19937_64& rng, bool requires_grad = true) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) {
    double z = nd(rng);
    while (std::abs(z) > 2.0) z = nd(rng);
    x = z * std_dev;
  }
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline Tensor rand_uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                           bool requires_grad = false) {
  std::uniform_real_distribution<double> ud(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = ud(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace dsd
