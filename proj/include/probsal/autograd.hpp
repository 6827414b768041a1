#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "probsal/tensor.hpp"

// Minimal reverse-mode differentiation over Tensor values. Graphs are built
// eagerly by the functions in ops.hpp and released when the last Var handle
// to the output goes away.
namespace probsal::ag {

class Node;
using Var = std::shared_ptr<Node>;

// Receives the node's value and its accumulated gradient; pushes gradient
// into the parents it captured.
using BackwardFn = std::function<void(const Tensor& value, const Tensor& grad)>;

class Node {
 public:
  Node(Tensor value, bool requires_grad) : value_(std::move(value)), requires_grad_(requires_grad) {}

  const Tensor& value() const { return value_; }
  Tensor& mutable_value() { return value_; }
  const Shape& shape() const { return value_.shape(); }
  bool requires_grad() const { return requires_grad_; }

  bool has_grad() const { return !grad_.empty(); }
  Tensor& grad();
  void zero_grad();
  void accumulate_grad(const Tensor& g);
  // Adds g[i] into grad element-wise; g must have numel() elements.
  double* grad_data() { return grad().data(); }

 private:
  friend Var make_node(Tensor, std::vector<Var>, BackwardFn);
  friend void backward(const Var&, const Tensor&);

  Tensor value_;
  Tensor grad_;
  bool requires_grad_ = false;
  std::vector<Var> parents_;
  BackwardFn backward_;
};

Var constant(Tensor value);
Var parameter(Tensor value);

// Wraps an op result. When gradients are disabled or no parent needs them
// the result is a constant and `fn` is dropped.
Var make_node(Tensor value, std::vector<Var> parents, BackwardFn fn);

void backward(const Var& root, const Tensor& seed);
// Root must hold a single element; it is seeded with 1.
void backward(const Var& root);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace probsal::ag
