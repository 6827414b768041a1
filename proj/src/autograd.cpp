#include "probsal/autograd.hpp"

#include <unordered_set>

#include "probsal/error.hpp"

namespace probsal::ag {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor& Node::grad() {
  if (grad_.empty() && value_.numel() > 0) grad_ = Tensor(value_.shape(), 0.0);
  return grad_;
}

void Node::zero_grad() {
  if (!grad_.empty()) grad_.fill(0.0);
}

void Node::accumulate_grad(const Tensor& g) {
  require(g.numel() == value_.numel(), "gradient size mismatch for shape " + value_.shape().str());
  Tensor& mine = grad();
  for (std::size_t i = 0; i < g.numel(); ++i) mine[i] += g[i];
}

Var constant(Tensor value) { return std::make_shared<Node>(std::move(value), false); }

Var parameter(Tensor value) { return std::make_shared<Node>(std::move(value), true); }

Var make_node(Tensor value, std::vector<Var> parents, BackwardFn fn) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || (p && p->requires_grad());
  }
  auto node = std::make_shared<Node>(std::move(value), needs);
  if (needs) {
    node->parents_ = std::move(parents);
    node->backward_ = std::move(fn);
  }
  return node;
}

void backward(const Var& root, const Tensor& seed) {
  require(root != nullptr, "backward on null Var");
  if (!root->requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents_.size()) {
      Node* p = node->parents_[next++].get();
      if (p && p->requires_grad() && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->accumulate_grad(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_ && n->has_grad()) n->backward_(n->value_, n->grad_);
  }
  // Interior gradients are not needed after the pass; leaves keep theirs.
  for (Node* n : order) {
    if (n->backward_) n->grad_ = Tensor();
  }
}

void backward(const Var& root) {
  require(root && root->value().numel() == 1, "backward() without seed needs a scalar root");
  backward(root, Tensor::scalar(1.0));
}

}  // namespace probsal::ag
