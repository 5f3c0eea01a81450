#include "secoco/autodiff.hpp"

#include <unordered_set>

#include "secoco/common.hpp"

namespace secoco::numerics {
namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.empty() || !grad.same_shape(value)) grad = Tensor(value.shape(), 0.0f);
  return grad;
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

Var make_node(Tensor value, std::vector<Var> inputs,
              std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool any = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) any = any || in->requires_grad;
  }
  if (any) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void backward(const Var& loss) {
  if (!loss) throw ContractError("backward on a null variable");
  if (loss->value.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_string(loss->value.shape()));
  }
  if (loss->backpropagated) {
    throw ContractError("backward called twice on the same graph");
  }
  loss->backpropagated = true;
  if (!loss->requires_grad) return;

  // Iterative post-order DFS gives a topological order. The order owns its
  // nodes so clearing inputs below cannot free one that is still pending.
  std::vector<Var> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Var, std::size_t>> stack;
  stack.emplace_back(loss, 0);
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->inputs.size()) {
      Var child = top.first->inputs[top.second++];
      if (child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  for (const Var& n : order) {
    if (n->backward_fn) n->grad = Tensor(n->value.shape(), 0.0f);
  }
  loss->ensure_grad()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (!n.backward_fn) continue;
    n.backward_fn(n);
    n.backward_fn = nullptr;
    n.inputs.clear();
    n.grad = Tensor();
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var ParameterSet::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ContractError("duplicate parameter: " + name);
  index_[name] = vars_.size();
  names_.push_back(name);
  vars_.push_back(leaf(std::move(init), true));
  return vars_.back();
}

const Var& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return vars_[it->second];
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& v : vars_) n += v->value.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& v : vars_) v->ensure_grad().fill(0.0f);
}

}  // namespace secoco::numerics
