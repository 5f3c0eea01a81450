#ifndef SECOCO_AUTODIFF_HPP_
#define SECOCO_AUTODIFF_HPP_

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "secoco/tensor.hpp"

namespace secoco::numerics {

// A value in the computation graph. Interior nodes keep their inputs alive
// and know how to push their gradient back into them.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use
  bool requires_grad = false;
  bool backpropagated = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad();
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad = true);

// Interior node; gradient tracking is on when enabled for this thread and
// any input requires it.
Var make_node(Tensor value, std::vector<Var> inputs,
              std::function<void(Node&)> backward_fn);

// Reverse sweep from a scalar loss. Each graph supports one sweep; the graph
// is released as it goes, and a second call on the same loss throws.
void backward(const Var& loss);

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Named trainable leaves in registration order.
class ParameterSet {
 public:
  Var add(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return vars_.size(); }
  const std::vector<Var>& vars() const { return vars_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t num_scalars() const;

  void zero_grad();

 private:
  std::vector<std::string> names_;
  std::vector<Var> vars_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace secoco::numerics

#endif  // SECOCO_AUTODIFF_HPP_
