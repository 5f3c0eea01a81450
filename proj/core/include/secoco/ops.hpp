#ifndef SECOCO_OPS_HPP_
#define SECOCO_OPS_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "secoco/autodiff.hpp"

namespace secoco::numerics {

// [n, k] x [k, m] -> [n, m]
Var matmul(const Var& a, const Var& b);
// x: [..., in] viewed as rows; w: [in, out]; bias: [out] or null.
Var linear(const Var& x, const Var& w, const Var& bias);
Var add(const Var& a, const Var& b);
Var scale(const Var& a, float s);
// Row-wise concatenation: [n, p] ++ [n, q] -> [n, p + q].
Var concat_cols(const Var& a, const Var& b);
Var embedding(const Var& table, std::span<const int> ids);
Var gather_rows(const Var& x, std::span<const int> rows);

Var relu(const Var& x);

// While alive, records the gate of every relu on the current thread, in call
// order. A scope built from a recorded pattern pins the gates instead, so the
// network stays on one linear piece; finite-difference checks use this to
// step across kinks.
class ReluPatternScope {
 public:
  ReluPatternScope();
  explicit ReluPatternScope(std::vector<bool> pinned);
  ~ReluPatternScope();
  ReluPatternScope(const ReluPatternScope&) = delete;
  ReluPatternScope& operator=(const ReluPatternScope&) = delete;

  const std::vector<bool>& pattern() const { return pattern_; }
  // Gate for a relu input: its sign when recording, else the next pinned gate.
  bool gate(float input);

 private:
  std::vector<bool> pattern_;
  bool pinned_ = false;
  std::size_t next_ = 0;
  ReluPatternScope* previous_;
};

Var sigmoid(const Var& x);
Var softmax_rows(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps = 1e-5f);
// Inverted dropout; identity when p == 0.
Var dropout(const Var& x, float p, std::mt19937_64& rng);

Var sum(const Var& x);
Var add_scalars(std::span<const Var> terms);

// Mean negative log-likelihood over rows whose target != ignore_index.
// Returns 0 (with no gradient) when every row is ignored.
Var cross_entropy(const Var& logits, std::span<const int> targets, int ignore_index);

// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets over the
// rows with weight 1. logits: [n, 1].
Var bce_with_logits(const Var& logits, std::span<const float> targets,
                    std::span<const std::uint8_t> use);

struct AttentionShape {
  int batch = 1;
  int q_len = 1;
  int k_len = 1;
  int heads = 1;
};

// Scaled dot-product attention with masking. q: [batch*q_len, d],
// k and v: [batch*k_len, d]; heads split d evenly. key_valid[b*k_len + j] == 0
// hides key j of sentence b; causal additionally hides keys j > i. Fully
// masked query rows produce zeros.
Var attention(const Var& q, const Var& k, const Var& v, AttentionShape shape,
              std::span<const std::uint8_t> key_valid, bool causal);

}  // namespace secoco::numerics

#endif  // SECOCO_OPS_HPP_
