#ifndef SECOCO_MODEL_HPP_
#define SECOCO_MODEL_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"
#include "secoco/autodiff.hpp"
#include "secoco/common.hpp"
#include "secoco/ops.hpp"
#include "secoco/sample.hpp"

namespace secoco::model {

struct ModelConfig {
  int d_model = 64;
  int n_heads = 2;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int d_ffn = 128;
  int max_len = 64;  // positions, sentinels included
  int src_vocab_size = 0;
  int tgt_vocab_size = 0;
  float dropout = 0.1f;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Sentences wrapped as BOS x EOS and right-padded. Row r = b * len + p of
// the encoder output is position p of sentence b.
struct SourceBatch {
  int batch = 0;
  int len = 0;
  std::vector<int> ids;
  std::vector<std::uint8_t> valid;
  std::vector<int> lengths;  // real tokens per sentence, sentinels excluded

  // Throws InputError when a wrapped sentence exceeds max_len.
  static SourceBatch build(std::span<const TokenSeq> seqs, int max_len);

  int deletion_row(int b, int i) const { return b * len + 1 + i; }
  // Boundary j of sentence b sits between wrapped positions j and j + 1.
  int boundary_left_row(int b, int j) const { return b * len + j; }
};

// Decoder input BOS y and output y EOS; padded output slots hold -1.
struct TargetBatch {
  int batch = 0;
  int len = 0;
  std::vector<int> input;
  std::vector<int> output;
  std::vector<std::uint8_t> valid;

  static TargetBatch build(std::span<const TokenSeq> seqs, int max_len);
  // Decoder input only, for prefixes during search.
  static TargetBatch from_prefixes(std::span<const TokenSeq> prefixes);
};

struct ForwardContext {
  bool train = false;
  std::mt19937_64* rng = nullptr;  // required when train && dropout > 0
};

struct LossOptions {
  bool use_predictors = true;
};

struct LossTerms {
  numerics::Var total;
  double translation = 0.0;
  double deletion = 0.0;
  double insertion = 0.0;
  double value = 0.0;
  bool has_predictor_terms = false;
};

// Transformer encoder-decoder plus two encoder heads:
//   deletion  p(delete | h_i) = sigmoid(h_i W),            W: d x 1
//   insertion p(w | boundary j) = softmax([h_j; h_{j+1}] Z), Z: 2d x (|V|+1)
// Both heads read the top (final layer-normed) encoder states.
class SecocoModel {
 public:
  SecocoModel(ModelConfig config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  numerics::ParameterSet& params() { return params_; }
  const numerics::ParameterSet& params() const { return params_; }

  // [batch * len, d_model]
  numerics::Var encode(const SourceBatch& src, const ForwardContext& ctx) const;

  // One logit per real token, sentence-major: [sum(lengths), 1].
  numerics::Var deletion_logits(const numerics::Var& states,
                                const SourceBatch& src) const;
  // One row per boundary, n + 1 per sentence: [sum(lengths + 1), |V| + 1].
  numerics::Var insertion_logits(const numerics::Var& states,
                                 const SourceBatch& src) const;
  // Teacher-forced next-token logits [batch * tgt.len, tgt_vocab_size].
  numerics::Var decode_logits(const numerics::Var& states, const SourceBatch& src,
                              const TargetBatch& tgt, const ForwardContext& ctx) const;

  // Sum of three means: translation NLL on the noisy source, BCE of the
  // deletion mask on del_input and CE of the insertion labels on ins_input,
  // each averaged over its own tokens/boundaries. All encoder inputs go
  // through one batched encoder call.
  LossTerms joint_loss(std::span<const Sample> batch, const LossOptions& options,
                       const ForwardContext& ctx) const;

  // Inference helpers (no graph recorded).
  // Sigmoid in double, so probabilities stay strictly inside (0, 1).
  std::vector<std::vector<double>> deletion_probs(std::span<const TokenSeq> seqs) const;
  // Per sentence, per boundary: probabilities over insertion classes.
  std::vector<std::vector<std::vector<float>>> insertion_probs(
      std::span<const TokenSeq> seqs) const;

  // Copies parameter values from another model with the same config.
  void copy_from(const SecocoModel& other);

 private:
  struct AttentionWeights {
    numerics::Var wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct EncoderLayer {
    numerics::Var ln1_g, ln1_b, ln2_g, ln2_b;
    AttentionWeights self;
    numerics::Var w1, b1, w2, b2;
  };
  struct DecoderLayer {
    numerics::Var ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
    AttentionWeights self, cross;
    numerics::Var w1, b1, w2, b2;
  };

  numerics::Var embed(const numerics::Var& table, std::span<const int> ids, int batch,
                      int len, const ForwardContext& ctx) const;
  numerics::Var attend(const AttentionWeights& w, const numerics::Var& query_in,
                       const numerics::Var& memory_in, numerics::AttentionShape shape,
                       std::span<const std::uint8_t> key_valid, bool causal) const;
  numerics::Var feed_forward(const numerics::Var& x, const numerics::Var& w1,
                             const numerics::Var& b1, const numerics::Var& w2,
                             const numerics::Var& b2) const;
  numerics::Var residual_dropout(const numerics::Var& x, const ForwardContext& ctx) const;

  ModelConfig config_;
  numerics::ParameterSet params_;
  numerics::Tensor positions_;  // sinusoidal [max_len, d_model]
  numerics::Var src_embed_, tgt_embed_;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  numerics::Var enc_ln_g_, enc_ln_b_, dec_ln_g_, dec_ln_b_;
  numerics::Var out_w_, out_b_;
  numerics::Var del_w_;  // d x 1
  numerics::Var ins_z_;  // 2d x (|V| + 1)
};

}  // namespace secoco::model

#endif  // SECOCO_MODEL_HPP_
