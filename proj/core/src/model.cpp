#include "secoco/model.hpp"

#include <algorithm>
#include <cmath>

#include "secoco/textops.hpp"

namespace secoco::model {

using numerics::AttentionShape;
using numerics::NoGradGuard;
using numerics::Shape;
using numerics::Tensor;
using numerics::Var;
namespace ops = numerics;

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model must be a positive multiple of n_heads");
  }
  if (n_enc_layers < 1 || n_dec_layers < 1 || d_ffn < 1) {
    throw ConfigError("model needs at least one encoder and decoder layer");
  }
  if (max_len < 3) throw ConfigError("max_len must leave room for sentinels");
  if (src_vocab_size <= static_cast<int>(textops::kNumSpecials) ||
      tgt_vocab_size <= static_cast<int>(textops::kNumSpecials)) {
    throw ConfigError("vocab sizes must exceed the special token count");
  }
  if (!(dropout >= 0.0f && dropout < 1.0f)) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},         {"n_heads", c.n_heads},
                     {"n_enc_layers", c.n_enc_layers}, {"n_dec_layers", c.n_dec_layers},
                     {"d_ffn", c.d_ffn},             {"max_len", c.max_len},
                     {"src_vocab_size", c.src_vocab_size},
                     {"tgt_vocab_size", c.tgt_vocab_size},
                     {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.n_enc_layers = j.value("n_enc_layers", d.n_enc_layers);
  c.n_dec_layers = j.value("n_dec_layers", d.n_dec_layers);
  c.d_ffn = j.value("d_ffn", d.d_ffn);
  c.max_len = j.value("max_len", d.max_len);
  c.src_vocab_size = j.value("src_vocab_size", d.src_vocab_size);
  c.tgt_vocab_size = j.value("tgt_vocab_size", d.tgt_vocab_size);
  c.dropout = j.value("dropout", d.dropout);
}

SourceBatch SourceBatch::build(std::span<const TokenSeq> seqs, int max_len) {
  SourceBatch b;
  b.batch = static_cast<int>(seqs.size());
  std::size_t longest = 0;
  for (const auto& s : seqs) longest = std::max(longest, s.size());
  b.len = static_cast<int>(longest) + 2;
  if (b.len > max_len) {
    throw InputError("source of " + std::to_string(longest) +
                     " tokens exceeds max_len " + std::to_string(max_len) +
                     " with sentinels");
  }
  b.ids.assign(static_cast<std::size_t>(b.batch) * b.len, textops::kPad);
  b.valid.assign(b.ids.size(), 0);
  for (int s = 0; s < b.batch; ++s) {
    const auto& seq = seqs[static_cast<std::size_t>(s)];
    const std::size_t base = static_cast<std::size_t>(s) * b.len;
    b.ids[base] = textops::kBos;
    for (std::size_t i = 0; i < seq.size(); ++i) b.ids[base + 1 + i] = seq[i];
    b.ids[base + 1 + seq.size()] = textops::kEos;
    std::fill_n(b.valid.begin() + static_cast<long>(base), seq.size() + 2, 1);
    b.lengths.push_back(static_cast<int>(seq.size()));
  }
  return b;
}

TargetBatch TargetBatch::build(std::span<const TokenSeq> seqs, int max_len) {
  TargetBatch t;
  t.batch = static_cast<int>(seqs.size());
  std::size_t longest = 0;
  for (const auto& s : seqs) longest = std::max(longest, s.size());
  t.len = static_cast<int>(longest) + 1;
  if (t.len > max_len) {
    throw InputError("target of " + std::to_string(longest) +
                     " tokens exceeds max_len " + std::to_string(max_len));
  }
  const std::size_t n = static_cast<std::size_t>(t.batch) * t.len;
  t.input.assign(n, textops::kPad);
  t.output.assign(n, -1);
  t.valid.assign(n, 0);
  for (int s = 0; s < t.batch; ++s) {
    const auto& seq = seqs[static_cast<std::size_t>(s)];
    const std::size_t base = static_cast<std::size_t>(s) * t.len;
    t.input[base] = textops::kBos;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      t.input[base + 1 + i] = seq[i];
      t.output[base + i] = seq[i];
    }
    t.output[base + seq.size()] = textops::kEos;
    std::fill_n(t.valid.begin() + static_cast<long>(base), seq.size() + 1, 1);
  }
  return t;
}

TargetBatch TargetBatch::from_prefixes(std::span<const TokenSeq> prefixes) {
  TargetBatch t;
  t.batch = static_cast<int>(prefixes.size());
  std::size_t longest = 0;
  for (const auto& s : prefixes) longest = std::max(longest, s.size());
  t.len = static_cast<int>(longest);
  const std::size_t n = static_cast<std::size_t>(t.batch) * t.len;
  t.input.assign(n, textops::kPad);
  t.output.assign(n, -1);
  t.valid.assign(n, 0);
  for (int s = 0; s < t.batch; ++s) {
    const auto& seq = prefixes[static_cast<std::size_t>(s)];
    const std::size_t base = static_cast<std::size_t>(s) * t.len;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      t.input[base + i] = seq[i];
      t.valid[base + i] = 1;
    }
  }
  return t;
}

namespace {

Tensor xavier(int fan_in, int fan_out, std::mt19937_64& rng) {
  const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  std::uniform_real_distribution<float> u(-limit, limit);
  Tensor t(Shape{fan_in, fan_out});
  for (float& v : t.values()) v = u(rng);
  return t;
}

Tensor normal(int rows, int cols, float stddev, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, stddev);
  Tensor t(Shape{rows, cols});
  for (float& v : t.values()) v = n(rng);
  return t;
}

Tensor sinusoids(int max_len, int d) {
  Tensor t(Shape{max_len, d});
  const int half = d / 2;
  for (int p = 0; p < max_len; ++p) {
    for (int i = 0; i < half; ++i) {
      const double rate = std::exp(-std::log(10000.0) * i / std::max(half - 1, 1));
      t.row(p)[i] = static_cast<float>(std::sin(p * rate));
      t.row(p)[half + i] = static_cast<float>(std::cos(p * rate));
    }
  }
  return t;
}

}  // namespace

SecocoModel::SecocoModel(ModelConfig config, std::uint64_t init_seed)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  const int d = config_.d_model, f = config_.d_ffn;
  auto ln = [&](const std::string& prefix, Var& g, Var& b) {
    g = params_.add(prefix + ".gamma", Tensor(Shape{d}, 1.0f));
    b = params_.add(prefix + ".beta", Tensor(Shape{d}, 0.0f));
  };
  auto attn = [&](const std::string& prefix, AttentionWeights& w) {
    w.wq = params_.add(prefix + ".wq", xavier(d, d, rng));
    w.bq = params_.add(prefix + ".bq", Tensor(Shape{d}));
    w.wk = params_.add(prefix + ".wk", xavier(d, d, rng));
    w.bk = params_.add(prefix + ".bk", Tensor(Shape{d}));
    w.wv = params_.add(prefix + ".wv", xavier(d, d, rng));
    w.bv = params_.add(prefix + ".bv", Tensor(Shape{d}));
    w.wo = params_.add(prefix + ".wo", xavier(d, d, rng));
    w.bo = params_.add(prefix + ".bo", Tensor(Shape{d}));
  };
  auto ffn = [&](const std::string& prefix, Var& w1, Var& b1, Var& w2, Var& b2) {
    w1 = params_.add(prefix + ".w1", xavier(d, f, rng));
    b1 = params_.add(prefix + ".b1", Tensor(Shape{f}));
    w2 = params_.add(prefix + ".w2", xavier(f, d, rng));
    b2 = params_.add(prefix + ".b2", Tensor(Shape{d}));
  };

  const float emb_std = 1.0f / std::sqrt(static_cast<float>(d));
  src_embed_ = params_.add("src_embed", normal(config_.src_vocab_size, d, emb_std, rng));
  tgt_embed_ = params_.add("tgt_embed", normal(config_.tgt_vocab_size, d, emb_std, rng));
  enc_.resize(static_cast<std::size_t>(config_.n_enc_layers));
  for (std::size_t l = 0; l < enc_.size(); ++l) {
    const std::string p = "enc." + std::to_string(l);
    EncoderLayer& L = enc_[l];
    ln(p + ".ln1", L.ln1_g, L.ln1_b);
    attn(p + ".self", L.self);
    ln(p + ".ln2", L.ln2_g, L.ln2_b);
    ffn(p + ".ffn", L.w1, L.b1, L.w2, L.b2);
  }
  ln("enc.ln", enc_ln_g_, enc_ln_b_);
  dec_.resize(static_cast<std::size_t>(config_.n_dec_layers));
  for (std::size_t l = 0; l < dec_.size(); ++l) {
    const std::string p = "dec." + std::to_string(l);
    DecoderLayer& L = dec_[l];
    ln(p + ".ln1", L.ln1_g, L.ln1_b);
    attn(p + ".self", L.self);
    ln(p + ".ln2", L.ln2_g, L.ln2_b);
    attn(p + ".cross", L.cross);
    ln(p + ".ln3", L.ln3_g, L.ln3_b);
    ffn(p + ".ffn", L.w1, L.b1, L.w2, L.b2);
  }
  ln("dec.ln", dec_ln_g_, dec_ln_b_);
  out_w_ = params_.add("out.w", xavier(d, config_.tgt_vocab_size, rng));
  out_b_ = params_.add("out.b", Tensor(Shape{config_.tgt_vocab_size}));
  del_w_ = params_.add("head.del.w", xavier(d, 1, rng));
  ins_z_ = params_.add("head.ins.z", xavier(2 * d, config_.src_vocab_size, rng));
  positions_ = sinusoids(config_.max_len, d);
}

Var SecocoModel::residual_dropout(const Var& x, const ForwardContext& ctx) const {
  if (!ctx.train || config_.dropout <= 0.0f) return x;
  if (!ctx.rng) throw ContractError("training forward pass needs an RNG for dropout");
  return ops::dropout(x, config_.dropout, *ctx.rng);
}

Var SecocoModel::embed(const Var& table, std::span<const int> ids, int batch, int len,
                       const ForwardContext& ctx) const {
  if (len > config_.max_len) {
    throw InputError("sequence length " + std::to_string(len) + " exceeds max_len " +
                     std::to_string(config_.max_len));
  }
  const int d = config_.d_model;
  Tensor pos(Shape{batch * len, d});
  for (int b = 0; b < batch; ++b) {
    for (int p = 0; p < len; ++p) std::copy_n(positions_.row(p), d, pos.row(b * len + p));
  }
  Var x = ops::scale(ops::embedding(table, ids), std::sqrt(static_cast<float>(d)));
  x = ops::add(x, numerics::constant(std::move(pos)));
  return residual_dropout(x, ctx);
}

Var SecocoModel::attend(const AttentionWeights& w, const Var& query_in,
                        const Var& memory_in, AttentionShape shape,
                        std::span<const std::uint8_t> key_valid, bool causal) const {
  Var q = ops::linear(query_in, w.wq, w.bq);
  Var k = ops::linear(memory_in, w.wk, w.bk);
  Var v = ops::linear(memory_in, w.wv, w.bv);
  Var a = ops::attention(q, k, v, shape, key_valid, causal);
  return ops::linear(a, w.wo, w.bo);
}

Var SecocoModel::feed_forward(const Var& x, const Var& w1, const Var& b1, const Var& w2,
                              const Var& b2) const {
  return ops::linear(ops::relu(ops::linear(x, w1, b1)), w2, b2);
}

Var SecocoModel::encode(const SourceBatch& src, const ForwardContext& ctx) const {
  for (int id : src.ids) {
    if (id < 0 || id >= config_.src_vocab_size) {
      throw InputError("source id out of vocabulary range: " + std::to_string(id));
    }
  }
  Var x = embed(src_embed_, src.ids, src.batch, src.len, ctx);
  const AttentionShape shape{src.batch, src.len, src.len, config_.n_heads};
  for (const auto& L : enc_) {
    Var h = ops::layer_norm(x, L.ln1_g, L.ln1_b);
    x = ops::add(x, residual_dropout(attend(L.self, h, h, shape, src.valid, false), ctx));
    h = ops::layer_norm(x, L.ln2_g, L.ln2_b);
    x = ops::add(x, residual_dropout(feed_forward(h, L.w1, L.b1, L.w2, L.b2), ctx));
  }
  return ops::layer_norm(x, enc_ln_g_, enc_ln_b_);
}

Var SecocoModel::deletion_logits(const Var& states, const SourceBatch& src) const {
  std::vector<int> rows;
  for (int b = 0; b < src.batch; ++b) {
    for (int i = 0; i < src.lengths[static_cast<std::size_t>(b)]; ++i) {
      rows.push_back(src.deletion_row(b, i));
    }
  }
  return ops::matmul(ops::gather_rows(states, rows), del_w_);
}

Var SecocoModel::insertion_logits(const Var& states, const SourceBatch& src) const {
  std::vector<int> left, right;
  for (int b = 0; b < src.batch; ++b) {
    for (int j = 0; j <= src.lengths[static_cast<std::size_t>(b)]; ++j) {
      left.push_back(src.boundary_left_row(b, j));
      right.push_back(src.boundary_left_row(b, j) + 1);
    }
  }
  Var pairs = ops::concat_cols(ops::gather_rows(states, left),
                               ops::gather_rows(states, right));
  return ops::matmul(pairs, ins_z_);
}

Var SecocoModel::decode_logits(const Var& states, const SourceBatch& src,
                               const TargetBatch& tgt, const ForwardContext& ctx) const {
  if (src.batch != tgt.batch) throw ContractError("source/target batch size mismatch");
  for (int id : tgt.input) {
    if (id < 0 || id >= config_.tgt_vocab_size) {
      throw InputError("target id out of vocabulary range: " + std::to_string(id));
    }
  }
  Var y = embed(tgt_embed_, tgt.input, tgt.batch, tgt.len, ctx);
  const AttentionShape self_shape{tgt.batch, tgt.len, tgt.len, config_.n_heads};
  const AttentionShape cross_shape{tgt.batch, tgt.len, src.len, config_.n_heads};
  for (const auto& L : dec_) {
    Var h = ops::layer_norm(y, L.ln1_g, L.ln1_b);
    y = ops::add(y, residual_dropout(attend(L.self, h, h, self_shape, tgt.valid, true), ctx));
    h = ops::layer_norm(y, L.ln2_g, L.ln2_b);
    y = ops::add(y, residual_dropout(
                        attend(L.cross, h, states, cross_shape, src.valid, false), ctx));
    h = ops::layer_norm(y, L.ln3_g, L.ln3_b);
    y = ops::add(y, residual_dropout(feed_forward(h, L.w1, L.b1, L.w2, L.b2), ctx));
  }
  y = ops::layer_norm(y, dec_ln_g_, dec_ln_b_);
  return ops::linear(y, out_w_, out_b_);
}

LossTerms SecocoModel::joint_loss(std::span<const Sample> batch, const LossOptions& options,
                                  const ForwardContext& ctx) const {
  if (batch.empty()) throw InputError("joint_loss on an empty batch");
  const int B = static_cast<int>(batch.size());
  std::vector<TokenSeq> sources;
  std::vector<TokenSeq> targets;
  sources.reserve(static_cast<std::size_t>(B) * 3);
  for (const auto& s : batch) {
    sources.push_back(s.noisy);
    targets.push_back(s.target);
  }
  std::vector<int> del_sentence(static_cast<std::size_t>(B), -1);
  if (options.use_predictors) {
    for (const auto& s : batch) {
      if (s.del_mask.size() != s.del_input.size() ||
          s.ins_labels.size() != s.ins_input.size() + 1) {
        throw InputError("sample lacks shape-consistent predictor supervision");
      }
      sources.push_back(s.ins_input);
    }
    for (int b = 0; b < B; ++b) {
      const auto& s = batch[static_cast<std::size_t>(b)];
      if (s.del_input == s.noisy) {
        del_sentence[static_cast<std::size_t>(b)] = b;
      } else {
        del_sentence[static_cast<std::size_t>(b)] = static_cast<int>(sources.size());
        sources.push_back(s.del_input);
      }
    }
  }

  const SourceBatch all = SourceBatch::build(sources, config_.max_len);
  const TargetBatch tgt = TargetBatch::build(targets, config_.max_len);
  Var states = encode(all, ctx);

  // The translation sources are the first B sentences, i.e. a row prefix.
  SourceBatch src;
  src.batch = B;
  src.len = all.len;
  const std::size_t prefix = static_cast<std::size_t>(B) * all.len;
  src.ids.assign(all.ids.begin(), all.ids.begin() + static_cast<long>(prefix));
  src.valid.assign(all.valid.begin(), all.valid.begin() + static_cast<long>(prefix));
  src.lengths.assign(all.lengths.begin(), all.lengths.begin() + B);
  Var memory = states;
  if (all.batch != B) {
    std::vector<int> rows(prefix);
    for (std::size_t r = 0; r < prefix; ++r) rows[r] = static_cast<int>(r);
    memory = ops::gather_rows(states, rows);
  }
  Var logits = decode_logits(memory, src, tgt, ctx);
  Var translation = ops::cross_entropy(logits, tgt.output, -1);

  LossTerms terms;
  terms.translation = translation->value.item();
  if (!options.use_predictors) {
    terms.total = translation;
    terms.value = terms.translation;
    return terms;
  }

  std::vector<int> del_rows;
  std::vector<float> del_targets;
  for (int b = 0; b < B; ++b) {
    const auto& s = batch[static_cast<std::size_t>(b)];
    const int sent = del_sentence[static_cast<std::size_t>(b)];
    for (std::size_t i = 0; i < s.del_mask.size(); ++i) {
      del_rows.push_back(all.deletion_row(sent, static_cast<int>(i)));
      del_targets.push_back(s.del_mask[i] ? 1.0f : 0.0f);
    }
  }
  std::vector<std::uint8_t> del_use(del_rows.size(), 1);
  Var del_logits = ops::matmul(ops::gather_rows(states, del_rows), del_w_);
  Var deletion = ops::bce_with_logits(del_logits, del_targets, del_use);

  std::vector<int> left, right, ins_targets;
  const auto V = static_cast<std::size_t>(config_.src_vocab_size);
  for (int b = 0; b < B; ++b) {
    const auto& s = batch[static_cast<std::size_t>(b)];
    const int sent = B + b;
    for (std::size_t j = 0; j < s.ins_labels.size(); ++j) {
      const int l = all.boundary_left_row(sent, static_cast<int>(j));
      left.push_back(l);
      right.push_back(l + 1);
      ins_targets.push_back(static_cast<int>(textops::insertion_class(s.ins_labels[j], V)));
    }
  }
  Var pairs = ops::concat_cols(ops::gather_rows(states, left), ops::gather_rows(states, right));
  Var insertion = ops::cross_entropy(ops::matmul(pairs, ins_z_), ins_targets, -1);

  const Var parts[] = {translation, deletion, insertion};
  terms.total = ops::add_scalars(parts);
  terms.deletion = deletion->value.item();
  terms.insertion = insertion->value.item();
  terms.value = terms.total->value.item();
  terms.has_predictor_terms = true;
  return terms;
}

std::vector<std::vector<double>> SecocoModel::deletion_probs(
    std::span<const TokenSeq> seqs) const {
  NoGradGuard guard;
  const SourceBatch src = SourceBatch::build(seqs, config_.max_len);
  Var states = encode(src, ForwardContext{});
  Var logits = deletion_logits(states, src);
  std::vector<std::vector<double>> out(seqs.size());
  std::size_t r = 0;
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    for (std::size_t i = 0; i < seqs[b].size(); ++i) {
      const double z = logits->value[r++];
      out[b].push_back(z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)));
    }
  }
  return out;
}

std::vector<std::vector<std::vector<float>>> SecocoModel::insertion_probs(
    std::span<const TokenSeq> seqs) const {
  NoGradGuard guard;
  const SourceBatch src = SourceBatch::build(seqs, config_.max_len);
  Var states = encode(src, ForwardContext{});
  Var probs = ops::softmax_rows(insertion_logits(states, src));
  const int C = probs->value.cols();
  std::vector<std::vector<std::vector<float>>> out(seqs.size());
  int r = 0;
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    for (std::size_t j = 0; j <= seqs[b].size(); ++j, ++r) {
      const float* row = probs->value.row(r);
      out[b].emplace_back(row, row + C);
    }
  }
  return out;
}

void SecocoModel::copy_from(const SecocoModel& other) {
  if (!(other.config_ == config_)) throw ContractError("copy_from with a different config");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    params_.vars()[i]->value = other.params_.vars()[i]->value;
  }
}

}  // namespace secoco::model
