#include <cmath>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "secoco/autodiff.hpp"
#include "secoco/common.hpp"
#include "secoco/editsup.hpp"
#include "secoco/inference.hpp"
#include "secoco/model.hpp"
#include "secoco/textops.hpp"

using namespace secoco;
using namespace secoco::inference;
using secoco::model::ModelConfig;
using secoco::model::SecocoModel;

namespace {

// Replays fixed decisions keyed by the sequence it is shown; unknown
// sequences get all-keep and all-EMPTY.
class ScriptedPredictor : public EditPredictor {
 public:
  void on_delete(TokenSeq seq, std::vector<double> probs) {
    del_[std::move(seq)] = std::move(probs);
  }
  void on_insert(TokenSeq seq, TokenSeq labels) { ins_[std::move(seq)] = std::move(labels); }

  std::vector<double> deletion_probs(const TokenSeq& seq) const override {
    calls.push_back("del");
    auto it = del_.find(seq);
    return it != del_.end() ? it->second : std::vector<double>(seq.size(), 0.1);
  }
  TokenSeq insertion_labels(const TokenSeq& seq) const override {
    calls.push_back("ins");
    auto it = ins_.find(seq);
    return it != ins_.end() ? it->second : TokenSeq(seq.size() + 1, textops::kEmpty);
  }

  mutable std::vector<std::string> calls;

 private:
  std::map<TokenSeq, std::vector<double>> del_;
  std::map<TokenSeq, TokenSeq> ins_;
};

const textops::Vocab& table_vocab() {
  static const textops::Vocab v({"We", "has", "have", "things", "to", "do", "today", "."});
  return v;
}

TokenSeq enc(const std::string& sentence) {
  Words words;
  std::string w;
  for (char c : sentence + " ") {
    if (c == ' ') {
      if (!w.empty()) words.push_back(w);
      w.clear();
    } else {
      w += c;
    }
  }
  return table_vocab().encode(words);
}

ModelConfig micro_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.d_ffn = 16;
  c.max_len = 16;
  c.src_vocab_size = 12;
  c.tgt_vocab_size = 10;
  c.dropout = 0.0f;
  return c;
}

// Random model biased toward EOS so that decodes finish early.
SecocoModel micro_model(std::uint64_t seed) {
  SecocoModel m(micro_config(), seed);
  m.params().get("out.b")->value[textops::kEos] = 1.5f;
  return m;
}

TokenSeq random_src(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(0, 6), tok(5, 11);
  TokenSeq s(static_cast<std::size_t>(len(rng)));
  for (auto& t : s) t = tok(rng);
  return s;
}

// Independent greedy chain: re-run the full decoder on each prefix.
TokenSeq greedy_oracle(const SecocoModel& m, const TokenSeq& src, int max_out) {
  numerics::NoGradGuard guard;
  const TokenSeq one[] = {src};
  const auto sb = model::SourceBatch::build(one, m.config().max_len);
  const auto states = m.encode(sb, {});
  TokenSeq prefix = {textops::kBos};
  TokenSeq out;
  for (int t = 0; t < max_out; ++t) {
    const TokenSeq p[] = {prefix};
    const auto logits = m.decode_logits(states, sb, model::TargetBatch::from_prefixes(p), {});
    const float* row = logits->value.row(static_cast<int>(prefix.size()) - 1);
    int best = -1;
    for (int c = 0; c < m.config().tgt_vocab_size; ++c) {
      if (c == textops::kPad || c == textops::kBos || c == textops::kEmpty) continue;
      if (best < 0 || row[c] > row[best]) best = c;
    }
    if (best == textops::kEos) break;
    out.push_back(best);
    prefix.push_back(best);
  }
  return out;
}

}  // namespace

TEST_CASE("worked example: two rounds then a no-edit check") {
  ScriptedPredictor p;
  const TokenSeq x0 = enc("We has things to to do today");
  p.on_delete(x0, {0.1, 0.9, 0.2, 0.1, 0.8, 0.1, 0.3});
  p.on_insert(enc("We things to do today"),
              {textops::kEmpty, enc("have")[0], textops::kEmpty, textops::kEmpty,
               textops::kEmpty, textops::kEmpty});
  p.on_insert(enc("We have things to do today"),
              {textops::kEmpty, textops::kEmpty, textops::kEmpty, textops::kEmpty,
               textops::kEmpty, textops::kEmpty, enc(".")[0]});

  const auto r = correct_iteratively(x0, p);
  CHECK(r.corrected == enc("We have things to do today ."));
  CHECK(r.converged);
  CHECK(r.n_iters == 3);
  REQUIRE(r.trace.rounds.size() == 2);
  CHECK(editsup::mask_to_string(r.trace.rounds[0].del_mask) == "0100100");
  CHECK(editsup::mask_to_string(r.trace.rounds[1].del_mask) == "000000");
  CHECK(p.calls == std::vector<std::string>{"del", "ins", "del", "ins", "del", "ins"});

  const auto lines = render_edits(x0, r, table_vocab());
  CHECK(lines == std::vector<std::string>{
                     "1: We [-has-] [+have+] things to [-to-] do today",
                     "2: We have things to do today [+.+]",
                     "3: no edits",
                 });
}

TEST_CASE("threshold is strict and clean input is a fixpoint") {
  ScriptedPredictor p;
  const TokenSeq x = enc("We have things");
  p.on_delete(x, {0.5, 0.5, 0.5});
  const auto r = correct_iteratively(x, p);
  CHECK(r.corrected == x);
  CHECK(r.converged);
  CHECK(r.n_iters == 1);
  CHECK(r.trace.rounds.empty());
  CHECK(render_edits(x, r, table_vocab()) == std::vector<std::string>{"1: no edits"});

  const auto empty = correct_iteratively(TokenSeq{}, p);
  CHECK(empty.corrected.empty());
  CHECK(empty.converged);
}

TEST_CASE("oscillation stops without convergence") {
  ScriptedPredictor p;
  const TokenSeq a = enc("We have");
  const TokenSeq b = enc("We");
  p.on_delete(a, {0.0, 1.0});
  p.on_insert(b, {textops::kEmpty, enc("have")[0]});
  const auto r = correct_iteratively(a, p, {.max_iters = 50});
  CHECK_FALSE(r.converged);
  CHECK(r.n_iters == 1);
  CHECK(r.corrected == a);
}

TEST_CASE("max_iters bounds a predictor that never stops") {
  class Grower : public EditPredictor {
   public:
    std::vector<double> deletion_probs(const TokenSeq& s) const override {
      return std::vector<double>(s.size(), 0.0);
    }
    TokenSeq insertion_labels(const TokenSeq& s) const override {
      TokenSeq l(s.size() + 1, textops::kEmpty);
      l.back() = 6;
      return l;
    }
  } grower;
  for (int k : {1, 2, 5, 9}) {
    const auto r = correct_iteratively({5}, grower, {.max_iters = k});
    CHECK(r.n_iters == k);
    CHECK_FALSE(r.converged);
    CHECK(r.corrected.size() == static_cast<std::size_t>(k + 1));
  }
  CHECK_THROWS_AS(correct_iteratively({5}, grower, {.max_iters = 0}), ConfigError);
  const auto capped = correct_iteratively({5}, grower, {.max_iters = 9, .max_length = 4});
  CHECK(capped.corrected.size() == 4);
  CHECK(capped.trace.rounds.size() == 3);
  CHECK(capped.n_iters == 4);
  CHECK_FALSE(capped.converged);
}

TEST_CASE("special labels from a predictor count as no insertion") {
  ScriptedPredictor p;
  const TokenSeq x = enc("We have");
  p.on_insert(x, {textops::kPad, textops::kBos, textops::kEos});
  const auto r = correct_iteratively(x, p);
  CHECK(r.converged);
  CHECK(r.corrected == x);
}

TEST_CASE("beam width 1 equals an independent greedy decoder") {
  const SecocoModel m = micro_model(3);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const TokenSeq src = random_src(rng);
    const auto h = beam_search(m, src, 1);
    const int max_out = std::min(m.config().max_len - 1, 2 * static_cast<int>(src.size()) + 10);
    CHECK(h.tokens == greedy_oracle(m, src, max_out));
  }
}

TEST_CASE("beam hypotheses report consistent scores") {
  const SecocoModel m = micro_model(5);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 20; ++i) {
    const TokenSeq src = random_src(rng);
    const auto h1 = beam_search(m, src, 1);
    const auto h5 = beam_search(m, src, 5);
    for (const auto* h : {&h1, &h5}) {
      CHECK(h->log_prob <= 0.0);
      for (TokenId t : h->tokens) {
        CHECK(t != textops::kPad);
        CHECK(t != textops::kBos);
        CHECK(t != textops::kEos);
        CHECK(t != textops::kEmpty);
      }
      if (h->finished) {
        CHECK(h->log_prob == doctest::Approx(sequence_log_prob(m, src, h->tokens)).epsilon(1e-4));
        CHECK(h->score == doctest::Approx(h->log_prob / (h->tokens.size() + 1.0)));
      }
    }
  }
  CHECK(translate_e2e(m, {5, 6}, 3) == beam_search(m, {5, 6}, 3).tokens);
  CHECK_THROWS_AS(beam_search(m, {5}, 0), ConfigError);
  CHECK_NOTHROW(beam_search(m, {}, 4));
  CHECK_NOTHROW(beam_search(m, {5, 6}, 40));
}

TEST_CASE("batched greedy decoding matches one sentence at a time") {
  const SecocoModel m = micro_model(7);
  std::mt19937_64 rng(8);
  std::vector<TokenSeq> srcs;
  for (int i = 0; i < 12; ++i) srcs.push_back(random_src(rng));
  const auto batch = greedy_translate_batch(m, srcs);
  REQUIRE(batch.size() == srcs.size());
  for (std::size_t i = 0; i < srcs.size(); ++i) CHECK(batch[i] == beam_search(m, srcs[i], 1).tokens);
  CHECK(greedy_translate_batch(m, std::span<const TokenSeq>{}).empty());
}

TEST_CASE("edit mode never grows a sentence past the model's capacity") {
  class Always : public EditPredictor {
   public:
    std::vector<double> deletion_probs(const TokenSeq& s) const override {
      return std::vector<double>(s.size(), 0.0);
    }
    TokenSeq insertion_labels(const TokenSeq& s) const override {
      return TokenSeq(s.size() + 1, 6);
    }
  } always;
  const auto r = correct_iteratively({5, 6, 7}, always, {.max_iters = 5, .max_length = 14});
  CHECK(r.corrected.size() == 7);
  CHECK_FALSE(r.converged);

  // Constant encoder states and a Z column for token 6 make the model insert
  // everywhere; the zero deletion head keeps every token.
  SecocoModel m = micro_model(13);
  m.params().get("enc.ln.gamma")->value.fill(0.0f);
  m.params().get("enc.ln.beta")->value.fill(1.0f);
  m.params().get("head.del.w")->value.fill(0.0f);
  auto& z = m.params().get("head.ins.z")->value;
  z.fill(0.0f);
  const auto cls = textops::insertion_class(6, 12);
  for (int row = 0; row < z.rows(); ++row) z.row(row)[cls] = 1.0f;
  const auto grown = translate_edit(m, {5, 7}, 2);
  CHECK(grown.edits.corrected.size() == 11);
  CHECK_FALSE(grown.edits.converged);
  const auto full = translate_edit(m, TokenSeq(14, 5), 2);
  CHECK(full.edits.corrected == TokenSeq(14, 5));
  CHECK(full.edits.trace.rounds.empty());
}

TEST_CASE("edit mode equals e2e when the heads make no edits") {
  SecocoModel m = micro_model(9);
  m.params().get("head.del.w")->value.fill(0.0f);
  m.params().get("head.ins.z")->value.fill(0.0f);
  std::mt19937_64 rng(10);
  for (int i = 0; i < 8; ++i) {
    const TokenSeq src = random_src(rng);
    const auto e = translate_edit(m, src, 3);
    CHECK(e.edits.converged);
    CHECK(e.edits.n_iters == 1);
    CHECK(e.edits.corrected == src);
    CHECK(e.translation == translate_e2e(m, src, 3));
  }
}

TEST_CASE("model predictor deletes everything when the deletion head is saturated") {
  SecocoModel m = micro_model(11);
  m.params().get("head.ins.z")->value.fill(0.0f);
  const TokenSeq src = {5, 6, 7};
  const ModelEditPredictor pred(m);
  CHECK(pred.insertion_labels(src) == TokenSeq(4, textops::kEmpty));
  const auto probs = pred.deletion_probs(src);
  REQUIRE(probs.size() == 3);
  // Scale W along the first token's state so its deletion logit is large.
  numerics::NoGradGuard guard;
  const TokenSeq one[] = {src};
  const auto sb = model::SourceBatch::build(one, m.config().max_len);
  const auto states = m.encode(sb, {});
  auto& w = m.params().get("head.del.w")->value;
  for (int c = 0; c < m.config().d_model; ++c) w[static_cast<std::size_t>(c)] = 50.0f * states->value.row(sb.deletion_row(0, 0))[c];
  CHECK(pred.deletion_probs(src)[0] > 0.99);
  const auto r = correct_iteratively(src, pred, {.max_iters = 1});
  CHECK(r.trace.rounds.size() == 1);
  CHECK(r.trace.rounds[0].del_mask[0] == 1);
}

TEST_CASE("first-round predictions line up with the gold traces") {
  SecocoModel m = micro_model(12);
  m.params().get("head.del.w")->value.fill(0.0f);
  m.params().get("head.ins.z")->value.fill(0.0f);
  const std::vector<TokenSeq> noisy = {{5, 6, 6, 7}, {8, 9}};
  editsup::EditTrace g0;
  g0.rounds.push_back({{0, 0, 1, 0}, {textops::kEmpty, textops::kEmpty, 10, textops::kEmpty}});
  const std::vector<editsup::EditTrace> gold = {g0, {}};
  const auto preds = predict_first_round(m, noisy, gold);
  REQUIRE(preds.size() == 2);
  CHECK(preds[0].gold_mask == editsup::DelMask{0, 0, 1, 0});
  CHECK(preds[0].pred_mask == editsup::DelMask{0, 0, 0, 0});
  CHECK(preds[0].gold_labels == g0.rounds[0].ins_labels);
  CHECK(preds[0].pred_labels == TokenSeq(4, textops::kEmpty));
  CHECK(preds[1].gold_mask == editsup::DelMask{0, 0});
  CHECK(preds[1].gold_labels == TokenSeq(3, textops::kEmpty));
  CHECK(preds[1].pred_labels == TokenSeq(3, textops::kEmpty));
}
