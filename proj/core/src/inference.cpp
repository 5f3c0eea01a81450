#include "secoco/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

#include "secoco/autodiff.hpp"

namespace secoco::inference {

using model::ForwardContext;
using model::SourceBatch;
using model::TargetBatch;
using numerics::NoGradGuard;
using numerics::Tensor;
using numerics::Var;

namespace {

bool is_insertable(TokenId id) {
  return id != textops::kPad && id != textops::kBos && id != textops::kEos;
}

// Log-softmax of one logits row, in double.
std::vector<double> log_softmax(const float* row, int n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(row[i]));
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(row[i] - mx);
  const double lz = std::log(z) + mx;
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = row[i] - lz;
  return out;
}

bool can_emit(int id) {
  return id != textops::kPad && id != textops::kBos && id != textops::kEmpty;
}

// Repeats each sentence's encoder rows `copies` times.
std::pair<SourceBatch, Var> replicate(const SourceBatch& src, const Var& states,
                                      int copies) {
  SourceBatch rep;
  rep.batch = src.batch * copies;
  rep.len = src.len;
  const int d = states->value.cols();
  Tensor t(numerics::Shape{rep.batch * rep.len, d});
  for (int b = 0; b < src.batch; ++b) {
    for (int c = 0; c < copies; ++c) {
      const int dst = b * copies + c;
      const auto base = static_cast<std::size_t>(b) * src.len;
      rep.ids.insert(rep.ids.end(), src.ids.begin() + static_cast<long>(base),
                     src.ids.begin() + static_cast<long>(base) + src.len);
      rep.valid.insert(rep.valid.end(), src.valid.begin() + static_cast<long>(base),
                       src.valid.begin() + static_cast<long>(base) + src.len);
      rep.lengths.push_back(src.lengths[static_cast<std::size_t>(b)]);
      std::copy_n(states->value.row(b * src.len), static_cast<std::size_t>(src.len) * d,
                  t.row(dst * src.len));
    }
  }
  return {std::move(rep), numerics::constant(std::move(t))};
}

int max_output_len(const model::SecocoModel& m, std::size_t src_len) {
  return std::min(m.config().max_len - 1, static_cast<int>(2 * src_len + 10));
}

}  // namespace

std::vector<double> ModelEditPredictor::deletion_probs(const TokenSeq& seq) const {
  const TokenSeq one[] = {seq};
  return model_.deletion_probs(one)[0];
}

TokenSeq ModelEditPredictor::insertion_labels(const TokenSeq& seq) const {
  const TokenSeq one[] = {seq};
  const auto dists = model_.insertion_probs(one)[0];
  const std::size_t V = static_cast<std::size_t>(model_.config().src_vocab_size);
  TokenSeq labels;
  labels.reserve(dists.size());
  for (const auto& p : dists) {
    const auto cls =
        static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    const TokenId id = textops::from_insertion_class(cls, V);
    labels.push_back(is_insertable(id) ? id : textops::kEmpty);
  }
  return labels;
}

EditResult correct_iteratively(const TokenSeq& src, const EditPredictor& predictor,
                               const EditOptions& options) {
  if (options.max_iters < 1) throw ConfigError("max_iters must be >= 1");
  EditResult result;
  TokenSeq cur = src;
  std::set<TokenSeq> seen{cur};
  for (int it = 1; it <= options.max_iters; ++it) {
    result.n_iters = it;
    const auto probs = predictor.deletion_probs(cur);
    if (probs.size() != cur.size()) {
      throw ContractError("predictor returned a deletion probability per token mismatch");
    }
    editsup::EditRound round;
    round.del_mask.resize(cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i) {
      round.del_mask[i] = probs[i] > options.del_threshold;
    }
    const TokenSeq kept = editsup::apply_deletions<TokenId>(cur, round.del_mask);
    round.ins_labels = predictor.insertion_labels(kept);
    for (auto& l : round.ins_labels) {
      if (!is_insertable(l)) l = textops::kEmpty;
    }
    if (round.is_identity()) {
      result.converged = true;
      break;
    }
    TokenSeq next = editsup::apply_insertions<TokenId>(kept, round.ins_labels);
    if (options.max_length > 0 && next.size() > options.max_length) break;
    result.trace.rounds.push_back(std::move(round));
    cur = std::move(next);
    if (!seen.insert(cur).second) break;  // oscillation
  }
  result.corrected = std::move(cur);
  return result;
}

Hypothesis beam_search(const model::SecocoModel& m, const TokenSeq& src, int beam) {
  if (beam < 1) throw ConfigError("beam width must be >= 1");
  NoGradGuard guard;
  const TokenSeq one[] = {src};
  const SourceBatch enc_src = SourceBatch::build(one, m.config().max_len);
  const Var states = m.encode(enc_src, ForwardContext{});
  const int V = m.config().tgt_vocab_size;
  const int max_out = max_output_len(m, src.size());

  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (int t = 0; t < max_out && !live.empty(); ++t) {
    const int k = static_cast<int>(live.size());
    auto [rep_src, rep_states] = replicate(enc_src, states, k);
    std::vector<TokenSeq> prefixes;
    prefixes.reserve(live.size());
    for (const auto& h : live) {
      TokenSeq p{textops::kBos};
      p.insert(p.end(), h.tokens.begin(), h.tokens.end());
      prefixes.push_back(std::move(p));
    }
    const TargetBatch tgt = TargetBatch::from_prefixes(prefixes);
    const Var logits = m.decode_logits(rep_states, rep_src, tgt, ForwardContext{});

    // (log_prob, hypothesis index, token)
    std::vector<std::tuple<double, int, int>> cand;
    cand.reserve(static_cast<std::size_t>(k) * V);
    for (int b = 0; b < k; ++b) {
      const auto lp = log_softmax(logits->value.row(b * tgt.len + t), V);
      for (int c = 0; c < V; ++c) {
        if (!can_emit(c)) continue;
        cand.emplace_back(live[static_cast<std::size_t>(b)].log_prob + lp[static_cast<std::size_t>(c)], b, c);
      }
    }
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
      return std::get<2>(a) < std::get<2>(b);
    });
    std::vector<Hypothesis> next;
    for (std::size_t r = 0; r < cand.size() && next.size() < static_cast<std::size_t>(beam); ++r) {
      const auto [lp, b, c] = cand[r];
      Hypothesis h;
      h.tokens = live[static_cast<std::size_t>(b)].tokens;
      h.log_prob = lp;
      if (c == textops::kEos) {
        if (r < static_cast<std::size_t>(beam)) {
          h.finished = true;
          h.score = lp / static_cast<double>(h.tokens.size() + 1);
          finished.push_back(std::move(h));
        }
        continue;
      }
      h.tokens.push_back(c);
      h.score = lp / static_cast<double>(h.tokens.size() + 1);
      next.push_back(std::move(h));
    }
    live = std::move(next);
    if (finished.size() >= static_cast<std::size_t>(beam)) break;
  }
  const auto& pool = finished.empty() ? live : finished;
  if (pool.empty()) return Hypothesis{{}, 0.0, 0.0, false};
  return *std::max_element(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
    return a.score < b.score;
  });
}

TokenSeq translate_e2e(const model::SecocoModel& m, const TokenSeq& src, int beam) {
  return beam_search(m, src, beam).tokens;
}

EditTranslation translate_edit(const model::SecocoModel& m, const TokenSeq& src, int beam,
                               const EditOptions& options) {
  ModelEditPredictor predictor(m);
  EditOptions bounded = options;
  const std::size_t capacity = static_cast<std::size_t>(m.config().max_len - 2);
  if (bounded.max_length == 0 || bounded.max_length > capacity) bounded.max_length = capacity;
  EditTranslation out;
  out.edits = correct_iteratively(src, predictor, bounded);
  out.translation = translate_e2e(m, out.edits.corrected, beam);
  return out;
}

std::vector<TokenSeq> greedy_translate_batch(const model::SecocoModel& m,
                                             std::span<const TokenSeq> srcs) {
  std::vector<TokenSeq> out(srcs.size());
  if (srcs.empty()) return out;
  NoGradGuard guard;
  const SourceBatch src = SourceBatch::build(srcs, m.config().max_len);
  const Var states = m.encode(src, ForwardContext{});
  const int V = m.config().tgt_vocab_size;
  std::size_t longest = 0;
  for (const auto& s : srcs) longest = std::max(longest, s.size());
  const int max_out = max_output_len(m, longest);
  std::vector<TokenSeq> prefixes(srcs.size(), TokenSeq{textops::kBos});
  std::vector<bool> done(srcs.size(), false);
  std::size_t remaining = srcs.size();
  for (int t = 0; t < max_out && remaining > 0; ++t) {
    const TargetBatch tgt = TargetBatch::from_prefixes(prefixes);
    const Var logits = m.decode_logits(states, src, tgt, ForwardContext{});
    for (std::size_t b = 0; b < srcs.size(); ++b) {
      if (done[b]) {
        prefixes[b].push_back(textops::kPad);
        continue;
      }
      const float* row = logits->value.row(static_cast<int>(b) * tgt.len + t);
      int best = -1;
      for (int c = 0; c < V; ++c) {
        if (can_emit(c) && (best < 0 || row[c] > row[best])) best = c;
      }
      if (best == textops::kEos) {
        done[b] = true;
        --remaining;
        prefixes[b].push_back(textops::kPad);
      } else {
        prefixes[b].push_back(best);
        out[b].push_back(best);
      }
    }
  }
  return out;
}

double sequence_log_prob(const model::SecocoModel& m, const TokenSeq& src,
                         const TokenSeq& target) {
  NoGradGuard guard;
  const TokenSeq s[] = {src};
  const TokenSeq t[] = {target};
  const SourceBatch sb = SourceBatch::build(s, m.config().max_len);
  const TargetBatch tb = TargetBatch::build(t, m.config().max_len);
  const Var states = m.encode(sb, ForwardContext{});
  const Var logits = m.decode_logits(states, sb, tb, ForwardContext{});
  double total = 0.0;
  for (int i = 0; i < tb.len; ++i) {
    const int y = tb.output[static_cast<std::size_t>(i)];
    if (y < 0) continue;
    total += log_softmax(logits->value.row(i), m.config().tgt_vocab_size)[static_cast<std::size_t>(y)];
  }
  return total;
}

std::vector<eval::EditPrediction> predict_first_round(
    const model::SecocoModel& m, std::span<const TokenSeq> noisy,
    std::span<const editsup::EditTrace> gold, float del_threshold) {
  if (noisy.size() != gold.size()) throw InputError("one gold trace per sentence required");
  constexpr std::size_t kChunk = 32;
  const auto V = static_cast<std::size_t>(m.config().src_vocab_size);
  std::vector<eval::EditPrediction> out;
  out.reserve(noisy.size());
  for (std::size_t i0 = 0; i0 < noisy.size(); i0 += kChunk) {
    const std::size_t n = std::min(kChunk, noisy.size() - i0);
    std::vector<TokenSeq> kept;
    std::vector<editsup::EditRound> rounds;
    for (std::size_t i = i0; i < i0 + n; ++i) {
      editsup::EditRound r = gold[i].rounds.empty() ? editsup::identity_round<TokenId>(noisy[i].size())
                                                    : gold[i].rounds.front();
      if (r.del_mask.size() != noisy[i].size()) {
        throw InputError("gold trace does not start at the noisy input");
      }
      kept.push_back(editsup::apply_deletions<TokenId>(noisy[i], r.del_mask));
      rounds.push_back(std::move(r));
    }
    const auto del = m.deletion_probs(noisy.subspan(i0, n));
    const auto ins = m.insertion_probs(kept);
    for (std::size_t k = 0; k < n; ++k) {
      eval::EditPrediction p;
      p.gold_mask = rounds[k].del_mask;
      p.gold_labels = rounds[k].ins_labels;
      for (double q : del[k]) p.pred_mask.push_back(q > del_threshold);
      for (const auto& dist : ins[k]) {
        const auto cls = static_cast<std::size_t>(
            std::max_element(dist.begin(), dist.end()) - dist.begin());
        const TokenId id = textops::from_insertion_class(cls, V);
        p.pred_labels.push_back(is_insertable(id) ? id : textops::kEmpty);
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<std::string> render_edits(const TokenSeq& src, const EditResult& result,
                                      const textops::Vocab& vocab) {
  std::vector<std::string> lines;
  TokenSeq cur = src;
  int iter = 0;
  for (const auto& round : result.trace.rounds) {
    ++iter;
    std::string line = std::to_string(iter) + ":";
    std::size_t boundary = 0;
    auto insertion = [&](std::size_t j) {
      const TokenId l = round.ins_labels[j];
      if (l != textops::kEmpty) line += " [+" + vocab.surface(l) + "+]";
    };
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (round.del_mask[i]) {
        line += " [-" + vocab.surface(cur[i]) + "-]";
        continue;
      }
      insertion(boundary++);
      line += " " + vocab.surface(cur[i]);
    }
    insertion(boundary);
    lines.push_back(std::move(line));
    cur = editsup::apply_round<TokenId>(cur, round);
  }
  if (result.converged) lines.push_back(std::to_string(iter + 1) + ": no edits");
  return lines;
}

}  // namespace secoco::inference
