#ifndef SECOCO_EDITSUP_HPP_
#define SECOCO_EDITSUP_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "secoco/common.hpp"
#include "secoco/textops.hpp"

namespace secoco::editsup {

// 1 = delete the token at that position.
using DelMask = std::vector<std::uint8_t>;

template <class Token>
struct EmptyLabel;

template <>
struct EmptyLabel<TokenId> {
  static TokenId value() { return textops::kEmpty; }
};

template <>
struct EmptyLabel<std::string> {
  static std::string value() { return {}; }
};

template <class Token>
bool is_empty_label(const Token& t) {
  return t == EmptyLabel<Token>::value();
}

// One correction iteration: deletions on the round input, then at most one
// insertion per boundary of the post-deletion sequence. n tokens have n+1
// boundaries; boundary 0 is the sentence start.
template <class Token>
struct BasicEditRound {
  DelMask del_mask;
  std::vector<Token> ins_labels;

  std::size_t num_deletions() const {
    std::size_t n = 0;
    for (auto b : del_mask) n += b != 0;
    return n;
  }
  std::size_t num_insertions() const {
    std::size_t n = 0;
    for (const auto& l : ins_labels) n += !is_empty_label(l);
    return n;
  }
  bool is_identity() const { return num_deletions() == 0 && num_insertions() == 0; }

  bool operator==(const BasicEditRound&) const = default;
};

template <class Token>
struct BasicEditTrace {
  std::vector<BasicEditRound<Token>> rounds;

  bool empty() const { return rounds.empty(); }
  bool operator==(const BasicEditTrace&) const = default;
};

using EditRound = BasicEditRound<TokenId>;
using EditTrace = BasicEditTrace<TokenId>;
using WordEditRound = BasicEditRound<std::string>;
using WordEditTrace = BasicEditTrace<std::string>;

template <class Token>
std::vector<Token> apply_deletions(std::span<const Token> seq,
                                   std::span<const std::uint8_t> mask) {
  if (mask.size() != seq.size()) {
    throw ContractError("deletion mask length " + std::to_string(mask.size()) +
                        " != sequence length " + std::to_string(seq.size()));
  }
  std::vector<Token> out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (mask[i] == 0) out.push_back(seq[i]);
  }
  return out;
}

template <class Token>
std::vector<Token> apply_insertions(std::span<const Token> seq,
                                    std::span<const Token> labels) {
  if (labels.size() != seq.size() + 1) {
    throw ContractError("insertion labels length " +
                        std::to_string(labels.size()) + " != sequence length " +
                        std::to_string(seq.size()) + " + 1");
  }
  std::vector<Token> out;
  out.reserve(seq.size() + labels.size());
  for (std::size_t j = 0; j <= seq.size(); ++j) {
    if (!is_empty_label(labels[j])) out.push_back(labels[j]);
    if (j < seq.size()) out.push_back(seq[j]);
  }
  return out;
}

template <class Token>
std::vector<Token> apply_round(std::span<const Token> seq,
                               const BasicEditRound<Token>& round) {
  const auto kept = apply_deletions<Token>(seq, round.del_mask);
  return apply_insertions<Token>(kept, round.ins_labels);
}

// Folds apply_round over the trace. Returns every round input followed by
// the final sequence, so the result has rounds.size() + 1 entries.
template <class Token>
std::vector<std::vector<Token>> replay_states(std::span<const Token> seq,
                                              const BasicEditTrace<Token>& trace) {
  std::vector<std::vector<Token>> states;
  states.reserve(trace.rounds.size() + 1);
  states.emplace_back(seq.begin(), seq.end());
  for (const auto& round : trace.rounds) {
    states.push_back(apply_round<Token>(states.back(), round));
  }
  return states;
}

template <class Token>
std::vector<Token> replay(std::span<const Token> seq,
                          const BasicEditTrace<Token>& trace) {
  return std::move(replay_states(seq, trace).back());
}

template <class Token>
BasicEditRound<Token> identity_round(std::size_t length) {
  return {DelMask(length, 0),
          std::vector<Token>(length + 1, EmptyLabel<Token>::value())};
}

// Atomic edit kinds recorded by the noise injector, one origin per noisy token.
enum class Origin : std::uint8_t {
  kKept,      // clean token copied unchanged
  kInserted,  // random token, clean_index = -1
  kRepeated,  // duplicate of the kept token right before it
  kTypo,      // corrupted surface of clean token clean_index
};

struct TokenOrigin {
  Origin kind = Origin::kKept;
  int clean_index = -1;

  bool operator==(const TokenOrigin&) const = default;
};

struct NoiseRecord {
  std::vector<TokenOrigin> origins;  // parallel to the noisy sequence
  std::size_t num_clean_deletions = 0;

  // Noise events: insertions, repeats, typos and clean-token deletions.
  std::size_t num_atomic_edits() const;
};

// Shortest alternating decomposition of noisy -> clean consistent with the
// record. Round 1 carries every deletion; each round then fills the middle
// token of every remaining gap, so a run of k missing tokens takes
// ceil(log2(k + 1)) rounds.
WordEditTrace trace_from_noise(std::span<const std::string> noisy,
                               std::span<const std::string> clean,
                               const NoiseRecord& record);

template <class Token>
struct Supervision {
  std::vector<Token> del_input;
  DelMask del_mask;
  std::vector<Token> ins_input;  // del_input after the gold deletions
  std::vector<Token> ins_labels;
  std::size_t round_index = 0;   // which round was sampled (0 for identity)
};

// One round sampled uniformly from the trace: the single-iteration (T = 1)
// training signal for both predictors. An empty trace yields identity
// supervision on start, which is then the clean sequence.
template <class Token>
Supervision<Token> sample_supervision(const BasicEditTrace<Token>& trace,
                                      std::span<const Token> start,
                                      std::mt19937_64& rng) {
  Supervision<Token> sup;
  if (trace.empty()) {
    sup.del_input.assign(start.begin(), start.end());
    sup.del_mask.assign(start.size(), 0);
    sup.ins_input = sup.del_input;
    sup.ins_labels.assign(start.size() + 1, EmptyLabel<Token>::value());
    return sup;
  }
  std::size_t t = 0;
  if (trace.rounds.size() > 1) {
    std::uniform_int_distribution<std::size_t> pick(0, trace.rounds.size() - 1);
    t = pick(rng);
  }
  auto states = replay_states(start, trace);
  const auto& round = trace.rounds[t];
  sup.del_input = std::move(states[t]);
  sup.del_mask = round.del_mask;
  sup.ins_input = apply_deletions<Token>(sup.del_input, sup.del_mask);
  sup.ins_labels = round.ins_labels;
  sup.round_index = t;
  if (sup.ins_labels.size() != sup.ins_input.size() + 1) {
    throw ContractError("round insertion labels do not fit the sequence");
  }
  return sup;
}

// Surface <-> id conversion. OOV insertion labels become UNK.
EditRound encode_round(const WordEditRound& round, const textops::Vocab& vocab);
EditTrace encode_trace(const WordEditTrace& trace, const textops::Vocab& vocab);
WordEditRound decode_round(const EditRound& round, const textops::Vocab& vocab);
WordEditTrace decode_trace(const EditTrace& trace, const textops::Vocab& vocab);

// {"del": "0010", "ins": ["", "", "c", ""]} per round, EMPTY as "".
nlohmann::json trace_to_json(const WordEditTrace& trace);
WordEditTrace trace_from_json(const nlohmann::json& j);

std::string mask_to_string(std::span<const std::uint8_t> mask);
DelMask mask_from_string(std::string_view bits);

}  // namespace secoco::editsup

#endif  // SECOCO_EDITSUP_HPP_
