#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "secoco/editsup.hpp"
#include "secoco/noise.hpp"
#include "secoco/rng.hpp"
#include "secoco/textops.hpp"

using namespace secoco;
using namespace secoco::editsup;

namespace {

Words chars(const std::string& s) {
  Words w;
  for (char c : s) w.emplace_back(1, c);
  return w;
}

std::string join(const Words& w) {
  std::string s;
  for (const auto& t : w) s += t;
  return s;
}

}  // namespace

TEST_CASE("figure example: delete the repeated b, then insert c") {
  const Words abbd = chars("abbd");
  const Words abd = apply_deletions<std::string>(abbd, mask_from_string("0010"));
  CHECK(join(abd) == "abd");
  const Words labels{"", "", "c", ""};
  CHECK(join(apply_insertions<std::string>(abd, labels)) == "abcd");

  // Same example on ids.
  const TokenSeq ids{5, 6, 6, 8};
  const TokenSeq kept = apply_deletions<TokenId>(ids, mask_from_string("0010"));
  CHECK(kept == TokenSeq{5, 6, 8});
  const TokenSeq ins{textops::kEmpty, textops::kEmpty, 7, textops::kEmpty};
  CHECK(apply_insertions<TokenId>(kept, ins) == TokenSeq{5, 6, 7, 8});
}

TEST_CASE("shape contracts") {
  const Words w = chars("abc");
  CHECK_THROWS_AS(apply_deletions<std::string>(w, DelMask{0, 1}), ContractError);
  CHECK_THROWS_AS(apply_insertions<std::string>(w, Words{"", "", ""}), ContractError);
  CHECK(apply_insertions<std::string>(Words{}, Words{"x"}) == Words{"x"});
  CHECK(apply_deletions<std::string>(Words{}, DelMask{}).empty());
}

TEST_CASE("identity round and empty trace leave the sequence unchanged") {
  const Words w = chars("hello");
  const auto id = identity_round<std::string>(w.size());
  CHECK(id.is_identity());
  CHECK(apply_round<std::string>(w, id) == w);
  CHECK(replay<std::string>(w, WordEditTrace{}) == w);
  CHECK(replay_states<std::string>(w, WordEditTrace{}).size() == 1);
}

TEST_CASE("mask strings") {
  CHECK(mask_to_string(DelMask{0, 1, 1, 0}) == "0110");
  CHECK(mask_from_string("") == DelMask{});
  CHECK_THROWS_AS(mask_from_string("01x"), InputError);
}

TEST_CASE("trace of noisy == clean is empty") {
  const Words w = chars("abcd");
  NoiseRecord r;
  for (int i = 0; i < 4; ++i) r.origins.push_back({Origin::kKept, i});
  CHECK(trace_from_noise(w, w, r).empty());
}

TEST_CASE("repeat is undone by deleting the second copy") {
  const Words clean = chars("abd");
  const Words noisy = chars("abbd");
  NoiseRecord r;
  r.origins = {{Origin::kKept, 0}, {Origin::kKept, 1}, {Origin::kRepeated, 1}, {Origin::kKept, 2}};
  const auto t = trace_from_noise(noisy, clean, r);
  REQUIRE(t.rounds.size() == 1);
  CHECK(mask_to_string(t.rounds[0].del_mask) == "0010");
  CHECK(t.rounds[0].num_insertions() == 0);
  CHECK(replay<std::string>(noisy, t) == clean);
}

TEST_CASE("typo is one deletion plus one insertion in the same round") {
  const Words clean{"we", "have", "things"};
  const Words noisy{"we", "hvae", "things"};
  NoiseRecord r;
  r.origins = {{Origin::kKept, 0}, {Origin::kTypo, 1}, {Origin::kKept, 2}};
  const auto t = trace_from_noise(noisy, clean, r);
  REQUIRE(t.rounds.size() == 1);
  CHECK(mask_to_string(t.rounds[0].del_mask) == "010");
  CHECK(t.rounds[0].ins_labels == Words{"", "have", ""});
}

TEST_CASE("a run of k missing tokens takes ceil(log2(k+1)) rounds") {
  for (int k = 1; k <= 12; ++k) {
    Words clean{"A"};
    for (int i = 0; i < k; ++i) clean.push_back("m" + std::to_string(i));
    clean.push_back("B");
    const Words noisy{"A", "B"};
    NoiseRecord r;
    r.origins = {{Origin::kKept, 0}, {Origin::kKept, k + 1}};
    r.num_clean_deletions = static_cast<std::size_t>(k);
    const auto t = trace_from_noise(noisy, clean, r);
    const auto expect = static_cast<std::size_t>(std::ceil(std::log2(k + 1.0)));
    CHECK(t.rounds.size() == expect);
    CHECK(replay<std::string>(noisy, t) == clean);
    for (std::size_t i = 1; i < t.rounds.size(); ++i) CHECK(t.rounds[i].num_deletions() == 0);
  }
}

TEST_CASE("inconsistent noise records are rejected") {
  const Words clean = chars("ab");
  NoiseRecord r;
  r.origins = {{Origin::kKept, 0}, {Origin::kKept, 1}};
  CHECK_THROWS_AS(trace_from_noise(chars("ax"), clean, r), IntegrityError);
  r.origins = {{Origin::kKept, 0}};
  CHECK_THROWS_AS(trace_from_noise(chars("ab"), clean, r), IntegrityError);
  r.origins = {{Origin::kKept, 1}, {Origin::kKept, 0}};
  CHECK_THROWS_AS(trace_from_noise(chars("ba"), clean, r), IntegrityError);
  r.origins = {{Origin::kKept, 0}, {Origin::kTypo, 1}};
  CHECK_THROWS_AS(trace_from_noise(chars("ab"), clean, r), IntegrityError);
}

TEST_CASE("gold traces replay noisy to clean over random noise") {
  const noise::SyntheticLanguage lang(noise::TaskSpec{});
  noise::NoiseSpec spec;
  spec.p_delete = 0.2;
  spec.p_insert = 0.2;
  spec.p_repeat = 0.15;
  spec.p_typo = 0.15;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    auto rng = make_rng(11, i);
    const Words clean = lang.sample_source(rng);
    const auto pair = noise::inject_noise(clean, spec, rng, lang.source_lexicon());
    const auto states = replay_states<std::string>(pair.noisy, pair.trace);
    REQUIRE(states.back() == clean);
    for (std::size_t t = 0; t < pair.trace.rounds.size(); ++t) {
      const auto& round = pair.trace.rounds[t];
      CHECK_FALSE(round.is_identity());
      if (t > 0) CHECK(round.num_deletions() == 0);
      CHECK(round.del_mask.size() == states[t].size());
    }
  }
}

TEST_CASE("sampled supervision is one consistent round of the trace") {
  const noise::SyntheticLanguage lang(noise::TaskSpec{});
  noise::NoiseSpec spec;
  spec.p_delete = 0.4;
  std::vector<int> picked(8, 0);
  for (std::uint64_t i = 0; i < 300; ++i) {
    auto rng = make_rng(5, i);
    const Words clean = lang.sample_source(rng);
    const auto pair = noise::inject_noise(clean, spec, rng, lang.source_lexicon());
    const auto sup = sample_supervision(pair.trace, std::span<const std::string>(pair.noisy), rng);
    CHECK(sup.del_mask.size() == sup.del_input.size());
    CHECK(sup.ins_labels.size() == sup.ins_input.size() + 1);
    CHECK(apply_deletions<std::string>(sup.del_input, sup.del_mask) == sup.ins_input);
    if (pair.trace.empty()) {
      CHECK(sup.del_input == clean);
      CHECK(sup.round_index == 0);
      continue;
    }
    REQUIRE(sup.round_index < pair.trace.rounds.size());
    ++picked[std::min<std::size_t>(sup.round_index, 7)];
    // Finishing the remaining rounds from the supervised output reaches clean.
    Words cur = apply_insertions<std::string>(sup.ins_input, sup.ins_labels);
    for (std::size_t t = sup.round_index + 1; t < pair.trace.rounds.size(); ++t) {
      cur = apply_round<std::string>(cur, pair.trace.rounds[t]);
    }
    CHECK(cur == clean);
  }
  CHECK(picked[0] > 0);
  CHECK(picked[1] > 0);  // later rounds get sampled too
}

TEST_CASE("surface/id trace conversion and JSON round-trip") {
  const textops::Vocab vocab({"a", "b", "c", "d"});
  WordEditTrace t;
  t.rounds.push_back({mask_from_string("0010"), Words{"", "", "", ""}});
  t.rounds.push_back({mask_from_string("000"), Words{"", "", "c", ""}});
  const EditTrace ids = encode_trace(t, vocab);
  CHECK(ids.rounds[1].ins_labels == TokenSeq{textops::kEmpty, textops::kEmpty, 7, textops::kEmpty});
  CHECK(decode_trace(ids, vocab) == t);
  CHECK(trace_from_json(trace_to_json(t)) == t);
  CHECK(trace_to_json(t)[0]["del"] == "0010");

  WordEditTrace oov;
  oov.rounds.push_back({DelMask{0}, Words{"zz", ""}});
  CHECK(encode_trace(oov, vocab).rounds[0].ins_labels[0] == textops::kUnk);

  CHECK_THROWS_AS(trace_from_json(nlohmann::json::object()), InputError);
  CHECK_THROWS_AS(trace_from_json(nlohmann::json::parse(R"([{"del":"01","ins":[""]}])")),
                  InputError);
}
