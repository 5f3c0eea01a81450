#include <cmath>
#include <set>

#include "doctest.h"
#include "secoco/noise.hpp"
#include "secoco/rng.hpp"
#include "secoco/textops.hpp"

using namespace secoco;
using namespace secoco::noise;

namespace {

bool is_cv_word(const std::string& w) {
  static const std::string vowels = "aeiou";
  if (w.size() < 2 || w.size() % 2 != 0) return false;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const bool vowel = vowels.find(w[i]) != std::string::npos;
    if (vowel != (i % 2 == 1)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("noise spec validation") {
  NoiseSpec s;
  CHECK_NOTHROW(s.validate());
  s.p_delete = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = NoiseSpec{};
  s.p_typo = -0.1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK(NoiseSpec{0, 0, 0, 0, 8, 1}.is_noop());
}

TEST_CASE("task spec validation") {
  TaskSpec t;
  CHECK_NOTHROW(t.validate());
  t.branching = t.lexicon_size;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TaskSpec{};
  t.min_len = 10;
  t.max_len = 4;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("synthetic language: grammatical sources and a bijective dictionary") {
  const SyntheticLanguage lang(TaskSpec{});
  std::set<std::string> images;
  for (const auto& [src, tgt] : lang.dictionary()) {
    images.insert(tgt);
    if (src != std::string(kEndMarker)) CHECK(is_cv_word(src));
  }
  CHECK(images.size() == lang.dictionary().size());
  CHECK(lang.source_lexicon().size() == TaskSpec{}.lexicon_size + 1);

  for (std::uint64_t i = 0; i < 200; ++i) {
    auto rng = make_rng(1, i);
    const Words s = lang.sample_source(rng);
    CHECK(lang.is_grammatical(s));
    CHECK(s.back() == std::string(kEndMarker));
    CHECK(s.size() >= TaskSpec{}.min_len + 1);
    CHECK(s.size() <= TaskSpec{}.max_len + 1);
    const Words t = lang.translate(s);
    REQUIRE(t.size() == s.size());
    // Reversed dictionary image.
    for (std::size_t k = 0; k < s.size(); ++k) {
      CHECK(t[t.size() - 1 - k] == lang.dictionary().at(s[k]));
    }
  }
  CHECK_THROWS_AS(lang.translate(Words{"zzz"}), InputError);
}

TEST_CASE("synth_task is seeded per sentence") {
  const SyntheticLanguage lang(TaskSpec{});
  const auto a = synth_task(9, 50, lang);
  const auto b = synth_task(9, 80, lang);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].source == b[i].source);
    CHECK(a[i].target == b[i].target);
  }
  const auto c = synth_task(10, 50, lang);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i].source == c[i].source;
  CHECK(same < a.size());
}

TEST_CASE("zero rates give identical sentences and an empty trace") {
  const SyntheticLanguage lang(TaskSpec{});
  auto rng = make_rng(2, 0);
  const Words clean = lang.sample_source(rng);
  const auto p = inject_noise(clean, NoiseSpec{0, 0, 0, 0, 8, 1}, rng, lang.source_lexicon());
  CHECK(p.noisy == clean);
  CHECK(p.trace.empty());
  CHECK_THROWS_AS(inject_noise(Words{}, NoiseSpec{}, rng, lang.source_lexicon()), ContractError);
}

TEST_CASE("edits per sentence never exceed max_edits") {
  const SyntheticLanguage lang(TaskSpec{});
  NoiseSpec spec{0.5, 0.5, 0.5, 0.5, 3, 1};
  for (std::uint64_t i = 0; i < 500; ++i) {
    auto rng = make_rng(4, i);
    const Words clean = lang.sample_source(rng);
    const auto p = inject_noise(clean, spec, rng, lang.source_lexicon());
    CHECK(p.record.num_atomic_edits() <= 3);
    CHECK(editsup::replay<std::string>(p.noisy, p.trace) == clean);
  }
}

TEST_CASE("empirical noise rates track the configured probabilities") {
  const SyntheticLanguage lang(TaskSpec{});
  const NoiseSpec spec;
  NoiseStats stats;
  std::size_t boundaries = 0;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    auto rng = make_rng(17, i);
    const Words clean = lang.sample_source(rng);
    boundaries += clean.size() + 1;
    stats.add(inject_noise(clean, spec, rng, lang.source_lexicon()));
  }
  CHECK(stats.sentences == 10000);
  const double del = stats.deletion_rate();
  CHECK(std::abs(del - spec.p_delete) <= 0.1 * spec.p_delete);
  const double ins = static_cast<double>(stats.insertions) / boundaries;
  CHECK(std::abs(ins - spec.p_insert) <= 0.1 * spec.p_insert);
  // Repeats and typos apply to surviving tokens only.
  const double survivors = static_cast<double>(stats.clean_tokens - stats.deletions);
  CHECK(std::abs(stats.typos / survivors - spec.p_typo) <= 0.15 * spec.p_typo);
  const double kept = survivors - stats.typos;
  CHECK(std::abs(stats.repeats / kept - spec.p_repeat) <= 0.15 * spec.p_repeat);
}

TEST_CASE("single-edit injection makes exactly one edit of the requested kind") {
  const SyntheticLanguage lang(TaskSpec{});
  for (EditKind kind : {EditKind::kDelete, EditKind::kInsert, EditKind::kRepeat, EditKind::kTypo}) {
    for (std::uint64_t i = 0; i < 100; ++i) {
      auto rng = make_rng(8, i);
      const Words clean = lang.sample_source(rng);
      const auto p = inject_single_edit(clean, kind, rng, lang.source_lexicon());
      REQUIRE(p.has_value());
      CHECK(p->record.num_atomic_edits() == 1);
      CHECK(editsup::replay<std::string>(p->noisy, p->trace) == clean);
      CHECK(p->noisy != clean);
      NoiseStats s;
      s.add(*p);
      CHECK(s.deletions == (kind == EditKind::kDelete ? 1u : 0u));
      CHECK(s.insertions == (kind == EditKind::kInsert ? 1u : 0u));
      CHECK(s.repeats == (kind == EditKind::kRepeat ? 1u : 0u));
      CHECK(s.typos == (kind == EditKind::kTypo ? 1u : 0u));
    }
  }
  auto rng = make_rng(1, 1);
  CHECK_FALSE(inject_single_edit(Words{"a"}, EditKind::kDelete, rng, Words{"b"}).has_value());
  CHECK_FALSE(inject_single_edit(Words{"aa"}, EditKind::kTypo, rng, Words{"b"}).has_value());
  CHECK(to_string(EditKind::kRepeat) == "repeat");
}

TEST_CASE("typos swap one adjacent pair and never produce lexicon words") {
  const SyntheticLanguage lang(TaskSpec{});
  std::set<std::string> lexicon(lang.source_lexicon().begin(), lang.source_lexicon().end());
  std::mt19937_64 rng(3);
  for (const auto& w : lang.source_lexicon()) {
    for (int k = 0; k < 10; ++k) {
      const auto t = make_typo(w, rng);
      if (w.size() < 2) {
        CHECK_FALSE(t.has_value());
        continue;
      }
      REQUIRE(t.has_value());
      CHECK(*t != w);
      CHECK(t->size() == w.size());
      CHECK(lexicon.count(*t) == 0);
      std::size_t diff = 0;
      for (std::size_t i = 0; i < w.size(); ++i) diff += (*t)[i] != w[i];
      CHECK(diff == 2);
    }
  }
  CHECK_FALSE(make_typo("aaa", rng).has_value());
  const auto u = make_typo("\xC3\xA9x", rng);
  REQUIRE(u.has_value());
  CHECK(*u == "x\xC3\xA9");
}
