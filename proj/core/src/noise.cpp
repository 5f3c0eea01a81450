#include "secoco/noise.hpp"

#include <algorithm>
#include <set>

#include "secoco/rng.hpp"
#include "secoco/textops.hpp"

namespace secoco::noise {

using editsup::Origin;
using editsup::TokenOrigin;

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string(name) + " must lie in [0, 1], got " +
                      std::to_string(p));
  }
}

bool draw(std::mt19937_64& rng, double p) {
  if (p <= 0.0) return false;
  std::bernoulli_distribution d(p);
  return d(rng);
}

const std::string& pick(std::span<const std::string> pool, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

// Builds the noisy side and the inverse trace from the recorded origins.
NoisyPair finish(std::span<const std::string> clean, Words noisy,
                 editsup::NoiseRecord record) {
  NoisyPair pair;
  pair.clean.assign(clean.begin(), clean.end());
  pair.trace = editsup::trace_from_noise(noisy, clean, record);
  pair.noisy = std::move(noisy);
  pair.record = std::move(record);
  return pair;
}

}  // namespace

void NoiseSpec::validate() const {
  check_probability(p_delete, "p_delete");
  check_probability(p_insert, "p_insert");
  check_probability(p_repeat, "p_repeat");
  check_probability(p_typo, "p_typo");
}

std::optional<std::string> make_typo(const std::string& word,
                                     std::mt19937_64& rng) {
  auto cps = textops::split_code_points(word);
  std::vector<std::size_t> sites;
  for (std::size_t k = 0; k + 1 < cps.size(); ++k) {
    if (cps[k] != cps[k + 1]) sites.push_back(k);
  }
  if (sites.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> d(0, sites.size() - 1);
  const std::size_t k = sites[d(rng)];
  std::swap(cps[k], cps[k + 1]);
  std::string out;
  for (const auto& c : cps) out += c;
  return out;
}

NoisyPair inject_noise(std::span<const std::string> clean, const NoiseSpec& spec,
                       std::mt19937_64& rng,
                       std::span<const std::string> insertion_pool) {
  if (clean.empty()) throw ContractError("inject_noise needs a nonempty sentence");
  spec.validate();
  Words noisy;
  editsup::NoiseRecord record;
  std::size_t edits = 0;
  auto budget = [&] { return edits < spec.max_edits; };
  auto maybe_insert = [&] {
    if (draw(rng, spec.p_insert) && budget() && !insertion_pool.empty()) {
      noisy.push_back(pick(insertion_pool, rng));
      record.origins.push_back({Origin::kInserted, -1});
      ++edits;
    }
  };

  maybe_insert();
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const int ci = static_cast<int>(i);
    if (draw(rng, spec.p_delete) && budget()) {
      ++record.num_clean_deletions;
      ++edits;
    } else if (draw(rng, spec.p_typo) && budget()) {
      if (auto typo = make_typo(clean[i], rng)) {
        noisy.push_back(std::move(*typo));
        record.origins.push_back({Origin::kTypo, ci});
        ++edits;
      } else {
        noisy.push_back(clean[i]);
        record.origins.push_back({Origin::kKept, ci});
      }
    } else {
      noisy.push_back(clean[i]);
      record.origins.push_back({Origin::kKept, ci});
      if (draw(rng, spec.p_repeat) && budget()) {
        noisy.push_back(clean[i]);
        record.origins.push_back({Origin::kRepeated, ci});
        ++edits;
      }
    }
    maybe_insert();
  }
  return finish(clean, std::move(noisy), std::move(record));
}

std::string_view to_string(EditKind kind) {
  switch (kind) {
    case EditKind::kDelete: return "delete";
    case EditKind::kInsert: return "insert";
    case EditKind::kRepeat: return "repeat";
    case EditKind::kTypo: return "typo";
  }
  return "?";
}

std::optional<NoisyPair> inject_single_edit(
    std::span<const std::string> clean, EditKind kind, std::mt19937_64& rng,
    std::span<const std::string> insertion_pool) {
  if (clean.empty()) return std::nullopt;
  const std::size_t n = clean.size();
  Words noisy;
  editsup::NoiseRecord record;
  auto keep = [&](std::size_t i) {
    noisy.push_back(clean[i]);
    record.origins.push_back({Origin::kKept, static_cast<int>(i)});
  };

  switch (kind) {
    case EditKind::kDelete: {
      if (n < 2) return std::nullopt;
      std::uniform_int_distribution<std::size_t> d(0, n - 1);
      const std::size_t at = d(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (i != at) keep(i);
      }
      record.num_clean_deletions = 1;
      break;
    }
    case EditKind::kInsert: {
      if (insertion_pool.empty()) return std::nullopt;
      std::uniform_int_distribution<std::size_t> d(0, n);
      const std::size_t at = d(rng);
      const std::string& tok = pick(insertion_pool, rng);
      for (std::size_t i = 0; i <= n; ++i) {
        if (i == at) {
          noisy.push_back(tok);
          record.origins.push_back({Origin::kInserted, -1});
        }
        if (i < n) keep(i);
      }
      break;
    }
    case EditKind::kRepeat: {
      std::uniform_int_distribution<std::size_t> d(0, n - 1);
      const std::size_t at = d(rng);
      for (std::size_t i = 0; i < n; ++i) {
        keep(i);
        if (i == at) {
          noisy.push_back(clean[i]);
          record.origins.push_back({Origin::kRepeated, static_cast<int>(i)});
        }
      }
      break;
    }
    case EditKind::kTypo: {
      std::vector<std::size_t> sites;
      for (std::size_t i = 0; i < n; ++i) {
        auto cps = textops::split_code_points(clean[i]);
        for (std::size_t k = 0; k + 1 < cps.size(); ++k) {
          if (cps[k] != cps[k + 1]) {
            sites.push_back(i);
            break;
          }
        }
      }
      if (sites.empty()) return std::nullopt;
      std::uniform_int_distribution<std::size_t> d(0, sites.size() - 1);
      const std::size_t at = sites[d(rng)];
      for (std::size_t i = 0; i < n; ++i) {
        if (i == at) {
          noisy.push_back(*make_typo(clean[i], rng));
          record.origins.push_back({Origin::kTypo, static_cast<int>(i)});
        } else {
          keep(i);
        }
      }
      break;
    }
  }
  return finish(clean, std::move(noisy), std::move(record));
}

void NoiseStats::add(const NoisyPair& pair) {
  ++sentences;
  clean_tokens += pair.clean.size();
  std::size_t typo_count = 0;
  for (const auto& o : pair.record.origins) {
    switch (o.kind) {
      case Origin::kInserted: ++insertions; break;
      case Origin::kRepeated: ++repeats; break;
      case Origin::kTypo: ++typo_count; break;
      case Origin::kKept: break;
    }
  }
  typos += typo_count;
  deletions += pair.record.num_clean_deletions;
  unchanged += pair.noisy == pair.clean;
  rounds += pair.trace.rounds.size();
}

void TaskSpec::validate() const {
  if (lexicon_size < 2) throw ConfigError("task lexicon_size must be >= 2");
  if (branching < 1 || branching >= lexicon_size) {
    throw ConfigError("task branching must lie in [1, lexicon_size)");
  }
  if (num_starts < 1 || num_starts > lexicon_size) {
    throw ConfigError("task num_starts must lie in [1, lexicon_size]");
  }
  if (min_len < 1 || max_len < min_len) {
    throw ConfigError("task needs 1 <= min_len <= max_len");
  }
}

namespace {

constexpr std::string_view kSrcOnsets = "bdfgklmnprstvz";
constexpr std::string_view kSrcVowels = "aeiou";
constexpr std::string_view kTgtOnsets = "BDGKLMNPRSTZ";
constexpr std::string_view kTgtVowels = "AEIOU";

std::vector<std::string> make_words(std::size_t count, std::string_view onsets,
                                    std::string_view vowels, std::mt19937_64& rng) {
  std::set<std::string> seen;
  std::vector<std::string> words;
  std::uniform_int_distribution<std::size_t> on(0, onsets.size() - 1);
  std::uniform_int_distribution<std::size_t> vo(0, vowels.size() - 1);
  std::uniform_int_distribution<int> syl(2, 3);
  while (words.size() < count) {
    std::string w;
    const int n = syl(rng);
    for (int s = 0; s < n; ++s) {
      w.push_back(onsets[on(rng)]);
      w.push_back(vowels[vo(rng)]);
    }
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

}  // namespace

SyntheticLanguage::SyntheticLanguage(const TaskSpec& spec) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(derive_seed(spec_.grammar_seed, "grammar"));
  words_ = make_words(spec_.lexicon_size, kSrcOnsets, kSrcVowels, rng);
  auto targets = make_words(spec_.lexicon_size, kTgtOnsets, kTgtVowels, rng);
  for (std::size_t i = 0; i < words_.size(); ++i) {
    dictionary_.emplace(words_[i], targets[i]);
    word_index_.emplace(words_[i], i);
  }
  if (spec_.end_marker) {
    dictionary_.emplace(std::string(kEndMarker), std::string(kEndMarker));
  }

  const std::size_t v = words_.size();
  successors_.resize(v);
  for (std::size_t i = 0; i < v; ++i) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < v; ++j) {
      if (j != i) others.push_back(j);
    }
    std::shuffle(others.begin(), others.end(), rng);
    others.resize(spec_.branching);
    std::sort(others.begin(), others.end());
    successors_[i] = std::move(others);
  }
  std::vector<std::size_t> all(v);
  for (std::size_t i = 0; i < v; ++i) all[i] = i;
  std::shuffle(all.begin(), all.end(), rng);
  starts_.assign(all.begin(), all.begin() + static_cast<long>(spec_.num_starts));
  std::sort(starts_.begin(), starts_.end());

  source_lexicon_ = words_;
  if (spec_.end_marker) source_lexicon_.emplace_back(kEndMarker);
}

Words SyntheticLanguage::sample_source(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> len(spec_.min_len, spec_.max_len);
  std::uniform_int_distribution<std::size_t> start(0, starts_.size() - 1);
  std::uniform_int_distribution<std::size_t> next(0, spec_.branching - 1);
  const std::size_t n = len(rng);
  Words out;
  out.reserve(n + 1);
  std::size_t cur = starts_[start(rng)];
  out.push_back(words_[cur]);
  while (out.size() < n) {
    cur = successors_[cur][next(rng)];
    out.push_back(words_[cur]);
  }
  if (spec_.end_marker) out.emplace_back(kEndMarker);
  return out;
}

Words SyntheticLanguage::translate(std::span<const std::string> source) const {
  Words out;
  out.reserve(source.size());
  for (const auto& w : source) {
    auto it = dictionary_.find(w);
    if (it == dictionary_.end()) {
      throw InputError("word outside the task lexicon: " + w);
    }
    out.push_back(it->second);
  }
  if (spec_.reverse) std::reverse(out.begin(), out.end());
  return out;
}

bool SyntheticLanguage::is_grammatical(std::span<const std::string> source) const {
  std::size_t n = source.size();
  if (spec_.end_marker) {
    if (n == 0 || source[n - 1] != kEndMarker) return false;
    --n;
  }
  if (n < spec_.min_len || n > spec_.max_len) return false;
  std::size_t prev = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto it = word_index_.find(source[i]);
    if (it == word_index_.end()) return false;
    const std::size_t cur = it->second;
    if (i == 0) {
      if (!std::binary_search(starts_.begin(), starts_.end(), cur)) return false;
    } else if (!std::binary_search(successors_[prev].begin(),
                                   successors_[prev].end(), cur)) {
      return false;
    }
    prev = cur;
  }
  return true;
}

std::vector<ParallelPair> synth_task(std::uint64_t seed, std::size_t n,
                                     const SyntheticLanguage& language) {
  std::vector<ParallelPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = make_rng(seed, i);
    ParallelPair p;
    p.source = language.sample_source(rng);
    p.target = language.translate(p.source);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace secoco::noise
