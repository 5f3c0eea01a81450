#ifndef SECOCO_NOISE_HPP_
#define SECOCO_NOISE_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "secoco/common.hpp"
#include "secoco/editsup.hpp"

namespace secoco::noise {

struct NoiseSpec {
  double p_delete = 0.1;  // per clean position
  double p_insert = 0.1;  // per boundary
  double p_repeat = 0.1;  // per surviving position
  double p_typo = 0.05;   // per surviving token, adjacent-character swap
  std::size_t max_edits = 8;
  std::uint64_t seed = 1;

  void validate() const;
  bool is_noop() const {
    return p_delete == 0 && p_insert == 0 && p_repeat == 0 && p_typo == 0;
  }
};

struct NoisyPair {
  Words clean;
  Words noisy;
  editsup::NoiseRecord record;
  editsup::WordEditTrace trace;  // noisy -> clean
};

// Left to right over the clean sentence: boundary 0 insertion, then per
// position a deletion draw, else a typo draw, else keep (and maybe repeat in
// place), then the insertion draw for the boundary after it. Stops adding
// edits once max_edits is reached. Inserted tokens are drawn uniformly from
// insertion_pool.
NoisyPair inject_noise(std::span<const std::string> clean, const NoiseSpec& spec,
                       std::mt19937_64& rng,
                       std::span<const std::string> insertion_pool);

enum class EditKind { kDelete, kInsert, kRepeat, kTypo };
std::string_view to_string(EditKind kind);

// Exactly one atomic edit of the requested kind at a uniformly drawn site.
// Returns nullopt when the sentence admits no such edit (a typo on a token
// with no swappable characters, or deleting the only token).
std::optional<NoisyPair> inject_single_edit(
    std::span<const std::string> clean, EditKind kind, std::mt19937_64& rng,
    std::span<const std::string> insertion_pool);

// Swaps one adjacent pair of distinct code points.
std::optional<std::string> make_typo(const std::string& word, std::mt19937_64& rng);

struct NoiseStats {
  std::size_t sentences = 0;
  std::size_t clean_tokens = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t repeats = 0;
  std::size_t typos = 0;
  std::size_t unchanged = 0;  // sentences with noisy == clean
  std::size_t rounds = 0;

  void add(const NoisyPair& pair);
  double deletion_rate() const {
    return clean_tokens ? static_cast<double>(deletions) / clean_tokens : 0.0;
  }
};

// Desk-scale stand-in for a parallel corpus. Sources come from a random
// bigram grammar over pseudo-words so that noise is detectable from context;
// targets are a one-to-one dictionary image, optionally reversed.
struct TaskSpec {
  std::size_t lexicon_size = 40;
  std::size_t branching = 2;   // successors per word
  std::size_t num_starts = 6;  // words that may open a sentence
  std::size_t min_len = 4;     // words, excluding the end marker
  std::size_t max_len = 9;
  bool reverse = true;
  bool end_marker = true;
  std::uint64_t grammar_seed = 7;

  void validate() const;
};

inline constexpr std::string_view kEndMarker = ".";

class SyntheticLanguage {
 public:
  explicit SyntheticLanguage(const TaskSpec& spec);

  Words sample_source(std::mt19937_64& rng) const;
  // Dictionary substitution composed with optional reversal. Throws
  // InputError on a word outside the lexicon.
  Words translate(std::span<const std::string> source) const;
  bool is_grammatical(std::span<const std::string> source) const;

  // Source words, plus the end marker when enabled. This is the noise
  // insertion pool.
  const std::vector<std::string>& source_lexicon() const { return source_lexicon_; }
  const std::map<std::string, std::string>& dictionary() const { return dictionary_; }
  const TaskSpec& spec() const { return spec_; }

 private:
  TaskSpec spec_;
  std::vector<std::string> words_;
  std::vector<std::string> source_lexicon_;
  std::vector<std::vector<std::size_t>> successors_;
  std::vector<std::size_t> starts_;
  std::map<std::string, std::string> dictionary_;
  std::map<std::string, std::size_t> word_index_;
};

struct ParallelPair {
  Words source;
  Words target;
};

// Sentence i draws from its own stream derived from (seed, i), so corpora
// are reproducible and splittable.
std::vector<ParallelPair> synth_task(std::uint64_t seed, std::size_t n,
                                     const SyntheticLanguage& language);

}  // namespace secoco::noise

#endif  // SECOCO_NOISE_HPP_
