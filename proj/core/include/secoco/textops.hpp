#ifndef SECOCO_TEXTOPS_HPP_
#define SECOCO_TEXTOPS_HPP_

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "secoco/common.hpp"

namespace secoco::textops {

enum class TokenizeMode { kWhitespace, kChar };

TokenizeMode parse_tokenize_mode(std::string_view name);
std::string_view to_string(TokenizeMode mode);

// Marker used for a whitespace run in char mode.
inline constexpr std::string_view kSpaceMarker = "\xE2\x96\x81";  // U+2581

// Splits UTF-8 text into code points. Bytes that do not start a valid
// sequence are emitted as single-byte units.
std::vector<std::string> split_code_points(std::string_view text);

// Collapses whitespace runs to one ASCII space and trims both ends.
std::string normalize(std::string_view text);

Words tokenize(std::string_view text, TokenizeMode mode);
std::string detokenize(std::span<const std::string> words, TokenizeMode mode);

// Fixed special ids. Files always list them first in this order.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kEmpty = 4;
inline constexpr std::size_t kNumSpecials = 5;

inline constexpr std::string_view kSpecialSurfaces[kNumSpecials] = {
    "<pad>", "<s>", "</s>", "<unk>", "<empty>"};

bool is_special(std::string_view surface);

// Insertion-head class of a vocab id for a vocabulary of vocab_size entries:
// EMPTY maps to the last class, every other id keeps its relative order.
inline std::size_t insertion_class(TokenId id, std::size_t vocab_size) {
  if (id == kEmpty) return vocab_size - 1;
  return static_cast<std::size_t>(id < kEmpty ? id : id - 1);
}
inline TokenId from_insertion_class(std::size_t cls, std::size_t vocab_size) {
  if (cls == vocab_size - 1) return kEmpty;
  return static_cast<TokenId>(cls < static_cast<std::size_t>(kEmpty) ? cls : cls + 1);
}

// Immutable token inventory. Ids are dense in [0, size()).
//
// The insertion head scores |V|+1 classes where |V| = size() - 1 counts every
// entry except EMPTY, and EMPTY takes the last class index |V|. Vocab ids and
// head classes are related by insertion_class()/from_insertion_class().
class Vocab {
 public:
  Vocab();  // specials only
  explicit Vocab(std::vector<std::string> regular_tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t num_regular() const { return tokens_.size() - kNumSpecials; }

  // Id of the surface form, or kUnk when absent.
  TokenId lookup(std::string_view surface) const;
  bool contains(std::string_view surface) const;
  const std::string& surface(TokenId id) const;

  TokenSeq encode(std::span<const std::string> words) const;
  // Specials other than UNK are dropped from the output.
  Words decode(std::span<const TokenId> ids) const;

  std::size_t num_insertion_classes() const { return size(); }
  std::size_t insertion_class(TokenId id) const;
  TokenId from_insertion_class(std::size_t cls) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Tokens ordered by descending frequency, ties broken lexicographically
// (byte order). Keeps at most max_size entries including the specials.
Vocab build_vocab(std::span<const Words> corpus, std::size_t max_size);

}  // namespace secoco::textops

#endif  // SECOCO_TEXTOPS_HPP_
