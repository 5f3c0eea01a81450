#include "secoco/textops.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace secoco::textops {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

}  // namespace

TokenizeMode parse_tokenize_mode(std::string_view name) {
  if (name == "whitespace") return TokenizeMode::kWhitespace;
  if (name == "char") return TokenizeMode::kChar;
  throw ConfigError("unknown tokenize mode: " + std::string(name));
}

std::string_view to_string(TokenizeMode mode) {
  return mode == TokenizeMode::kChar ? "char" : "whitespace";
}

std::vector<std::string> split_code_points(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = utf8_length(static_cast<unsigned char>(text[i]));
    bool valid = i + len <= text.size();
    for (std::size_t k = 1; valid && k < len; ++k) {
      valid = (static_cast<unsigned char>(text[i + k]) >> 6) == 0x2;
    }
    if (!valid) len = 1;
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::string normalize(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

Words tokenize(std::string_view text, TokenizeMode mode) {
  Words out;
  const std::string norm = normalize(text);
  if (mode == TokenizeMode::kWhitespace) {
    std::size_t start = 0;
    while (start < norm.size()) {
      std::size_t end = norm.find(' ', start);
      if (end == std::string::npos) end = norm.size();
      out.push_back(norm.substr(start, end - start));
      start = end + 1;
    }
    return out;
  }
  for (auto& cp : split_code_points(norm)) {
    if (cp == " ") {
      out.emplace_back(kSpaceMarker);
    } else {
      out.push_back(std::move(cp));
    }
  }
  return out;
}

std::string detokenize(std::span<const std::string> words, TokenizeMode mode) {
  std::string out;
  if (mode == TokenizeMode::kWhitespace) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i > 0) out.push_back(' ');
      out += words[i];
    }
    return out;
  }
  for (const auto& w : words) out += (w == kSpaceMarker) ? " " : w;
  return out;
}

bool is_special(std::string_view surface) {
  return std::find(std::begin(kSpecialSurfaces), std::end(kSpecialSurfaces),
                   surface) != std::end(kSpecialSurfaces);
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> regular_tokens) {
  tokens_.reserve(kNumSpecials + regular_tokens.size());
  for (auto s : kSpecialSurfaces) tokens_.emplace_back(s);
  for (auto& t : regular_tokens) {
    if (is_special(t)) {
      throw ConfigError("special surface listed as a regular token: " + t);
    }
    tokens_.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("duplicate vocabulary entry: " + tokens_[i]);
    }
  }
}

TokenId Vocab::lookup(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view surface) const {
  return index_.count(std::string(surface)) > 0;
}

const std::string& Vocab::surface(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSeq Vocab::encode(std::span<const std::string> words) const {
  TokenSeq out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(lookup(w));
  return out;
}

Words Vocab::decode(std::span<const TokenId> ids) const {
  Words out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id == kPad || id == kBos || id == kEos || id == kEmpty) continue;
    out.push_back(surface(id));
  }
  return out;
}

std::size_t Vocab::insertion_class(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= size()) {
    throw ContractError("token id out of range: " + std::to_string(id));
  }
  return textops::insertion_class(id, size());
}

TokenId Vocab::from_insertion_class(std::size_t cls) const {
  if (cls >= size()) {
    throw ContractError("insertion class out of range: " + std::to_string(cls));
  }
  return textops::from_insertion_class(cls, size());
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write vocab file: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw InputError("failed writing vocab file: " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read vocab file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < kNumSpecials) {
    throw InputError("vocab file lacks the special tokens: " + path.string());
  }
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (lines[i] != kSpecialSurfaces[i]) {
      throw InputError("vocab file has wrong special at line " +
                       std::to_string(i) + ": " + path.string());
    }
  }
  return Vocab(std::vector<std::string>(lines.begin() + kNumSpecials,
                                        lines.end()));
}

Vocab build_vocab(std::span<const Words> corpus, std::size_t max_size) {
  if (max_size < kNumSpecials) {
    throw ConfigError("vocab max_size " + std::to_string(max_size) +
                      " is smaller than the special token count");
  }
  if (corpus.empty()) throw InputError("cannot build a vocab from no text");
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus) {
    for (const auto& w : sentence) {
      if (!is_special(w)) ++counts[w];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - kNumSpecials);
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
  return Vocab(std::move(tokens));
}

}  // namespace secoco::textops
