#ifndef SECOCO_TESTS_MICRO_MODEL_HPP_
#define SECOCO_TESTS_MICRO_MODEL_HPP_

#include <cstdint>
#include <random>
#include <vector>

#include "secoco/model.hpp"
#include "secoco/sample.hpp"
#include "secoco/textops.hpp"

namespace secoco::testing {

// A model small enough for finite differences.
constexpr int kSrcVocab = 14;
constexpr int kTgtVocab = 11;

inline model::ModelConfig micro_config() {
  model::ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.d_ffn = 16;
  c.max_len = 16;
  c.src_vocab_size = kSrcVocab;
  c.tgt_vocab_size = kTgtVocab;
  c.dropout = 0.0f;
  return c;
}

inline TokenSeq random_seq(std::mt19937_64& rng, int vocab, int min_len, int max_len) {
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<int> tok(static_cast<int>(textops::kNumSpecials), vocab - 1);
  TokenSeq s(static_cast<std::size_t>(len(rng)));
  for (auto& t : s) t = tok(rng);
  return s;
}

inline Sample random_sample(std::mt19937_64& rng) {
  Sample s;
  s.noisy = random_seq(rng, kSrcVocab, 1, 6);
  s.clean = random_seq(rng, kSrcVocab, 1, 6);
  s.target = random_seq(rng, kTgtVocab, 1, 6);
  s.del_input = (rng() % 2) ? s.noisy : random_seq(rng, kSrcVocab, 1, 6);
  for (std::size_t i = 0; i < s.del_input.size(); ++i) s.del_mask.push_back(rng() % 3 == 0);
  s.ins_input = random_seq(rng, kSrcVocab, 0, 6);
  std::uniform_int_distribution<int> lab(static_cast<int>(textops::kNumSpecials), kSrcVocab - 1);
  for (std::size_t j = 0; j <= s.ins_input.size(); ++j) {
    s.ins_labels.push_back(rng() % 2 ? textops::kEmpty : lab(rng));
  }
  return s;
}

inline std::vector<Sample> random_batch(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) out.push_back(random_sample(rng));
  return out;
}

}  // namespace secoco::testing

#endif  // SECOCO_TESTS_MICRO_MODEL_HPP_
