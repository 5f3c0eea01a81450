#ifndef SECOCO_TRAINING_HPP_
#define SECOCO_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "secoco/common.hpp"
#include "secoco/corpus.hpp"
#include "secoco/editsup.hpp"
#include "secoco/model.hpp"
#include "secoco/sample.hpp"
#include "secoco/textops.hpp"

namespace secoco::training {

// secoco: noisy + clean sources, all three loss terms.
// base: clean sources only, translation loss only.
// base+synthetic: noisy + clean sources, translation loss only.
enum class TrainMode { kSecoco, kBase, kBaseSynthetic };

TrainMode parse_train_mode(const std::string& s);
std::string to_string(TrainMode mode);
inline bool uses_predictors(TrainMode mode) { return mode == TrainMode::kSecoco; }

struct TrainConfig {
  TrainMode mode = TrainMode::kSecoco;
  int batch_tokens = 2000;
  int max_steps = 5000;
  float peak_lr = 1e-3f;
  int warmup = 400;
  std::uint64_t seed = 1;
  int log_interval = 100;
  int eval_interval = 500;
  int checkpoint_interval = 500;  // multiple of log_interval
  std::string checkpoint_dir = "checkpoints";
  double clip_norm = 1.0;
  int queue_depth = 4;  // 0 builds batches on the training thread
  double clean_ratio = 1.0;  // clean identity samples per noisy sample
  int valid_subset = 200;    // validation sentences scored per evaluation

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct SampleStats {
  std::size_t noisy = 0;
  std::size_t clean = 0;
  std::size_t skipped = 0;  // longer than the model accepts
};

// Encodes corpus records into training samples for the given mode. The
// supervision round of each noisy sample is drawn once, from a stream of
// `seed`. Sentences with more than max_tokens tokens on either side are
// skipped and counted.
std::vector<Sample> build_samples(std::span<const CorpusRecord> records,
                                  const textops::Vocab& src_vocab,
                                  const textops::Vocab& tgt_vocab, const TrainConfig& config,
                                  std::size_t max_tokens, SampleStats* stats = nullptr);

// A sample's cost in the token budget: the padded width it adds.
std::size_t sample_tokens(const Sample& s);

// Length-bucketed batches of sample indices for one epoch. Samples of equal
// length are shuffled, then batches are filled greedily up to batch_tokens
// padded tokens and shuffled. Order depends only on (seed, epoch).
std::vector<std::vector<std::size_t>> make_batches(std::span<const Sample> samples,
                                                   int batch_tokens, std::uint64_t seed,
                                                   std::uint64_t epoch);

// Held-out data scored during training.
struct ValidSet {
  std::vector<TokenSeq> noisy;
  std::vector<Words> references;
  std::vector<editsup::EditTrace> gold;  // noisy -> clean
};

ValidSet build_valid_set(std::span<const CorpusRecord> records,
                         const textops::Vocab& src_vocab, std::size_t limit,
                         std::size_t max_tokens);

struct ValidMetrics {
  double bleu = 0.0;
  double deletion_f1 = 0.0;
  double insertion_accuracy = 0.0;
};

// Greedy BLEU on the noisy sources; edit metrics from the heads on the
// first gold round.
ValidMetrics validate(const model::SecocoModel& model, const ValidSet& valid,
                      const textops::Vocab& tgt_vocab, bool with_predictors);

struct TrainData {
  std::vector<Sample> train;
  ValidSet valid;
  textops::Vocab src_vocab;
  textops::Vocab tgt_vocab;
  nlohmann::json provenance;  // echoed into the log header and checkpoints
};

struct TrainHooks {
  // Called after every optimizer step; throwing aborts training, as a kill
  // would, leaving the last checkpoint in place.
  std::function<void(int step, const model::LossTerms& terms)> on_step;
};

struct TrainResult {
  int final_step = 0;
  double best_valid_bleu = -1.0;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::filesystem::path metrics_log;
};

// Joint training loop. Writes metrics.jsonl, last.ckpt and best.ckpt to
// checkpoint_dir. With `resume`, restores parameters, optimizer moments and
// the data cursor from that checkpoint, truncates the log to the restored
// step and continues to max_steps. Throws NumericError on a non-finite loss
// after dumping the batch next to the log.
TrainResult train(const TrainConfig& config, const model::ModelConfig& model_config,
                  const TrainData& data, const std::optional<std::filesystem::path>& resume = {},
                  const TrainHooks& hooks = {});

// Meta block stored in checkpoints written by `train`.
nlohmann::json vocab_meta(const textops::Vocab& src, const textops::Vocab& tgt);
// Throws InputError when a checkpoint's vocab differs from the given ones.
void check_vocab_meta(const nlohmann::json& meta, const textops::Vocab& src,
                      const textops::Vocab& tgt);

}  // namespace secoco::training

#endif  // SECOCO_TRAINING_HPP_
