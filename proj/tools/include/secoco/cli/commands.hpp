#ifndef SECOCO_CLI_COMMANDS_HPP_
#define SECOCO_CLI_COMMANDS_HPP_

#include <filesystem>
#include <memory>
#include <span>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "secoco/cli/run_config.hpp"
#include "secoco/corpus.hpp"
#include "secoco/eval.hpp"
#include "secoco/model.hpp"
#include "secoco/noise.hpp"
#include "secoco/textops.hpp"
#include "secoco/training.hpp"

namespace secoco::cli {

namespace fs = std::filesystem;

// Split files written by cmd_synth inside the data directory.
inline constexpr const char* kTrainFile = "train.jsonl";
inline constexpr const char* kValidFile = "valid.jsonl";
inline constexpr const char* kTestFile = "test.jsonl";
inline constexpr const char* kSingleEditFile = "test_single.jsonl";
inline constexpr const char* kSrcVocabFile = "src.vocab";
inline constexpr const char* kTgtVocabFile = "tgt.vocab";
inline constexpr const char* kStatsFile = "stats.json";

struct SynthResult {
  std::vector<std::pair<std::string, noise::NoiseStats>> splits;
  std::size_t src_vocab_size = 0;
  std::size_t tgt_vocab_size = 0;
};

nlohmann::json to_json(const noise::NoiseStats& s);

// Writes the train/valid/test splits, the single-edit test split, both
// vocabularies and stats.json to out_dir; prints the noise statistics.
SynthResult cmd_synth(const RunConfig& config, const fs::path& out_dir, std::ostream& out);

// Trains from the splits in data_dir into ckpt_dir.
training::TrainResult cmd_train(const RunConfig& config, const fs::path& data_dir,
                                const fs::path& ckpt_dir,
                                const std::optional<fs::path>& resume, std::ostream& out,
                                const training::TrainHooks& hooks = {});

enum class DecodeMode { kE2e, kEdit };
DecodeMode parse_decode_mode(const std::string& s);

struct TranslateOptions {
  fs::path checkpoint;
  fs::path input;             // noisy source, one sentence per line
  std::optional<fs::path> output;  // stdout when absent
  std::optional<fs::path> vocab_dir;  // checked against the checkpoint when set
  DecodeMode mode = DecodeMode::kEdit;
  bool show_edits = false;  // <output>.edits, or indented lines on stdout
};

void cmd_translate(const RunConfig& config, const TranslateOptions& options, std::ostream& out);

// A checkpoint with the vocabularies it embeds.
struct ModelBundle {
  std::unique_ptr<model::SecocoModel> model;
  textops::Vocab src_vocab;
  textops::Vocab tgt_vocab;
  nlohmann::json meta;
};

ModelBundle load_bundle(const fs::path& checkpoint);

// Decodes every noisy source of `test` in one mode and scores it. Edit mode
// adds iteration statistics and, from the gold traces, head metrics.
eval::ModeReport evaluate_mode(const ModelBundle& bundle, DecodeMode mode,
                               std::span<const CorpusRecord> test, const RunConfig& config,
                               bool latency, std::vector<Words>* hypotheses = nullptr);

struct EvalOptions {
  std::optional<fs::path> checkpoint;       // Secoco model: e2e and edit blocks
  std::optional<fs::path> base_checkpoint;  // plain model: base block
  std::optional<fs::path> hypotheses;       // score a hypothesis file instead
  fs::path test;                            // JSONL split with references
  std::optional<fs::path> output;           // report path; stdout when absent
  bool latency = true;
};

nlohmann::json cmd_eval(const RunConfig& config, const EvalOptions& options, std::ostream& out);

// Parses argv and dispatches. Exit codes: 0 success, 1 bad input or config,
// 2 usage error, 3 non-finite training loss.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace secoco::cli

#endif  // SECOCO_CLI_COMMANDS_HPP_
