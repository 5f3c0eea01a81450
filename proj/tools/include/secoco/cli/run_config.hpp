#ifndef SECOCO_CLI_RUN_CONFIG_HPP_
#define SECOCO_CLI_RUN_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "secoco/model.hpp"
#include "secoco/noise.hpp"
#include "secoco/training.hpp"

namespace secoco::cli {

struct DataConfig {
  std::size_t train_size = 5000;
  std::size_t valid_size = 500;
  std::size_t test_size = 500;
  std::size_t single_edit_size = 500;
  std::size_t vocab_max = 4000;
  std::string data_dir = "data";
};

struct InferenceConfig {
  int beam = 5;
  int max_iters = 5;
  float del_threshold = 0.5f;
};

struct EvalConfig {
  std::size_t latency_sentences = 100;
  std::size_t latency_warmup = 5;
  std::size_t worst_k = 0;  // aligned diff dump of the k lowest-BLEU sentences
};

// Every knob of the pipeline. One root seed feeds every subsystem through
// derived streams; the per-subsystem seed fields are overwritten from it.
struct RunConfig {
  std::uint64_t seed = 1;
  noise::TaskSpec task;
  noise::NoiseSpec noise;
  DataConfig data;
  model::ModelConfig model;
  training::TrainConfig train;
  InferenceConfig inference;
  EvalConfig eval;

  void resolve_seeds();
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

// Defaults, then the optional file, then dotted overrides such as
// "train.max_steps=100" (values parsed as JSON, else taken as strings).
// Unknown keys are rejected with ConfigError.
RunConfig load_run_config(const std::filesystem::path* file,
                          const std::vector<std::string>& overrides);

// Applies one "a.b.c=value" override to j; the path must already exist.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace secoco::cli

#endif  // SECOCO_CLI_RUN_CONFIG_HPP_
