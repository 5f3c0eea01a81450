#include "secoco/cli/run_config.hpp"

#include "secoco/corpus.hpp"
#include "secoco/rng.hpp"

namespace secoco::cli {

using nlohmann::json;

namespace {

json task_json(const noise::TaskSpec& t) {
  return {{"lexicon_size", t.lexicon_size}, {"branching", t.branching},
          {"num_starts", t.num_starts},     {"min_len", t.min_len},
          {"max_len", t.max_len},           {"reverse", t.reverse},
          {"end_marker", t.end_marker},     {"grammar_seed", t.grammar_seed}};
}

noise::TaskSpec task_from(const json& j) {
  noise::TaskSpec t;
  t.lexicon_size = j.at("lexicon_size");
  t.branching = j.at("branching");
  t.num_starts = j.at("num_starts");
  t.min_len = j.at("min_len");
  t.max_len = j.at("max_len");
  t.reverse = j.at("reverse");
  t.end_marker = j.at("end_marker");
  t.grammar_seed = j.at("grammar_seed");
  return t;
}

json noise_json(const noise::NoiseSpec& n) {
  return {{"p_delete", n.p_delete}, {"p_insert", n.p_insert}, {"p_repeat", n.p_repeat},
          {"p_typo", n.p_typo},     {"max_edits", n.max_edits}};
}

noise::NoiseSpec noise_from(const json& j) {
  noise::NoiseSpec n;
  n.p_delete = j.at("p_delete");
  n.p_insert = j.at("p_insert");
  n.p_repeat = j.at("p_repeat");
  n.p_typo = j.at("p_typo");
  n.max_edits = j.at("max_edits");
  return n;
}

// Keys of `value` must all appear in `schema`, recursively.
void check_keys(const json& value, const json& schema, const std::string& prefix) {
  if (!value.is_object()) return;
  for (auto it = value.begin(); it != value.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.is_object() || !schema.contains(it.key())) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    if (schema[it.key()].is_object()) check_keys(it.value(), schema[it.key()], key);
  }
}

}  // namespace

void RunConfig::resolve_seeds() {
  noise.seed = derive_seed(seed, "noise");
  train.seed = derive_seed(seed, "train");
}

void RunConfig::validate() const {
  task.validate();
  noise.validate();
  train.validate();
  if (data.train_size == 0) throw ConfigError("data.train_size must be > 0");
  if (data.vocab_max < textops::kNumSpecials + 1) throw ConfigError("data.vocab_max too small");
  if (inference.beam < 1) throw ConfigError("inference.beam must be >= 1");
  if (inference.max_iters < 1) throw ConfigError("inference.max_iters must be >= 1");
  if (!(inference.del_threshold > 0.0f && inference.del_threshold < 1.0f)) {
    throw ConfigError("inference.del_threshold must lie in (0, 1)");
  }
}

json to_json(const RunConfig& c) {
  json model = c.model;
  model.erase("src_vocab_size");
  model.erase("tgt_vocab_size");
  json train = c.train;
  train.erase("seed");
  return {{"seed", c.seed},
          {"task", task_json(c.task)},
          {"noise", noise_json(c.noise)},
          {"data",
           {{"train_size", c.data.train_size},
            {"valid_size", c.data.valid_size},
            {"test_size", c.data.test_size},
            {"single_edit_size", c.data.single_edit_size},
            {"vocab_max", c.data.vocab_max},
            {"data_dir", c.data.data_dir}}},
          {"model", model},
          {"train", train},
          {"inference",
           {{"beam", c.inference.beam},
            {"max_iters", c.inference.max_iters},
            {"del_threshold", c.inference.del_threshold}}},
          {"eval",
           {{"latency_sentences", c.eval.latency_sentences},
            {"latency_warmup", c.eval.latency_warmup},
            {"worst_k", c.eval.worst_k}}}};
}

RunConfig run_config_from_json(const json& given) {
  json j = to_json(RunConfig{});
  check_keys(given, j, "");
  j.merge_patch(given);
  RunConfig c;
  try {
    c.seed = j.at("seed");
    c.task = task_from(j.at("task"));
    c.noise = noise_from(j.at("noise"));
    const json& d = j.at("data");
    c.data.train_size = d.at("train_size");
    c.data.valid_size = d.at("valid_size");
    c.data.test_size = d.at("test_size");
    c.data.single_edit_size = d.at("single_edit_size");
    c.data.vocab_max = d.at("vocab_max");
    c.data.data_dir = d.at("data_dir");
    c.model = j.at("model").get<model::ModelConfig>();
    c.train = j.at("train").get<training::TrainConfig>();
    const json& inf = j.at("inference");
    c.inference.beam = inf.at("beam");
    c.inference.max_iters = inf.at("max_iters");
    c.inference.del_threshold = inf.at("del_threshold");
    const json& ev = j.at("eval");
    c.eval.latency_sentences = ev.at("latency_sentences");
    c.eval.latency_warmup = ev.at("latency_warmup");
    c.eval.worst_k = ev.at("worst_k");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  c.resolve_seeds();
  c.validate();
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!node->is_object() || !node->contains(part)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  *node = value;
}

RunConfig load_run_config(const std::filesystem::path* file,
                          const std::vector<std::string>& overrides) {
  json j = to_json(RunConfig{});
  if (file != nullptr) {
    const json given = read_json(*file);
    check_keys(given, j, "");
    j.merge_patch(given);
  }
  for (const auto& o : overrides) apply_override(j, o);
  return run_config_from_json(j);
}

}  // namespace secoco::cli
