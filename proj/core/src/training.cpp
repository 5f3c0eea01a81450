#include "secoco/training.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "secoco/adam.hpp"
#include "secoco/checkpoint.hpp"
#include "secoco/eval.hpp"
#include "secoco/inference.hpp"
#include "secoco/log.hpp"
#include "secoco/rng.hpp"

namespace secoco::training {

namespace fs = std::filesystem;
using nlohmann::json;

TrainMode parse_train_mode(const std::string& s) {
  if (s == "secoco") return TrainMode::kSecoco;
  if (s == "base") return TrainMode::kBase;
  if (s == "base+synthetic") return TrainMode::kBaseSynthetic;
  throw ConfigError("unknown training mode '" + s + "' (secoco|base|base+synthetic)");
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kSecoco: return "secoco";
    case TrainMode::kBase: return "base";
    case TrainMode::kBaseSynthetic: return "base+synthetic";
  }
  return "secoco";
}

void TrainConfig::validate() const {
  if (batch_tokens <= 0) throw ConfigError("batch_tokens must be > 0");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (warmup < 1) throw ConfigError("warmup must be >= 1");
  if (!(peak_lr > 0.0f)) throw ConfigError("peak_lr must be > 0");
  if (log_interval < 1 || eval_interval < 1 || checkpoint_interval < 1) {
    throw ConfigError("intervals must be >= 1");
  }
  if (checkpoint_interval % log_interval != 0) {
    throw ConfigError("checkpoint_interval must be a multiple of log_interval");
  }
  if (queue_depth < 0) throw ConfigError("queue_depth must be >= 0");
  if (clean_ratio < 0.0) throw ConfigError("clean_ratio must be >= 0");
  if (valid_subset < 0) throw ConfigError("valid_subset must be >= 0");
  if (checkpoint_dir.empty()) throw ConfigError("checkpoint_dir must be set");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"mode", to_string(c.mode)},
           {"batch_tokens", c.batch_tokens},
           {"max_steps", c.max_steps},
           {"peak_lr", c.peak_lr},
           {"warmup", c.warmup},
           {"seed", c.seed},
           {"log_interval", c.log_interval},
           {"eval_interval", c.eval_interval},
           {"checkpoint_interval", c.checkpoint_interval},
           {"checkpoint_dir", c.checkpoint_dir},
           {"clip_norm", c.clip_norm},
           {"queue_depth", c.queue_depth},
           {"clean_ratio", c.clean_ratio},
           {"valid_subset", c.valid_subset}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.mode = parse_train_mode(j.value("mode", to_string(d.mode)));
  c.batch_tokens = j.value("batch_tokens", d.batch_tokens);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.peak_lr = j.value("peak_lr", d.peak_lr);
  c.warmup = j.value("warmup", d.warmup);
  c.seed = j.value("seed", d.seed);
  c.log_interval = j.value("log_interval", d.log_interval);
  c.eval_interval = j.value("eval_interval", d.eval_interval);
  c.checkpoint_interval = j.value("checkpoint_interval", d.checkpoint_interval);
  c.checkpoint_dir = j.value("checkpoint_dir", d.checkpoint_dir);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.queue_depth = j.value("queue_depth", d.queue_depth);
  c.clean_ratio = j.value("clean_ratio", d.clean_ratio);
  c.valid_subset = j.value("valid_subset", d.valid_subset);
}

namespace {

Sample identity_sample(const TokenSeq& clean, const TokenSeq& target) {
  Sample s;
  s.noisy = clean;
  s.clean = clean;
  s.target = target;
  s.del_input = clean;
  s.del_mask.assign(clean.size(), 0);
  s.ins_input = clean;
  s.ins_labels.assign(clean.size() + 1, textops::kEmpty);
  return s;
}

json sample_to_json(const Sample& s) {
  return json{{"noisy", s.noisy},         {"clean", s.clean},
              {"target", s.target},       {"del_input", s.del_input},
              {"del_mask", editsup::mask_to_string(s.del_mask)},
              {"ins_input", s.ins_input}, {"ins_labels", s.ins_labels}};
}

}  // namespace

std::vector<Sample> build_samples(std::span<const CorpusRecord> records,
                                  const textops::Vocab& src_vocab,
                                  const textops::Vocab& tgt_vocab, const TrainConfig& config,
                                  std::size_t max_tokens, SampleStats* stats) {
  SampleStats local;
  std::vector<Sample> out;
  const bool noisy_data = config.mode != TrainMode::kBase;
  const std::uint64_t sup_seed = derive_seed(config.seed, "supervision");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.clean.size() > max_tokens || r.noisy.size() > max_tokens ||
        r.target.size() > max_tokens) {
      ++local.skipped;
      continue;
    }
    const TokenSeq clean = src_vocab.encode(r.clean);
    const TokenSeq target = tgt_vocab.encode(r.target);
    if (!noisy_data) {
      out.push_back(identity_sample(clean, target));
      ++local.clean;
      continue;
    }
    Sample s;
    s.noisy = src_vocab.encode(r.noisy);
    s.clean = clean;
    s.target = target;
    auto rng = make_rng(sup_seed, i);
    auto sup = editsup::sample_supervision(editsup::encode_trace(r.trace, src_vocab),
                                           std::span<const TokenId>(s.noisy), rng);
    s.del_input = std::move(sup.del_input);
    s.del_mask = std::move(sup.del_mask);
    s.ins_input = std::move(sup.ins_input);
    s.ins_labels = std::move(sup.ins_labels);
    out.push_back(std::move(s));
    ++local.noisy;
    const auto copies = static_cast<std::size_t>(std::floor(static_cast<double>(i + 1) * config.clean_ratio) -
                                                 std::floor(static_cast<double>(i) * config.clean_ratio));
    for (std::size_t c = 0; c < copies; ++c) {
      out.push_back(identity_sample(clean, target));
      ++local.clean;
    }
  }
  if (local.skipped > 0) {
    log::warn("skipped " + std::to_string(local.skipped) + " sentences longer than " +
              std::to_string(max_tokens) + " tokens");
  }
  if (stats != nullptr) *stats = local;
  return out;
}

std::size_t sample_tokens(const Sample& s) {
  // Encoder rows of every source this sample feeds, plus decoder rows.
  return std::max({s.noisy.size(), s.del_input.size(), s.ins_input.size()}) + 2 +
         s.target.size() + 1;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const Sample> samples,
                                                   int batch_tokens, std::uint64_t seed,
                                                   std::uint64_t epoch) {
  if (batch_tokens <= 0) throw ConfigError("batch_tokens must be > 0");
  auto rng = make_rng(derive_seed(seed, "batches"), epoch);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sample_tokens(samples[a]) < sample_tokens(samples[b]);
  });
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  std::size_t widest = 0;
  for (std::size_t idx : order) {
    const std::size_t w = std::max(widest, sample_tokens(samples[idx]));
    if (!cur.empty() && w * (cur.size() + 1) > static_cast<std::size_t>(batch_tokens)) {
      batches.push_back(std::move(cur));
      cur.clear();
      widest = sample_tokens(samples[idx]);
    } else {
      widest = w;
    }
    cur.push_back(idx);
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

ValidSet build_valid_set(std::span<const CorpusRecord> records,
                         const textops::Vocab& src_vocab, std::size_t limit,
                         std::size_t max_tokens) {
  ValidSet v;
  for (const auto& r : records) {
    if (v.noisy.size() >= limit) break;
    if (r.noisy.size() > max_tokens || r.clean.size() > max_tokens) continue;
    v.noisy.push_back(src_vocab.encode(r.noisy));
    v.references.push_back(r.target);
    v.gold.push_back(editsup::encode_trace(r.trace, src_vocab));
  }
  return v;
}

ValidMetrics validate(const model::SecocoModel& model, const ValidSet& valid,
                      const textops::Vocab& tgt_vocab, bool with_predictors) {
  ValidMetrics m;
  if (valid.noisy.empty()) return m;
  constexpr std::size_t kChunk = 32;
  std::vector<Words> hyps;
  for (std::size_t i = 0; i < valid.noisy.size(); i += kChunk) {
    const std::size_t n = std::min(kChunk, valid.noisy.size() - i);
    const auto out = inference::greedy_translate_batch(
        model, std::span<const TokenSeq>(valid.noisy).subspan(i, n));
    for (const auto& t : out) hyps.push_back(tgt_vocab.decode(t));
  }
  m.bleu = eval::bleu4(hyps, valid.references);
  if (!with_predictors) return m;
  const auto items = inference::predict_first_round(model, valid.noisy, valid.gold);
  const auto em = eval::edit_metrics(items);
  m.deletion_f1 = em.deletion.f1;
  m.insertion_accuracy = em.insertion_accuracy;
  return m;
}

json vocab_meta(const textops::Vocab& src, const textops::Vocab& tgt) {
  return json{{"src_vocab", src.tokens()}, {"tgt_vocab", tgt.tokens()}};
}

void check_vocab_meta(const json& meta, const textops::Vocab& src, const textops::Vocab& tgt) {
  if (!meta.contains("src_vocab") || !meta.contains("tgt_vocab")) {
    throw InputError("checkpoint does not record its vocabularies");
  }
  if (meta["src_vocab"].get<std::vector<std::string>>() != src.tokens()) {
    throw InputError("source vocabulary does not match the checkpoint");
  }
  if (meta["tgt_vocab"].get<std::vector<std::string>>() != tgt.tokens()) {
    throw InputError("target vocabulary does not match the checkpoint");
  }
}

namespace {

struct BatchItem {
  std::uint64_t epoch = 0;
  std::size_t cursor = 0;  // index of this batch within its epoch
  std::size_t epoch_batches = 0;
  std::vector<Sample> samples;
};

template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t depth) : depth_(depth) {}

  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < depth_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  bool pop(T& out) {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return false;
    out = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return true;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t depth_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

// Walks epochs of batches from a starting (epoch, cursor), either inline or
// on a producer thread feeding a bounded queue.
class BatchStream {
 public:
  BatchStream(const std::vector<Sample>& samples, const TrainConfig& config,
              std::uint64_t epoch, std::size_t cursor)
      : samples_(samples), config_(config), epoch_(epoch), cursor_(cursor) {
    if (config_.queue_depth > 0) {
      queue_ = std::make_unique<BoundedQueue<BatchItem>>(config_.queue_depth);
      worker_ = std::thread([this] {
        try {
          while (queue_->push(produce())) {
          }
        } catch (...) {
          error_ = std::current_exception();
          queue_->close();
        }
      });
    }
  }

  ~BatchStream() {
    if (queue_) {
      queue_->close();
      worker_.join();
    }
  }

  BatchItem next() {
    if (!queue_) return produce();
    BatchItem item;
    if (!queue_->pop(item)) {
      if (error_) std::rethrow_exception(error_);
      throw ContractError("batch stream closed");
    }
    return item;
  }

 private:
  BatchItem produce() {
    if (!have_epoch_ || cursor_ >= batches_.size()) {
      if (have_epoch_) {
        ++epoch_;
        cursor_ = 0;
      }
      batches_ = make_batches(samples_, config_.batch_tokens, config_.seed, epoch_);
      have_epoch_ = true;
      if (cursor_ >= batches_.size()) {
        ++epoch_;
        cursor_ = 0;
        batches_ = make_batches(samples_, config_.batch_tokens, config_.seed, epoch_);
      }
    }
    BatchItem item;
    item.epoch = epoch_;
    item.cursor = cursor_;
    item.epoch_batches = batches_.size();
    for (std::size_t idx : batches_[cursor_]) item.samples.push_back(samples_[idx]);
    ++cursor_;
    return item;
  }

  const std::vector<Sample>& samples_;
  const TrainConfig& config_;
  std::uint64_t epoch_;
  std::size_t cursor_;
  bool have_epoch_ = false;
  std::vector<std::vector<std::size_t>> batches_;
  std::unique_ptr<BoundedQueue<BatchItem>> queue_;
  std::thread worker_;
  std::exception_ptr error_;
};

std::map<std::string, numerics::Tensor> adam_extras(const numerics::ParameterSet& params,
                                                    const numerics::AdamState& adam) {
  std::map<std::string, numerics::Tensor> extra;
  const auto& names = params.names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    extra.emplace("adam.m." + names[i], adam.m[i]);
    extra.emplace("adam.v." + names[i], adam.v[i]);
  }
  return extra;
}

void restore_adam(const numerics::ParameterSet& params,
                  const std::map<std::string, numerics::Tensor>& extra,
                  numerics::AdamState& adam) {
  const auto& names = params.names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto m = extra.find("adam.m." + names[i]);
    const auto v = extra.find("adam.v." + names[i]);
    if (m == extra.end() || v == extra.end()) {
      throw InputError("checkpoint lacks optimizer state for " + names[i]);
    }
    if (!m->second.same_shape(adam.m[i]) || !v->second.same_shape(adam.v[i])) {
      throw InputError("optimizer state shape mismatch for " + names[i]);
    }
    adam.m[i] = m->second;
    adam.v[i] = v->second;
  }
}

std::vector<std::string> read_log_prefix(const fs::path& path, int max_step) {
  std::vector<std::string> kept;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;  // torn final line after a kill
    if (j.contains("step") && j["step"].get<int>() > max_step) continue;
    kept.push_back(line);
  }
  return kept;
}

struct Accum {
  double loss = 0, translation = 0, deletion = 0, insertion = 0;
  int n = 0;
  void add(const model::LossTerms& t) {
    loss += t.value;
    translation += t.translation;
    deletion += t.deletion;
    insertion += t.insertion;
    ++n;
  }
};

}  // namespace

TrainResult train(const TrainConfig& config, const model::ModelConfig& model_config,
                  const TrainData& data, const std::optional<fs::path>& resume,
                  const TrainHooks& hooks) {
  config.validate();
  model_config.validate();
  if (data.train.empty()) throw InputError("no training samples");
  if (static_cast<std::size_t>(model_config.src_vocab_size) != data.src_vocab.size() ||
      static_cast<std::size_t>(model_config.tgt_vocab_size) != data.tgt_vocab.size()) {
    throw ConfigError("model vocab sizes do not match the data vocabularies");
  }
  const fs::path dir = config.checkpoint_dir;
  fs::create_directories(dir);
  TrainResult result;
  result.metrics_log = dir / "metrics.jsonl";
  result.last_checkpoint = dir / "last.ckpt";
  result.best_checkpoint = dir / "best.ckpt";
  const bool predictors = uses_predictors(config.mode);

  model::SecocoModel model(model_config, derive_seed(config.seed, "init"));
  numerics::AdamState adam(model.params(),
                           numerics::AdamConfig{config.peak_lr, 0.9f, 0.98f, 1e-8f});
  int step = 0;
  std::uint64_t epoch = 0;
  std::size_t cursor = 0;
  double best = -1.0;

  // Output paths are left out so identical runs write identical logs.
  json logged_config = config;
  logged_config.erase("checkpoint_dir");
  const json header = {{"header",
                        {{"train", logged_config},
                         {"model", model_config},
                         {"provenance", data.provenance}}}};
  std::vector<std::string> log_lines;
  if (resume) {
    auto ck = model::load_checkpoint(*resume);
    if (!(ck.model->config() == model_config)) {
      throw ConfigError("resume checkpoint has a different model config");
    }
    check_vocab_meta(ck.meta, data.src_vocab, data.tgt_vocab);
    if (ck.meta.value("mode", std::string()) != to_string(config.mode)) {
      throw ConfigError("resume checkpoint was trained in another mode");
    }
    model.copy_from(*ck.model);
    restore_adam(model.params(), ck.extra, adam);
    step = ck.meta.at("step").get<int>();
    epoch = ck.meta.at("epoch").get<std::uint64_t>();
    cursor = ck.meta.at("cursor").get<std::size_t>();
    best = ck.meta.value("best_valid_bleu", -1.0);
    adam.step = ck.meta.at("adam_step").get<std::int64_t>();
    log_lines = read_log_prefix(result.metrics_log, step);
    log::info("resumed from " + resume->string() + " at step " + std::to_string(step));
  }
  if (log_lines.empty()) log_lines.push_back(header.dump());
  {
    std::ofstream out(result.metrics_log, std::ios::trunc);
    for (const auto& l : log_lines) out << l << '\n';
    if (!out) throw InputError("cannot write " + result.metrics_log.string());
  }
  std::ofstream metrics(result.metrics_log, std::ios::app);

  auto meta_for = [&](int at_step) {
    json meta = vocab_meta(data.src_vocab, data.tgt_vocab);
    meta["step"] = at_step;
    meta["epoch"] = epoch;
    meta["cursor"] = cursor;
    meta["adam_step"] = adam.step;
    meta["best_valid_bleu"] = best;
    meta["mode"] = to_string(config.mode);
    meta["train"] = config;
    meta["provenance"] = data.provenance;
    return meta;
  };

  BatchStream stream(data.train, config, epoch, cursor);
  Accum acc;
  const std::uint64_t dropout_seed = derive_seed(config.seed, "dropout");
  while (step < config.max_steps) {
    BatchItem item = stream.next();
    auto drop_rng = make_rng(dropout_seed, static_cast<std::uint64_t>(step) + 1);
    model.params().zero_grad();
    const model::LossTerms terms = model.joint_loss(
        item.samples, model::LossOptions{predictors}, model::ForwardContext{true, &drop_rng});
    if (!std::isfinite(terms.value)) {
      json dump = {{"step", step + 1}, {"epoch", item.epoch}, {"cursor", item.cursor},
                   {"translation", terms.translation}, {"deletion", terms.deletion},
                   {"insertion", terms.insertion}, {"samples", json::array()}};
      for (const auto& s : item.samples) dump["samples"].push_back(sample_to_json(s));
      const fs::path p = dir / ("nan_batch_step" + std::to_string(step + 1) + ".json");
      write_json(p, dump);
      throw NumericError("non-finite loss at step " + std::to_string(step + 1) +
                         "; batch dumped to " + p.string());
    }
    numerics::backward(terms.total);
    numerics::clip_grad_norm(model.params(), config.clip_norm);
    const float lr = numerics::inverse_sqrt_lr(config.peak_lr, step + 1, config.warmup);
    numerics::adam_step(model.params(), adam, lr);
    ++step;
    epoch = item.epoch;
    cursor = item.cursor + 1;
    if (cursor >= item.epoch_batches) {
      ++epoch;
      cursor = 0;
    }
    acc.add(terms);

    if (step % config.log_interval == 0 || step == config.max_steps) {
      json line = {{"step", step}, {"loss", acc.loss / acc.n},
                   {"translation", acc.translation / acc.n}, {"lr", lr}};
      if (predictors) {
        line["deletion"] = acc.deletion / acc.n;
        line["insertion"] = acc.insertion / acc.n;
      }
      metrics << line.dump() << '\n' << std::flush;
      log::info("step " + std::to_string(step) + " loss " + std::to_string(acc.loss / acc.n));
      acc = Accum{};
    }
    if (step % config.eval_interval == 0 || step == config.max_steps) {
      const ValidMetrics vm = validate(model, data.valid, data.tgt_vocab, predictors);
      json line = {{"step", step}, {"valid_bleu", vm.bleu}};
      if (predictors) {
        line["deletion_f1"] = vm.deletion_f1;
        line["insertion_accuracy"] = vm.insertion_accuracy;
      }
      metrics << line.dump() << '\n' << std::flush;
      log::info("step " + std::to_string(step) + " valid_bleu " + std::to_string(vm.bleu));
      if (vm.bleu > best) {
        best = vm.bleu;
        model::save_checkpoint(result.best_checkpoint, model, meta_for(step));
      }
    }
    if (step % config.checkpoint_interval == 0 || step == config.max_steps) {
      model::save_checkpoint(result.last_checkpoint, model, meta_for(step),
                             adam_extras(model.params(), adam));
    }
    if (hooks.on_step) hooks.on_step(step, terms);
  }
  if (!fs::exists(result.best_checkpoint)) {
    model::save_checkpoint(result.best_checkpoint, model, meta_for(step));
  }
  result.final_step = step;
  result.best_valid_bleu = best;
  return result;
}

}  // namespace secoco::training
