#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "secoco/checkpoint.hpp"
#include "secoco/common.hpp"
#include "secoco/corpus.hpp"
#include "secoco/noise.hpp"
#include "secoco/rng.hpp"
#include "secoco/textops.hpp"
#include "secoco/training.hpp"
#include "support.hpp"

using namespace secoco;
using namespace secoco::training;
using nlohmann::json;
using secoco::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<CorpusRecord> make_records(std::size_t n, std::uint64_t seed) {
  const noise::SyntheticLanguage lang(noise::TaskSpec{});
  const auto pairs = noise::synth_task(seed, n, lang);
  noise::NoiseSpec spec;
  std::vector<CorpusRecord> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto rng = make_rng(derive_seed(seed, "noise"), i);
    const auto noisy = noise::inject_noise(pairs[i].source, spec, rng, lang.source_lexicon());
    out.push_back({noisy.clean, noisy.noisy, pairs[i].target, noisy.trace, ""});
  }
  return out;
}

struct Fixture {
  TrainData data;
  model::ModelConfig model;
};

Fixture make_fixture(TrainMode mode, std::size_t n = 120) {
  const auto train = make_records(n, 3);
  const auto valid = make_records(20, 4);
  std::vector<Words> src, tgt;
  for (const auto& r : train) {
    src.push_back(r.clean);
    src.push_back(r.noisy);
    tgt.push_back(r.target);
  }
  Fixture f;
  f.data.src_vocab = textops::build_vocab(src, 1000);
  f.data.tgt_vocab = textops::build_vocab(tgt, 1000);
  f.model.d_model = 16;
  f.model.n_heads = 2;
  f.model.n_enc_layers = 1;
  f.model.n_dec_layers = 1;
  f.model.d_ffn = 32;
  f.model.max_len = 32;
  f.model.dropout = 0.1f;
  f.model.src_vocab_size = static_cast<int>(f.data.src_vocab.size());
  f.model.tgt_vocab_size = static_cast<int>(f.data.tgt_vocab.size());
  TrainConfig c;
  c.mode = mode;
  f.data.train = build_samples(train, f.data.src_vocab, f.data.tgt_vocab, c, 30);
  f.data.valid = build_valid_set(valid, f.data.src_vocab, 10, 30);
  f.data.provenance = {{"test", "fixture"}};
  return f;
}

TrainConfig small_config(TrainMode mode, const fs::path& dir) {
  TrainConfig c;
  c.mode = mode;
  c.batch_tokens = 300;
  c.max_steps = 40;
  c.warmup = 10;
  c.log_interval = 5;
  c.eval_interval = 20;
  c.checkpoint_interval = 10;
  c.checkpoint_dir = dir.string();
  c.valid_subset = 10;
  return c;
}

std::vector<json> read_log(const fs::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_params(const model::SecocoModel& a, const model::SecocoModel& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    if (!(a.params().vars()[i]->value == b.params().vars()[i]->value)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("train mode names round trip") {
  for (auto m : {TrainMode::kSecoco, TrainMode::kBase, TrainMode::kBaseSynthetic}) {
    CHECK(parse_train_mode(to_string(m)) == m);
  }
  CHECK(to_string(TrainMode::kBaseSynthetic) == "base+synthetic");
  CHECK_THROWS_AS(parse_train_mode("noisy"), ConfigError);
  CHECK(uses_predictors(TrainMode::kSecoco));
  CHECK_FALSE(uses_predictors(TrainMode::kBase));
  CHECK_FALSE(uses_predictors(TrainMode::kBaseSynthetic));
}

TEST_CASE("train config validation and JSON") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  json j = c;
  CHECK(j.get<TrainConfig>() == c);
  CHECK(j.at("mode") == "secoco");
  auto bad = [](auto mutate) {
    TrainConfig t;
    mutate(t);
    CHECK_THROWS_AS(t.validate(), ConfigError);
  };
  bad([](TrainConfig& t) { t.batch_tokens = 0; });
  bad([](TrainConfig& t) { t.max_steps = 0; });
  bad([](TrainConfig& t) { t.peak_lr = 0.0f; });
  bad([](TrainConfig& t) { t.warmup = 0; });
  bad([](TrainConfig& t) { t.checkpoint_interval = 150; });
  bad([](TrainConfig& t) { t.clean_ratio = -1.0; });
  bad([](TrainConfig& t) { t.checkpoint_dir.clear(); });
  json unknown = j;
  unknown["mode"] = "other";
  CHECK_THROWS_AS(unknown.get<TrainConfig>(), ConfigError);
}

TEST_CASE("samples per mode") {
  const auto records = make_records(50, 9);
  std::vector<Words> src, tgt;
  for (const auto& r : records) {
    src.push_back(r.clean);
    src.push_back(r.noisy);
    tgt.push_back(r.target);
  }
  const auto sv = textops::build_vocab(src, 1000);
  const auto tv = textops::build_vocab(tgt, 1000);

  TrainConfig c;
  c.mode = TrainMode::kBase;
  SampleStats stats;
  const auto base = build_samples(records, sv, tv, c, 100, &stats);
  CHECK(base.size() == records.size());
  CHECK(stats.noisy == 0);
  CHECK(stats.clean == records.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(base[i].noisy == sv.encode(records[i].clean));
    CHECK(base[i].del_mask == editsup::DelMask(base[i].noisy.size(), 0));
  }

  c.mode = TrainMode::kSecoco;
  const auto mixed = build_samples(records, sv, tv, c, 100, &stats);
  CHECK(mixed.size() == 2 * records.size());
  CHECK(stats.noisy == records.size());
  CHECK(stats.clean == records.size());
  std::size_t noisy_seen = 0;
  for (const auto& s : mixed) {
    CHECK(s.del_mask.size() == s.del_input.size());
    CHECK(s.ins_labels.size() == s.ins_input.size() + 1);
    if (s.noisy != s.clean) ++noisy_seen;
    // Applying the sampled round to its inputs stays consistent with the clean side.
    if (s.noisy == s.clean) {
      CHECK(std::all_of(s.del_mask.begin(), s.del_mask.end(), [](auto v) { return v == 0; }));
      CHECK(std::all_of(s.ins_labels.begin(), s.ins_labels.end(),
                        [](TokenId t) { return t == textops::kEmpty; }));
    }
  }
  CHECK(noisy_seen > 0);

  c.mode = TrainMode::kBaseSynthetic;
  CHECK(build_samples(records, sv, tv, c, 100).size() == 2 * records.size());

  c.mode = TrainMode::kSecoco;
  c.clean_ratio = 0.5;
  build_samples(records, sv, tv, c, 100, &stats);
  CHECK(stats.clean == records.size() / 2);
  c.clean_ratio = 0.0;
  build_samples(records, sv, tv, c, 100, &stats);
  CHECK(stats.clean == 0);

  c.clean_ratio = 1.0;
  build_samples(records, sv, tv, c, 6, &stats);
  CHECK(stats.skipped > 0);
  CHECK(stats.noisy + stats.skipped == records.size());

  CHECK(build_samples(records, sv, tv, c, 100) == build_samples(records, sv, tv, c, 100));
}

TEST_CASE("length-bucketed batches cover every sample once within budget") {
  const auto f = make_fixture(TrainMode::kSecoco);
  const auto& samples = f.data.train;
  for (std::uint64_t epoch : {0u, 1u, 2u}) {
    const auto batches = make_batches(samples, 300, 1, epoch);
    std::multiset<std::size_t> seen;
    std::size_t padded = 0, real = 0;
    for (const auto& b : batches) {
      REQUIRE_FALSE(b.empty());
      std::size_t width = 0;
      for (auto i : b) width = std::max(width, sample_tokens(samples[i]));
      CHECK((b.size() == 1 || width * b.size() <= 300));
      for (auto i : b) {
        seen.insert(i);
        real += sample_tokens(samples[i]);
      }
      padded += width * b.size();
    }
    CHECK(seen.size() == samples.size());
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == samples.size());
    CHECK(static_cast<double>(padded - real) / static_cast<double>(padded) < 0.5);
  }
  CHECK(make_batches(samples, 300, 1, 0) == make_batches(samples, 300, 1, 0));
  CHECK(make_batches(samples, 300, 1, 0) != make_batches(samples, 300, 1, 1));
  CHECK(make_batches(samples, 300, 1, 0) != make_batches(samples, 300, 2, 0));
  const std::vector<Sample> one(1, samples[0]);
  CHECK(make_batches(one, 1, 1, 0) == std::vector<std::vector<std::size_t>>{{0}});
  CHECK_THROWS_AS(make_batches(samples, 0, 1, 0), ConfigError);
}

TEST_CASE("secoco and base logs carry the right loss terms") {
  for (auto mode : {TrainMode::kSecoco, TrainMode::kBase, TrainMode::kBaseSynthetic}) {
    CAPTURE(to_string(mode));
    TempDir dir("train_keys");
    const auto f = make_fixture(mode);
    auto c = small_config(mode, dir.path());
    c.max_steps = 20;
    const auto result = train(c, f.model, f.data);
    CHECK(result.final_step == 20);
    CHECK(fs::exists(result.last_checkpoint));
    CHECK(fs::exists(result.best_checkpoint));
    const auto log = read_log(result.metrics_log);
    REQUIRE(log.size() > 2);
    CHECK(log[0].contains("header"));
    CHECK(log[0]["header"]["train"]["mode"] == to_string(mode));
    CHECK(log[0]["header"]["provenance"]["test"] == "fixture");
    int train_lines = 0, valid_lines = 0;
    for (std::size_t i = 1; i < log.size(); ++i) {
      const auto& l = log[i];
      if (l.contains("loss")) {
        ++train_lines;
        CHECK(l.contains("translation"));
        CHECK(l.contains("lr"));
        CHECK(l.contains("deletion") == uses_predictors(mode));
        CHECK(l.contains("insertion") == uses_predictors(mode));
      } else {
        ++valid_lines;
        CHECK(l.contains("valid_bleu"));
        CHECK(l.contains("deletion_f1") == uses_predictors(mode));
      }
    }
    CHECK(train_lines == 4);
    CHECK(valid_lines == 1);
    const auto ck = model::load_checkpoint(result.last_checkpoint);
    CHECK(ck.meta["step"] == 20);
    CHECK(ck.meta["mode"] == to_string(mode));
    CHECK_NOTHROW(check_vocab_meta(ck.meta, f.data.src_vocab, f.data.tgt_vocab));
    CHECK_THROWS_AS(check_vocab_meta(ck.meta, f.data.tgt_vocab, f.data.src_vocab), InputError);
  }
}

TEST_CASE("training is deterministic and independent of the batch queue") {
  const auto f = make_fixture(TrainMode::kSecoco);
  TempDir a("train_det_a"), b("train_det_b"), q("train_det_q");
  auto ca = small_config(TrainMode::kSecoco, a.path());
  auto cb = small_config(TrainMode::kSecoco, b.path());
  auto cq = small_config(TrainMode::kSecoco, q.path());
  cq.queue_depth = 0;
  const auto ra = train(ca, f.model, f.data);
  const auto rb = train(cb, f.model, f.data);
  const auto rq = train(cq, f.model, f.data);
  CHECK(slurp(ra.metrics_log) == slurp(rb.metrics_log));
  const auto la = read_log(ra.metrics_log);
  const auto lq = read_log(rq.metrics_log);
  REQUIRE(la.size() == lq.size());
  for (std::size_t i = 1; i < la.size(); ++i) CHECK(la[i] == lq[i]);
  CHECK(same_params(*model::load_checkpoint(ra.last_checkpoint).model,
                    *model::load_checkpoint(rb.last_checkpoint).model));

  TempDir s("train_det_s");
  auto cs = small_config(TrainMode::kSecoco, s.path());
  cs.seed = 2;
  CHECK(slurp(train(cs, f.model, f.data).metrics_log) != slurp(ra.metrics_log));
}

TEST_CASE("an interrupted run resumes to the same log and parameters") {
  const auto f = make_fixture(TrainMode::kSecoco);
  TempDir full("train_full"), cut("train_cut");
  const auto reference = train(small_config(TrainMode::kSecoco, full.path()), f.model, f.data);

  const auto cc = small_config(TrainMode::kSecoco, cut.path());
  TrainHooks kill;
  kill.on_step = [](int step, const model::LossTerms&) {
    if (step == 27) throw std::runtime_error("killed");
  };
  CHECK_THROWS_WITH(train(cc, f.model, f.data, {}, kill), "killed");
  const fs::path last = cut / "last.ckpt";
  REQUIRE(fs::exists(last));
  CHECK(model::load_checkpoint(last).meta["step"] == 20);

  const auto resumed = train(cc, f.model, f.data, last);
  CHECK(resumed.final_step == 40);
  CHECK(slurp(resumed.metrics_log) == slurp(reference.metrics_log));
  CHECK(same_params(*model::load_checkpoint(resumed.last_checkpoint).model,
                    *model::load_checkpoint(reference.last_checkpoint).model));
  CHECK(resumed.best_valid_bleu == reference.best_valid_bleu);
}

TEST_CASE("resume rejects a checkpoint from another mode or model") {
  const auto f = make_fixture(TrainMode::kSecoco);
  TempDir dir("train_mode");
  auto c = small_config(TrainMode::kSecoco, dir.path());
  c.max_steps = 10;
  const auto r = train(c, f.model, f.data);
  TempDir other("train_mode_b");
  auto cb = small_config(TrainMode::kBase, other.path());
  CHECK_THROWS_AS(train(cb, f.model, f.data, r.last_checkpoint), ConfigError);
  auto m = f.model;
  m.d_ffn = 48;
  CHECK_THROWS_AS(train(small_config(TrainMode::kSecoco, other.path()), m, f.data, r.last_checkpoint),
                  ConfigError);
}

TEST_CASE("a non-finite loss aborts with a dumped batch") {
  const auto f = make_fixture(TrainMode::kSecoco);
  TempDir dir("train_nan");
  auto c = small_config(TrainMode::kSecoco, dir.path());
  c.peak_lr = 1e30f;
  c.warmup = 1;
  c.clip_norm = 0.0;
  c.max_steps = 200;
  CHECK_THROWS_AS(train(c, f.model, f.data), NumericError);
  bool dumped = false;
  for (const auto& e : fs::directory_iterator(dir.path())) {
    const auto name = e.path().filename().string();
    if (name.rfind("nan_batch_step", 0) == 0) {
      dumped = true;
      const auto j = read_json(e.path());
      CHECK(j.contains("samples"));
    }
  }
  CHECK(dumped);
}

TEST_CASE("rejects mismatched data") {
  auto f = make_fixture(TrainMode::kSecoco);
  TempDir dir("train_bad");
  auto m = f.model;
  m.src_vocab_size += 1;
  CHECK_THROWS_AS(train(small_config(TrainMode::kSecoco, dir.path()), m, f.data), ConfigError);
  f.data.train.clear();
  CHECK_THROWS_AS(train(small_config(TrainMode::kSecoco, dir.path()), f.model, f.data), InputError);
}
