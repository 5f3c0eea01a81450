#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "secoco/adam.hpp"
#include "secoco/autodiff.hpp"
#include "secoco/inference.hpp"
#include "secoco/model.hpp"
#include "secoco/sample.hpp"
#include "secoco/tensor.hpp"
#include "secoco/textops.hpp"

namespace {

using namespace secoco;

model::ModelConfig bench_config() {
  model::ModelConfig c;
  c.d_model = 64;
  c.n_heads = 2;
  c.n_enc_layers = 2;
  c.n_dec_layers = 2;
  c.d_ffn = 128;
  c.max_len = 64;
  c.src_vocab_size = 160;
  c.tgt_vocab_size = 40;
  c.dropout = 0.1f;
  return c;
}

TokenSeq random_seq(std::mt19937_64& rng, int vocab, int len) {
  std::uniform_int_distribution<int> tok(static_cast<int>(textops::kNumSpecials), vocab - 1);
  TokenSeq s(static_cast<std::size_t>(len));
  for (auto& t : s) t = tok(rng);
  return s;
}

std::vector<Sample> random_batch(const model::ModelConfig& c, int n, int len) {
  std::mt19937_64 rng(7);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.noisy = random_seq(rng, c.src_vocab_size, len);
    s.clean = random_seq(rng, c.src_vocab_size, len);
    s.target = random_seq(rng, c.tgt_vocab_size, len);
    s.del_input = s.noisy;
    s.del_mask.assign(s.noisy.size(), 0);
    s.del_mask[0] = 1;
    s.ins_input = s.clean;
    s.ins_labels.assign(s.clean.size() + 1, textops::kEmpty);
    s.ins_labels[1] = s.clean[0];
    out.push_back(std::move(s));
  }
  return out;
}

void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<float> a(static_cast<std::size_t>(n) * n, 0.5f), b(a.size(), 0.25f), c(a.size());
  for (auto _ : state) {
    numerics::gemm(false, false, n, n, n, 1.0f, a.data(), b.data(), 0.0f, c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);

void BM_Encode(benchmark::State& state) {
  const auto cfg = bench_config();
  const model::SecocoModel m(cfg, 1);
  std::mt19937_64 rng(1);
  std::vector<TokenSeq> seqs;
  for (int i = 0; i < state.range(0); ++i) seqs.push_back(random_seq(rng, cfg.src_vocab_size, 10));
  const auto src = model::SourceBatch::build(seqs, cfg.max_len);
  numerics::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(m.encode(src, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Encode)->Arg(1)->Arg(32);

void BM_TrainStep(benchmark::State& state) {
  const auto cfg = bench_config();
  model::SecocoModel m(cfg, 2);
  numerics::AdamState adam(m.params(), {});
  const auto batch = random_batch(cfg, static_cast<int>(state.range(0)), 10);
  std::mt19937_64 rng(3);
  for (auto _ : state) {
    m.params().zero_grad();
    const auto terms = m.joint_loss(batch, {}, {.train = true, .rng = &rng});
    numerics::backward(terms.total);
    numerics::adam_step(m.params(), adam, 1e-4f);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TranslateE2e(benchmark::State& state) {
  const auto cfg = bench_config();
  const model::SecocoModel m(cfg, 4);
  std::mt19937_64 rng(4);
  const TokenSeq src = random_seq(rng, cfg.src_vocab_size, 10);
  const int beam = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(inference::translate_e2e(m, src, beam));
}
BENCHMARK(BM_TranslateE2e)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_TranslateEdit(benchmark::State& state) {
  const auto cfg = bench_config();
  const model::SecocoModel m(cfg, 4);
  std::mt19937_64 rng(4);
  const TokenSeq src = random_seq(rng, cfg.src_vocab_size, 10);
  const int beam = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(inference::translate_edit(m, src, beam));
}
BENCHMARK(BM_TranslateEdit)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_GreedyBatch(benchmark::State& state) {
  const auto cfg = bench_config();
  const model::SecocoModel m(cfg, 5);
  std::mt19937_64 rng(5);
  std::vector<TokenSeq> srcs;
  for (int i = 0; i < state.range(0); ++i) srcs.push_back(random_seq(rng, cfg.src_vocab_size, 10));
  for (auto _ : state) benchmark::DoNotOptimize(inference::greedy_translate_batch(m, srcs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GreedyBatch)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
