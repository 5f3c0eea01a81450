#include "secoco/cli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "secoco/checkpoint.hpp"
#include "secoco/inference.hpp"
#include "secoco/log.hpp"
#include "secoco/rng.hpp"

namespace secoco::cli {

using nlohmann::json;

nlohmann::json to_json(const noise::NoiseStats& s) {
  return {{"sentences", s.sentences}, {"clean_tokens", s.clean_tokens},
          {"deletions", s.deletions}, {"insertions", s.insertions},
          {"repeats", s.repeats},     {"typos", s.typos},
          {"unchanged", s.unchanged}, {"rounds", s.rounds},
          {"deletion_rate", s.deletion_rate()}};
}

namespace {

constexpr noise::EditKind kKinds[] = {noise::EditKind::kDelete, noise::EditKind::kInsert,
                                      noise::EditKind::kRepeat, noise::EditKind::kTypo};

void write_text(const fs::path& path, const std::vector<Words>& sentences) {
  std::vector<std::string> lines;
  lines.reserve(sentences.size());
  for (const auto& s : sentences) lines.push_back(textops::detokenize(s, textops::TokenizeMode::kWhitespace));
  write_lines(path, lines);
}

std::size_t max_tokens(const model::ModelConfig& m) {
  return static_cast<std::size_t>(m.max_len - 2);
}

textops::Vocab vocab_from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < textops::kNumSpecials) throw InputError("vocabulary lacks specials");
  textops::Vocab v(std::vector<std::string>(tokens.begin() + textops::kNumSpecials, tokens.end()));
  if (v.tokens() != tokens) throw InputError("vocabulary specials are out of order");
  return v;
}

}  // namespace

SynthResult cmd_synth(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
  config.validate();
  fs::create_directories(out_dir);
  const noise::SyntheticLanguage lang(config.task);
  const auto& pool = lang.source_lexicon();
  SynthResult result;
  std::vector<Words> vocab_src, vocab_tgt;

  auto make_split = [&](const std::string& name, std::size_t n) {
    const auto pairs = noise::synth_task(derive_seed(config.seed, "task." + name), n, lang);
    const std::uint64_t noise_seed = derive_seed(config.noise.seed, name);
    Corpus corpus;
    corpus.header = {{"command", "synth"}, {"split", name}, {"config", to_json(config)}};
    noise::NoiseStats stats;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      auto rng = make_rng(noise_seed, i);
      auto np = noise::inject_noise(pairs[i].source, config.noise, rng, pool);
      stats.add(np);
      corpus.records.push_back(
          CorpusRecord{np.clean, np.noisy, pairs[i].target, np.trace, std::string()});
    }
    write_corpus(out_dir / (name + ".jsonl"), corpus);
    result.splits.emplace_back(name, stats);
    return corpus;
  };

  const Corpus train = make_split("train", config.data.train_size);
  for (const auto& r : train.records) {
    vocab_src.push_back(r.clean);
    vocab_src.push_back(r.noisy);
    vocab_tgt.push_back(r.target);
  }
  make_split("valid", config.data.valid_size);
  const Corpus test = make_split("test", config.data.test_size);
  std::vector<Words> noisy, refs;
  for (const auto& r : test.records) {
    noisy.push_back(r.noisy);
    refs.push_back(r.target);
  }
  write_text(out_dir / "test.noisy.txt", noisy);
  write_text(out_dir / "test.ref.txt", refs);

  // One atomic edit per sentence, kinds in rotation.
  {
    const auto pairs = noise::synth_task(derive_seed(config.seed, "task.single"),
                                         config.data.single_edit_size, lang);
    const std::uint64_t noise_seed = derive_seed(config.noise.seed, "single");
    Corpus corpus;
    corpus.header = {{"command", "synth"}, {"split", "single"}, {"config", to_json(config)}};
    noise::NoiseStats stats;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      auto rng = make_rng(noise_seed, i);
      for (std::size_t k = 0; k < 4; ++k) {
        const auto kind = kKinds[(i + k) % 4];
        auto np = noise::inject_single_edit(pairs[i].source, kind, rng, pool);
        if (!np) continue;
        stats.add(*np);
        corpus.records.push_back(CorpusRecord{np->clean, np->noisy, pairs[i].target, np->trace,
                                              std::string(noise::to_string(kind))});
        break;
      }
    }
    write_corpus(out_dir / kSingleEditFile, corpus);
    result.splits.emplace_back("single", stats);
  }

  const auto src_vocab = textops::build_vocab(vocab_src, config.data.vocab_max);
  const auto tgt_vocab = textops::build_vocab(vocab_tgt, config.data.vocab_max);
  src_vocab.save(out_dir / kSrcVocabFile);
  tgt_vocab.save(out_dir / kTgtVocabFile);
  result.src_vocab_size = src_vocab.size();
  result.tgt_vocab_size = tgt_vocab.size();

  json stats = {{"config", to_json(config)},
                {"src_vocab_size", src_vocab.size()},
                {"tgt_vocab_size", tgt_vocab.size()},
                {"splits", json::object()}};
  for (const auto& [name, s] : result.splits) {
    stats["splits"][name] = to_json(s);
    out << name << ": sentences " << s.sentences << ", clean tokens " << s.clean_tokens
        << ", deletions " << s.deletions << ", insertions " << s.insertions << ", repeats "
        << s.repeats << ", typos " << s.typos << ", unchanged " << s.unchanged
        << ", deletion rate " << s.deletion_rate() << '\n';
  }
  out << "vocab: source " << src_vocab.size() << ", target " << tgt_vocab.size() << '\n';
  write_json(out_dir / kStatsFile, stats);
  return result;
}

training::TrainResult cmd_train(const RunConfig& config, const fs::path& data_dir,
                                const fs::path& ckpt_dir,
                                const std::optional<fs::path>& resume, std::ostream& out,
                                const training::TrainHooks& hooks) {
  config.validate();
  const Corpus train = read_corpus(data_dir / kTrainFile);
  const Corpus valid = read_corpus(data_dir / kValidFile);
  training::TrainData data;
  data.src_vocab = textops::Vocab::load(data_dir / kSrcVocabFile);
  data.tgt_vocab = textops::Vocab::load(data_dir / kTgtVocabFile);
  model::ModelConfig mc = config.model;
  mc.src_vocab_size = static_cast<int>(data.src_vocab.size());
  mc.tgt_vocab_size = static_cast<int>(data.tgt_vocab.size());
  training::TrainConfig tc = config.train;
  tc.checkpoint_dir = ckpt_dir.string();
  training::SampleStats stats;
  data.train = training::build_samples(train.records, data.src_vocab, data.tgt_vocab, tc,
                                       max_tokens(mc), &stats);
  data.valid = training::build_valid_set(valid.records, data.src_vocab,
                                         static_cast<std::size_t>(tc.valid_subset),
                                         max_tokens(mc));
  data.provenance = {{"config", to_json(config)},
                     {"data_dir", data_dir.string()},
                     {"train_header", train.header}};
  out << "mode " << training::to_string(tc.mode) << ": " << stats.noisy << " noisy + "
      << stats.clean << " clean samples, " << stats.skipped << " skipped\n";
  auto result = training::train(tc, mc, data, resume, hooks);
  out << "trained to step " << result.final_step << ", best valid BLEU "
      << result.best_valid_bleu << "\n";
  return result;
}

DecodeMode parse_decode_mode(const std::string& s) {
  if (s == "e2e") return DecodeMode::kE2e;
  if (s == "edit") return DecodeMode::kEdit;
  throw ConfigError("unknown decoding mode '" + s + "' (e2e|edit)");
}

ModelBundle load_bundle(const fs::path& checkpoint) {
  auto ck = model::load_checkpoint(checkpoint);
  ModelBundle b;
  if (!ck.meta.contains("src_vocab") || !ck.meta.contains("tgt_vocab")) {
    throw InputError("checkpoint does not embed its vocabularies");
  }
  b.src_vocab = vocab_from_tokens(ck.meta["src_vocab"].get<std::vector<std::string>>());
  b.tgt_vocab = vocab_from_tokens(ck.meta["tgt_vocab"].get<std::vector<std::string>>());
  if (b.src_vocab.size() != static_cast<std::size_t>(ck.model->config().src_vocab_size) ||
      b.tgt_vocab.size() != static_cast<std::size_t>(ck.model->config().tgt_vocab_size)) {
    throw InputError("checkpoint vocabularies do not fit its model");
  }
  b.model = std::move(ck.model);
  b.meta = std::move(ck.meta);
  return b;
}

void cmd_translate(const RunConfig& config, const TranslateOptions& options, std::ostream& out) {
  const ModelBundle bundle = load_bundle(options.checkpoint);
  if (options.vocab_dir) {
    training::check_vocab_meta(bundle.meta,
                               textops::Vocab::load(*options.vocab_dir / kSrcVocabFile),
                               textops::Vocab::load(*options.vocab_dir / kTgtVocabFile));
  }
  const auto lines = read_lines(options.input);
  const inference::EditOptions eo{config.inference.max_iters, config.inference.del_threshold, 0};
  const std::size_t limit = max_tokens(bundle.model->config());
  std::vector<std::string> translations;
  std::vector<std::string> edit_lines;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const Words words = textops::tokenize(lines[i], textops::TokenizeMode::kWhitespace);
    if (words.size() > limit) {
      throw InputError("line " + std::to_string(i + 1) + " has " +
                       std::to_string(words.size()) + " tokens; the model accepts " +
                       std::to_string(limit));
    }
    const TokenSeq src = bundle.src_vocab.encode(words);
    TokenSeq hyp;
    if (src.empty()) {
      if (options.show_edits && options.mode == DecodeMode::kEdit) {
        edit_lines.push_back("# " + std::to_string(i + 1));
      }
    } else if (options.mode == DecodeMode::kE2e) {
      hyp = inference::translate_e2e(*bundle.model, src, config.inference.beam);
    } else {
      auto r = inference::translate_edit(*bundle.model, src, config.inference.beam, eo);
      hyp = std::move(r.translation);
      if (options.show_edits) {
        edit_lines.push_back("# " + std::to_string(i + 1) + " " + lines[i]);
        for (auto& l : inference::render_edits(src, r.edits, bundle.src_vocab)) {
          edit_lines.push_back(std::move(l));
        }
      }
    }
    translations.push_back(
        textops::detokenize(bundle.tgt_vocab.decode(hyp), textops::TokenizeMode::kWhitespace));
    if (!options.output) {
      out << translations.back() << '\n';
      if (options.show_edits) {
        for (const auto& l : edit_lines) out << "  " << l << '\n';
        edit_lines.clear();
      }
    }
  }
  if (options.output) {
    write_lines(*options.output, translations);
    if (options.show_edits) write_lines(fs::path(options.output->string() + ".edits"), edit_lines);
    write_json(fs::path(options.output->string() + ".meta.json"),
               {{"command", "translate"},
                {"config", to_json(config)},
                {"checkpoint", options.checkpoint.string()},
                {"checkpoint_meta_step", bundle.meta.value("step", 0)},
                {"input", options.input.string()},
                {"mode", options.mode == DecodeMode::kE2e ? "e2e" : "edit"}});
  }
}

eval::ModeReport evaluate_mode(const ModelBundle& bundle, DecodeMode mode,
                               std::span<const CorpusRecord> test, const RunConfig& config,
                               bool latency, std::vector<Words>* hypotheses) {
  if (test.empty()) throw InputError("empty test set");
  const auto& m = *bundle.model;
  const inference::EditOptions eo{config.inference.max_iters, config.inference.del_threshold, 0};
  const int beam = config.inference.beam;
  std::vector<TokenSeq> sources;
  std::vector<Words> hyps, refs;
  std::vector<editsup::EditTrace> gold;
  std::size_t iterations = 0, converged = 0;
  for (const auto& r : test) {
    sources.push_back(bundle.src_vocab.encode(r.noisy));
    refs.push_back(r.target);
    gold.push_back(editsup::encode_trace(r.trace, bundle.src_vocab));
    TokenSeq out;
    if (mode == DecodeMode::kE2e) {
      out = inference::translate_e2e(m, sources.back(), beam);
    } else {
      auto t = inference::translate_edit(m, sources.back(), beam, eo);
      iterations += static_cast<std::size_t>(t.edits.n_iters);
      converged += t.edits.converged ? 1 : 0;
      out = std::move(t.translation);
    }
    hyps.push_back(bundle.tgt_vocab.decode(out));
  }
  eval::ModeReport rep;
  rep.mode = mode == DecodeMode::kE2e ? "e2e" : "edit";
  rep.sentences = test.size();
  rep.bleu = eval::bleu4(hyps, refs);
  if (mode == DecodeMode::kEdit) {
    rep.avg_iterations = static_cast<double>(iterations) / test.size();
    rep.converged_fraction = static_cast<double>(converged) / test.size();
    rep.has_edit_metrics = true;
    rep.edits = eval::edit_metrics(inference::predict_first_round(m, sources, gold, eo.del_threshold));
  }
  if (latency) {
    const std::size_t n = std::min(config.eval.latency_sentences, sources.size());
    const std::span<const TokenSeq> subset(sources.data(), n);
    if (mode == DecodeMode::kE2e) {
      rep.latency_ms = eval::measure_latency(
          [&](const TokenSeq& s) { inference::translate_e2e(m, s, beam); }, subset,
          config.eval.latency_warmup);
    } else {
      rep.latency_ms = eval::measure_latency(
          [&](const TokenSeq& s) { inference::translate_edit(m, s, beam, eo); }, subset,
          config.eval.latency_warmup);
    }
  }
  if (hypotheses != nullptr) *hypotheses = std::move(hyps);
  return rep;
}

namespace {

void dump_worst(const fs::path& path, std::span<const CorpusRecord> test,
                const std::vector<Words>& hyps, std::size_t k) {
  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> scores(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    scores[i] = eval::sentence_bleu(hyps[i], test[i].target);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<std::string> lines;
  const auto ws = textops::TokenizeMode::kWhitespace;
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    const std::size_t i = order[r];
    lines.push_back("# " + std::to_string(i + 1) + " sentence BLEU " + std::to_string(scores[i]));
    lines.push_back("src: " + textops::detokenize(test[i].noisy, ws));
    lines.push_back("cln: " + textops::detokenize(test[i].clean, ws));
    lines.push_back("hyp: " + textops::detokenize(hyps[i], ws));
    lines.push_back("ref: " + textops::detokenize(test[i].target, ws));
    lines.push_back("");
  }
  write_lines(path, lines);
}

}  // namespace

nlohmann::json cmd_eval(const RunConfig& config, const EvalOptions& options, std::ostream& out) {
  const Corpus test = read_corpus(options.test);
  if (test.records.empty()) throw InputError("no references in " + options.test.string());
  json report = {{"command", "eval"},
                 {"config", to_json(config)},
                 {"test", options.test.string()},
                 {"modes", json::object()}};
  if (options.hypotheses) {
    const auto lines = read_lines(*options.hypotheses);
    if (lines.size() != test.records.size()) {
      throw InputError("hypothesis file has " + std::to_string(lines.size()) + " lines for " +
                       std::to_string(test.records.size()) + " references");
    }
    std::vector<Words> hyps, refs;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      hyps.push_back(textops::tokenize(lines[i], textops::TokenizeMode::kWhitespace));
      refs.push_back(test.records[i].target);
    }
    report["modes"]["hypotheses"] = {{"mode", "hypotheses"},
                                     {"bleu", eval::bleu4(hyps, refs)},
                                     {"sentences", hyps.size()}};
  }
  if (options.base_checkpoint) {
    const ModelBundle base = load_bundle(*options.base_checkpoint);
    auto rep = evaluate_mode(base, DecodeMode::kE2e, test.records, config, options.latency);
    rep.mode = "base";
    report["modes"]["base"] = eval::to_json(rep);
    report["modes"]["base"]["checkpoint"] = options.base_checkpoint->string();
  }
  if (options.checkpoint) {
    const ModelBundle bundle = load_bundle(*options.checkpoint);
    std::vector<Words> hyps;
    for (DecodeMode mode : {DecodeMode::kE2e, DecodeMode::kEdit}) {
      const auto rep = evaluate_mode(bundle, mode, test.records, config, options.latency, &hyps);
      report["modes"][rep.mode] = eval::to_json(rep);
      report["modes"][rep.mode]["checkpoint"] = options.checkpoint->string();
      if (config.eval.worst_k > 0 && options.output) {
        dump_worst(fs::path(options.output->string() + "." + rep.mode + ".worst.txt"),
                   test.records, hyps, config.eval.worst_k);
      }
    }
  }
  if (report["modes"].empty()) {
    throw ConfigError("nothing to evaluate: pass --checkpoint, --base-checkpoint or --hyp");
  }
  if (options.output) {
    write_json(*options.output, report);
  } else {
    out << report.dump(2) << '\n';
  }
  for (const auto& [name, block] : report["modes"].items()) {
    log::info(name + ": BLEU " + std::to_string(block["bleu"].get<double>()));
  }
  return report;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-correcting encoding for robust translation: synth, train, translate, eval"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "root seed for every subsystem");
  app.add_option("--set", overrides, "override a config field, e.g. train.max_steps=200");

  auto* synth = app.add_subcommand("synth", "generate corpus splits with gold edit traces");
  std::string synth_out;
  synth->add_option("--out", synth_out, "data directory (default data.data_dir)");

  auto* train = app.add_subcommand("train", "train a model");
  std::string train_mode, train_out, train_data, resume;
  train->add_option("--mode", train_mode, "secoco | base | base+synthetic");
  train->add_option("--data", train_data, "data directory (default data.data_dir)");
  train->add_option("--out", train_out, "checkpoint directory (default train.checkpoint_dir)");
  train->add_option("--resume", resume, "checkpoint to resume from")->check(CLI::ExistingFile);

  auto* translate = app.add_subcommand("translate", "translate a noisy source file");
  TranslateOptions topt;
  std::string topt_mode = "edit", topt_ckpt, topt_input, topt_out, topt_vocab;
  std::optional<int> beam, max_iters;
  translate->add_option("--checkpoint", topt_ckpt)->required()->check(CLI::ExistingFile);
  translate->add_option("--input", topt_input, "one sentence per line")->required()->check(CLI::ExistingFile);
  translate->add_option("--out", topt_out, "output file (default stdout)");
  translate->add_option("--mode", topt_mode, "e2e | edit");
  translate->add_option("--beam", beam);
  translate->add_option("--max-iters", max_iters);
  translate->add_flag("--show-edits", topt.show_edits, "write the per-iteration edit diffs");
  translate->add_option("--vocab-dir", topt_vocab, "check these vocab files against the checkpoint");

  auto* evalc = app.add_subcommand("eval", "score models on a test split");
  std::string e_ckpt, e_base, e_hyp, e_test, e_out;
  bool no_latency = false;
  evalc->add_option("--checkpoint", e_ckpt, "Secoco checkpoint (e2e and edit blocks)")->check(CLI::ExistingFile);
  evalc->add_option("--base-checkpoint", e_base, "baseline checkpoint (base block)")->check(CLI::ExistingFile);
  evalc->add_option("--hyp", e_hyp, "score this hypothesis file")->check(CLI::ExistingFile);
  evalc->add_option("--test", e_test, "test split (default <data_dir>/test.jsonl)");
  evalc->add_option("--out", e_out, "report path (default stdout)");
  evalc->add_option("--beam", beam);
  evalc->add_option("--max-iters", max_iters);
  evalc->add_flag("--no-latency", no_latency, "skip latency measurement");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));
    if (!train_mode.empty()) overrides.push_back("train.mode=\"" + train_mode + "\"");
    if (beam) overrides.push_back("inference.beam=" + std::to_string(*beam));
    if (max_iters) overrides.push_back("inference.max_iters=" + std::to_string(*max_iters));
    const fs::path cfg_file(config_path);
    const RunConfig cfg = load_run_config(config_path.empty() ? nullptr : &cfg_file, overrides);
    if (*synth) {
      cmd_synth(cfg, synth_out.empty() ? fs::path(cfg.data.data_dir) : fs::path(synth_out), out);
    } else if (*train) {
      const fs::path data = train_data.empty() ? fs::path(cfg.data.data_dir) : fs::path(train_data);
      const fs::path dir = train_out.empty() ? fs::path(cfg.train.checkpoint_dir) : fs::path(train_out);
      std::optional<fs::path> res;
      if (!resume.empty()) res = fs::path(resume);
      cmd_train(cfg, data, dir, res, out);
    } else if (*translate) {
      topt.mode = parse_decode_mode(topt_mode);
      topt.checkpoint = topt_ckpt;
      topt.input = topt_input;
      if (!topt_out.empty()) topt.output = fs::path(topt_out);
      if (!topt_vocab.empty()) topt.vocab_dir = fs::path(topt_vocab);
      cmd_translate(cfg, topt, out);
    } else if (*evalc) {
      EvalOptions eo;
      if (!e_ckpt.empty()) eo.checkpoint = fs::path(e_ckpt);
      if (!e_base.empty()) eo.base_checkpoint = fs::path(e_base);
      if (!e_hyp.empty()) eo.hypotheses = fs::path(e_hyp);
      eo.test = e_test.empty() ? fs::path(cfg.data.data_dir) / kTestFile : fs::path(e_test);
      if (!e_out.empty()) eo.output = fs::path(e_out);
      eo.latency = !no_latency;
      cmd_eval(cfg, eo, out);
    }
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace secoco::cli
