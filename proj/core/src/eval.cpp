#include "secoco/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

namespace secoco::eval {
namespace {

struct NgramCounts {
  std::size_t matches[4] = {0, 0, 0, 0};
  std::size_t totals[4] = {0, 0, 0, 0};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

void accumulate(const Words& hyp, const Words& ref, NgramCounts& c) {
  c.hyp_len += hyp.size();
  c.ref_len += ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    if (hyp.size() < n) continue;
    std::map<std::vector<std::string>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) {
      ++ref_counts[std::vector<std::string>(ref.begin() + i, ref.begin() + i + n)];
    }
    std::map<std::vector<std::string>, std::size_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      ++hyp_counts[std::vector<std::string>(hyp.begin() + i, hyp.begin() + i + n)];
    }
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) c.matches[n - 1] += std::min(count, it->second);
    }
    c.totals[n - 1] += hyp.size() - n + 1;
  }
}

double score(const NgramCounts& c) {
  if (c.hyp_len == 0 || c.matches[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(c.matches[0]) / c.totals[0]);
  for (int n = 1; n < 4; ++n) {
    log_sum += std::log((static_cast<double>(c.matches[n]) + 1.0) /
                        (static_cast<double>(c.totals[n]) + 1.0));
  }
  double log_bp = 0.0;
  if (c.hyp_len < c.ref_len) {
    log_bp = 1.0 - static_cast<double>(c.ref_len) / static_cast<double>(c.hyp_len);
  }
  return 100.0 * std::exp(log_bp + log_sum / 4.0);
}

}  // namespace

double bleu4(std::span<const Words> hypotheses, std::span<const Words> references) {
  if (hypotheses.empty()) throw InputError("BLEU of an empty corpus");
  if (hypotheses.size() != references.size()) {
    throw InputError("BLEU needs as many hypotheses as references (" +
                     std::to_string(hypotheses.size()) + " vs " +
                     std::to_string(references.size()) + ")");
  }
  NgramCounts c;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    accumulate(hypotheses[i], references[i], c);
  }
  return score(c);
}

double sentence_bleu(const Words& hypothesis, const Words& reference) {
  NgramCounts c;
  accumulate(hypothesis, reference, c);
  return score(c);
}

EditMetrics edit_metrics(std::span<const EditPrediction> items) {
  EditMetrics m;
  std::size_t correct = 0, correct_nonempty = 0;
  for (const auto& it : items) {
    if (it.gold_mask.size() != it.pred_mask.size()) {
      throw InputError("edit metrics: deletion masks of different lengths");
    }
    if (it.gold_labels.size() != it.pred_labels.size()) {
      throw InputError("edit metrics: insertion labels of different lengths");
    }
    m.positions += it.gold_mask.size();
    for (std::size_t i = 0; i < it.gold_mask.size(); ++i) {
      const bool g = it.gold_mask[i] != 0, p = it.pred_mask[i] != 0;
      m.deletion.true_pos += g && p;
      m.deletion.false_pos += !g && p;
      m.deletion.false_neg += g && !p;
    }
    for (std::size_t j = 0; j < it.gold_labels.size(); ++j) {
      const bool hit = it.gold_labels[j] == it.pred_labels[j];
      ++m.boundaries;
      correct += hit;
      if (it.gold_labels[j] != textops::kEmpty) {
        ++m.nonempty_boundaries;
        correct_nonempty += hit;
      }
    }
  }
  auto& d = m.deletion;
  const std::size_t predicted = d.true_pos + d.false_pos;
  const std::size_t gold = d.true_pos + d.false_neg;
  d.precision_undefined = predicted == 0;
  d.recall_undefined = gold == 0;
  d.precision = predicted ? static_cast<double>(d.true_pos) / predicted : 0.0;
  d.recall = gold ? static_cast<double>(d.true_pos) / gold : 0.0;
  if (predicted == 0 && gold == 0) {
    // Nothing to delete and nothing deleted: a perfect score.
    d.precision = d.recall = d.f1 = 1.0;
  } else if (d.precision + d.recall > 0.0) {
    d.f1 = 2.0 * d.precision * d.recall / (d.precision + d.recall);
  }
  m.insertion_accuracy = m.boundaries ? static_cast<double>(correct) / m.boundaries : 0.0;
  m.insertion_accuracy_nonempty =
      m.nonempty_boundaries ? static_cast<double>(correct_nonempty) / m.nonempty_boundaries
                            : 0.0;
  return m;
}

EditPrediction align_traces(const editsup::EditTrace& predicted,
                            const editsup::EditTrace& gold, std::size_t noisy_len) {
  auto first = [noisy_len](const editsup::EditTrace& t, const char* which) {
    editsup::EditRound r = t.empty() ? editsup::identity_round<TokenId>(noisy_len)
                                     : t.rounds.front();
    if (r.del_mask.size() != noisy_len ||
        r.ins_labels.size() != noisy_len - r.num_deletions() + 1) {
      throw InputError(std::string(which) + " trace does not start at the noisy input");
    }
    return r;
  };
  const auto p = first(predicted, "predicted");
  const auto g = first(gold, "gold");
  EditPrediction out;
  out.gold_mask = g.del_mask;
  out.pred_mask = p.del_mask;
  out.gold_labels = g.ins_labels;
  if (p.del_mask == g.del_mask) {
    out.pred_labels = p.ins_labels;
  } else {
    out.gold_labels.clear();
  }
  return out;
}

double measure_latency(const std::function<void(const TokenSeq&)>& decode,
                       std::span<const TokenSeq> test_set, std::size_t warmup) {
  if (test_set.empty()) throw InputError("latency needs at least one sentence");
  for (std::size_t i = 0; i < warmup; ++i) decode(test_set[i % test_set.size()]);
  const auto start = std::chrono::steady_clock::now();
  for (const auto& s : test_set) decode(s);
  const auto stop = std::chrono::steady_clock::now();
  const double ms = std::chrono::duration<double, std::milli>(stop - start).count();
  return std::max(ms / static_cast<double>(test_set.size()), 1e-9);
}

nlohmann::json to_json(const DeletionScore& d) {
  return {{"precision", d.precision},
          {"recall", d.recall},
          {"f1", d.f1},
          {"precision_undefined", d.precision_undefined},
          {"recall_undefined", d.recall_undefined},
          {"true_pos", d.true_pos},
          {"false_pos", d.false_pos},
          {"false_neg", d.false_neg}};
}

nlohmann::json to_json(const EditMetrics& m) {
  return {{"deletion", to_json(m.deletion)},
          {"insertion_accuracy", m.insertion_accuracy},
          {"insertion_accuracy_nonempty", m.insertion_accuracy_nonempty},
          {"boundaries", m.boundaries},
          {"nonempty_boundaries", m.nonempty_boundaries},
          {"positions", m.positions}};
}

nlohmann::json to_json(const ModeReport& r) {
  nlohmann::json j{{"mode", r.mode},
                   {"bleu", r.bleu},
                   {"latency_ms_per_sentence", r.latency_ms},
                   {"sentences", r.sentences}};
  if (r.has_edit_metrics) j["edit_metrics"] = to_json(r.edits);
  if (r.mode == "edit") {
    j["avg_iterations"] = r.avg_iterations;
    j["converged_fraction"] = r.converged_fraction;
  }
  return j;
}

}  // namespace secoco::eval
