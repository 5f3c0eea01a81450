#ifndef SECOCO_EVAL_HPP_
#define SECOCO_EVAL_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "secoco/common.hpp"
#include "secoco/editsup.hpp"

namespace secoco::eval {

// Corpus BLEU-4 on tokens, x100. Unigram precision is unsmoothed; 2- to
// 4-gram precisions use add-one smoothing. Brevity penalty exp(1 - r/c) when
// the hypothesis corpus is shorter than the references.
double bleu4(std::span<const Words> hypotheses, std::span<const Words> references);

// Same statistic on a single pair, used to rank sentences in diff dumps.
double sentence_bleu(const Words& hypothesis, const Words& reference);

struct DeletionScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // no predicted deletions
  bool recall_undefined = false;     // no gold deletions
  std::size_t true_pos = 0, false_pos = 0, false_neg = 0;
};

struct EditMetrics {
  DeletionScore deletion;
  double insertion_accuracy = 0.0;           // over every scored boundary
  double insertion_accuracy_nonempty = 0.0;  // over gold boundaries with an insertion
  std::size_t boundaries = 0;
  std::size_t nonempty_boundaries = 0;
  std::size_t positions = 0;
};

// One scored sentence. Deletions are compared position-wise on the noisy
// input; insertion labels are the predictor's output on the gold
// post-deletion sequence, compared boundary-wise with the gold labels.
struct EditPrediction {
  editsup::DelMask gold_mask;
  editsup::DelMask pred_mask;
  TokenSeq gold_labels;
  TokenSeq pred_labels;
};

EditMetrics edit_metrics(std::span<const EditPrediction> items);

// Builds an EditPrediction from the first rounds of a predicted and a gold
// trace that both start at a noisy input of noisy_len tokens. An empty trace
// stands for the identity round. Insertion labels are only comparable when
// the two first-round masks agree; otherwise pred_labels is left empty.
// Throws InputError when a trace does not fit noisy_len.
EditPrediction align_traces(const editsup::EditTrace& predicted,
                            const editsup::EditTrace& gold, std::size_t noisy_len);

// Mean wall-clock milliseconds per sentence of decode over test_set, run
// single-threaded one sentence at a time after warmup untimed calls.
double measure_latency(const std::function<void(const TokenSeq&)>& decode,
                       std::span<const TokenSeq> test_set, std::size_t warmup);

struct ModeReport {
  std::string mode;
  double bleu = 0.0;
  bool has_edit_metrics = false;
  EditMetrics edits;
  double avg_iterations = 0.0;
  double converged_fraction = 0.0;
  double latency_ms = 0.0;
  std::size_t sentences = 0;
};

nlohmann::json to_json(const DeletionScore& d);
nlohmann::json to_json(const EditMetrics& m);
nlohmann::json to_json(const ModeReport& r);

}  // namespace secoco::eval

#endif  // SECOCO_EVAL_HPP_
