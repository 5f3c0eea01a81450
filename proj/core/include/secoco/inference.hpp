#ifndef SECOCO_INFERENCE_HPP_
#define SECOCO_INFERENCE_HPP_

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "secoco/common.hpp"
#include "secoco/editsup.hpp"
#include "secoco/eval.hpp"
#include "secoco/model.hpp"
#include "secoco/textops.hpp"

namespace secoco::inference {

struct EditResult {
  TokenSeq corrected;
  editsup::EditTrace trace;  // only the rounds that changed something
  int n_iters = 0;           // iterations run, including the final no-edit check
  bool converged = false;    // the last iteration made zero edits
};

// Source of per-iteration edit decisions. The model-backed implementation
// reads the two encoder heads; tests can script one.
class EditPredictor {
 public:
  virtual ~EditPredictor() = default;
  // One probability per token.
  virtual std::vector<double> deletion_probs(const TokenSeq& seq) const = 0;
  // One vocab id per boundary (seq.size() + 1); EMPTY means no insertion.
  virtual TokenSeq insertion_labels(const TokenSeq& seq) const = 0;
};

class ModelEditPredictor : public EditPredictor {
 public:
  explicit ModelEditPredictor(const model::SecocoModel& model) : model_(model) {}
  std::vector<double> deletion_probs(const TokenSeq& seq) const override;
  // Argmax class per boundary; PAD/BOS/EOS winners count as EMPTY.
  TokenSeq insertion_labels(const TokenSeq& seq) const override;

 private:
  const model::SecocoModel& model_;
};

struct EditOptions {
  int max_iters = 5;
  float del_threshold = 0.5f;
  std::size_t max_length = 0;  // longest sequence an insertion may produce; 0 is unbounded
};

// Each iteration deletes positions with probability > threshold, re-reads
// the shortened sequence and inserts the predicted labels. Stops at the
// first iteration with zero edits (converged), when a sequence repeats
// (oscillation, not converged), when a round would exceed max_length (that
// round is dropped, not converged) or after max_iters.
EditResult correct_iteratively(const TokenSeq& src, const EditPredictor& predictor,
                               const EditOptions& options = {});

struct Hypothesis {
  TokenSeq tokens;          // without BOS/EOS
  double log_prob = 0.0;    // sum over tokens and the final EOS
  double score = 0.0;       // log_prob / (tokens.size() + 1)
  bool finished = false;
};

// Beam search over the decoder with length-normalized scores; width 1 is
// greedy. The predictor heads are not used.
Hypothesis beam_search(const model::SecocoModel& model, const TokenSeq& src, int beam);

TokenSeq translate_e2e(const model::SecocoModel& model, const TokenSeq& src, int beam = 5);

struct EditTranslation {
  TokenSeq translation;
  EditResult edits;
};

// Caps options.max_length at what the model can encode.
EditTranslation translate_edit(const model::SecocoModel& model, const TokenSeq& src,
                               int beam = 5, const EditOptions& options = {});

// Greedy decoding of many sentences in one batch per step.
std::vector<TokenSeq> greedy_translate_batch(const model::SecocoModel& model,
                                             std::span<const TokenSeq> srcs);

// Log-probability of a full target under teacher forcing (EOS included).
double sequence_log_prob(const model::SecocoModel& model, const TokenSeq& src,
                         const TokenSeq& target);

// Head predictions scored against the first gold round of each sentence:
// the deletion head on the noisy input, the insertion head on the gold
// post-deletion sequence.
std::vector<eval::EditPrediction> predict_first_round(
    const model::SecocoModel& model, std::span<const TokenSeq> noisy,
    std::span<const editsup::EditTrace> gold, float del_threshold = 0.5f);

// One line per edit iteration: "<t>: w1 [-del-] [+ins+] w2 ...".
std::vector<std::string> render_edits(const TokenSeq& src, const EditResult& result,
                                      const textops::Vocab& vocab);

}  // namespace secoco::inference

#endif  // SECOCO_INFERENCE_HPP_
