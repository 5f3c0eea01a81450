#ifndef SECOCO_SAMPLE_HPP_
#define SECOCO_SAMPLE_HPP_

#include "secoco/common.hpp"
#include "secoco/editsup.hpp"

namespace secoco {

// One training record: the source fed to the translator, its clean form,
// the target, and one sampled round of predictor supervision.
struct Sample {
  TokenSeq noisy;
  TokenSeq clean;
  TokenSeq target;
  TokenSeq del_input;
  editsup::DelMask del_mask;
  TokenSeq ins_input;
  TokenSeq ins_labels;  // vocab ids, EMPTY for no insertion

  bool operator==(const Sample&) const = default;
};

}  // namespace secoco

#endif  // SECOCO_SAMPLE_HPP_
