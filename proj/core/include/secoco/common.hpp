#ifndef SECOCO_COMMON_HPP_
#define SECOCO_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace secoco {

using TokenId = std::int32_t;

// A sentence as vocabulary ids. Never carries PAD in the interior.
using TokenSeq = std::vector<TokenId>;

// A sentence as surface tokens, before vocabulary lookup.
using Words = std::vector<std::string>;

// Shape or length mismatch between operands; the caller broke a precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed user-supplied data (files, sequences, metrics inputs).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Internal records that contradict each other (e.g. a noise record that does
// not describe the noisy sequence it came with).
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A non-finite value surfaced where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace secoco

#endif  // SECOCO_COMMON_HPP_
