#include "secoco/editsup.hpp"

#include <algorithm>

namespace secoco::editsup {

std::size_t NoiseRecord::num_atomic_edits() const {
  std::size_t n = num_clean_deletions;
  for (const auto& o : origins) n += o.kind != Origin::kKept;
  return n;
}

namespace {

void validate_record(std::span<const std::string> noisy,
                     std::span<const std::string> clean,
                     const NoiseRecord& record) {
  if (record.origins.size() != noisy.size()) {
    throw IntegrityError("noise record has " +
                         std::to_string(record.origins.size()) +
                         " origins for " + std::to_string(noisy.size()) +
                         " noisy tokens");
  }
  const int n = static_cast<int>(clean.size());
  int last = -1;
  std::size_t accounted = 0;
  for (std::size_t k = 0; k < noisy.size(); ++k) {
    const auto& o = record.origins[k];
    const std::string where = " at noisy position " + std::to_string(k);
    switch (o.kind) {
      case Origin::kKept:
      case Origin::kTypo:
        if (o.clean_index <= last || o.clean_index >= n) {
          throw IntegrityError("clean index out of order or range" + where);
        }
        if (o.kind == Origin::kKept &&
            noisy[k] != clean[static_cast<std::size_t>(o.clean_index)]) {
          throw IntegrityError("kept token differs from clean" + where);
        }
        if (o.kind == Origin::kTypo &&
            noisy[k] == clean[static_cast<std::size_t>(o.clean_index)]) {
          throw IntegrityError("typo leaves the surface unchanged" + where);
        }
        last = o.clean_index;
        ++accounted;
        break;
      case Origin::kRepeated:
        if (k == 0 || record.origins[k - 1].kind != Origin::kKept ||
            record.origins[k - 1].clean_index != o.clean_index ||
            noisy[k] != noisy[k - 1]) {
          throw IntegrityError("repeat does not follow its kept token" + where);
        }
        break;
      case Origin::kInserted:
        if (o.clean_index != -1) {
          throw IntegrityError("inserted token claims a clean index" + where);
        }
        break;
    }
  }
  if (accounted + record.num_clean_deletions != clean.size()) {
    throw IntegrityError("noise record does not account for every clean token");
  }
}

}  // namespace

WordEditTrace trace_from_noise(std::span<const std::string> noisy,
                               std::span<const std::string> clean,
                               const NoiseRecord& record) {
  validate_record(noisy, clean, record);
  WordEditTrace trace;
  if (std::equal(noisy.begin(), noisy.end(), clean.begin(), clean.end())) {
    return trace;
  }

  DelMask mask(noisy.size(), 0);
  std::vector<int> present;
  for (std::size_t k = 0; k < noisy.size(); ++k) {
    if (record.origins[k].kind == Origin::kKept) {
      present.push_back(record.origins[k].clean_index);
    } else {
      mask[k] = 1;
    }
  }

  const int n = static_cast<int>(clean.size());
  bool first = true;
  while (true) {
    WordEditRound round;
    round.del_mask = first ? mask : DelMask(present.size(), 0);
    round.ins_labels.assign(present.size() + 1, std::string());
    std::vector<int> next;
    next.reserve(clean.size());
    for (std::size_t j = 0; j <= present.size(); ++j) {
      const int lo = j == 0 ? 0 : present[j - 1] + 1;
      const int hi = j == present.size() ? n - 1 : present[j] - 1;
      if (lo <= hi) {
        const int mid = lo + (hi - lo + 1) / 2;
        round.ins_labels[j] = clean[static_cast<std::size_t>(mid)];
        next.push_back(mid);
      }
      if (j < present.size()) next.push_back(present[j]);
    }
    if (round.is_identity()) break;
    trace.rounds.push_back(std::move(round));
    present = std::move(next);
    first = false;
  }
  return trace;
}

EditRound encode_round(const WordEditRound& round, const textops::Vocab& vocab) {
  EditRound out;
  out.del_mask = round.del_mask;
  out.ins_labels.reserve(round.ins_labels.size());
  for (const auto& l : round.ins_labels) {
    out.ins_labels.push_back(l.empty() ? textops::kEmpty : vocab.lookup(l));
  }
  return out;
}

EditTrace encode_trace(const WordEditTrace& trace, const textops::Vocab& vocab) {
  EditTrace out;
  for (const auto& r : trace.rounds) out.rounds.push_back(encode_round(r, vocab));
  return out;
}

WordEditRound decode_round(const EditRound& round, const textops::Vocab& vocab) {
  WordEditRound out;
  out.del_mask = round.del_mask;
  out.ins_labels.reserve(round.ins_labels.size());
  for (TokenId l : round.ins_labels) {
    out.ins_labels.push_back(l == textops::kEmpty ? std::string()
                                                  : vocab.surface(l));
  }
  return out;
}

WordEditTrace decode_trace(const EditTrace& trace, const textops::Vocab& vocab) {
  WordEditTrace out;
  for (const auto& r : trace.rounds) out.rounds.push_back(decode_round(r, vocab));
  return out;
}

std::string mask_to_string(std::span<const std::uint8_t> mask) {
  std::string s;
  s.reserve(mask.size());
  for (auto b : mask) s.push_back(b ? '1' : '0');
  return s;
}

DelMask mask_from_string(std::string_view bits) {
  DelMask mask;
  mask.reserve(bits.size());
  for (char c : bits) {
    if (c != '0' && c != '1') {
      throw InputError("deletion mask must be a string of 0/1: " +
                       std::string(bits));
    }
    mask.push_back(c == '1');
  }
  return mask;
}

nlohmann::json trace_to_json(const WordEditTrace& trace) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : trace.rounds) {
    rounds.push_back({{"del", mask_to_string(r.del_mask)}, {"ins", r.ins_labels}});
  }
  return rounds;
}

WordEditTrace trace_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InputError("trace must be a JSON array of rounds");
  WordEditTrace trace;
  for (const auto& r : j) {
    if (!r.is_object() || !r.contains("del") || !r.contains("ins")) {
      throw InputError("trace round needs \"del\" and \"ins\" fields");
    }
    WordEditRound round;
    round.del_mask = mask_from_string(r.at("del").get<std::string>());
    round.ins_labels = r.at("ins").get<std::vector<std::string>>();
    const std::size_t kept = round.del_mask.size() - round.num_deletions();
    if (round.ins_labels.size() != kept + 1) {
      throw InputError("trace round has " + std::to_string(round.ins_labels.size()) +
                       " insertion labels for " + std::to_string(kept) +
                       " surviving tokens");
    }
    trace.rounds.push_back(std::move(round));
  }
  return trace;
}

}  // namespace secoco::editsup
