#ifndef SECOCO_CORPUS_HPP_
#define SECOCO_CORPUS_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "secoco/common.hpp"
#include "secoco/editsup.hpp"

namespace secoco {

// One JSON-lines record: {"clean": [...], "noisy": [...], "target": [...],
// "trace": [rounds]} with tokens as surface strings. "edit" is set for
// single-edit evaluation splits.
struct CorpusRecord {
  Words clean;
  Words noisy;
  Words target;
  editsup::WordEditTrace trace;
  std::string edit;

  bool operator==(const CorpusRecord&) const = default;
};

struct Corpus {
  nlohmann::json header;  // provenance, written as the first line {"header": ...}
  std::vector<CorpusRecord> records;
};

nlohmann::json record_to_json(const CorpusRecord& r);
CorpusRecord record_from_json(const nlohmann::json& j);

void write_corpus(const std::filesystem::path& path, const Corpus& corpus);
// Reads records; a leading {"header": ...} line is optional. Verifies that
// every trace replays its noisy side to the clean side.
Corpus read_corpus(const std::filesystem::path& path);

// Plain text, one sentence per line.
std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace secoco

#endif  // SECOCO_CORPUS_HPP_
