#include "secoco/corpus.hpp"

#include <fstream>

namespace secoco {

nlohmann::json record_to_json(const CorpusRecord& r) {
  nlohmann::json j{{"clean", r.clean},
                   {"noisy", r.noisy},
                   {"target", r.target},
                   {"trace", editsup::trace_to_json(r.trace)}};
  if (!r.edit.empty()) j["edit"] = r.edit;
  return j;
}

CorpusRecord record_from_json(const nlohmann::json& j) {
  CorpusRecord r;
  try {
    r.clean = j.at("clean").get<Words>();
    r.noisy = j.at("noisy").get<Words>();
    r.target = j.at("target").get<Words>();
    r.trace = editsup::trace_from_json(j.at("trace"));
    r.edit = j.value("edit", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed corpus record: ") + e.what());
  }
  return r;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write corpus file: " + path.string());
  if (!corpus.header.is_null()) out << nlohmann::json{{"header", corpus.header}}.dump() << '\n';
  for (const auto& r : corpus.records) out << record_to_json(r).dump() << '\n';
  if (!out) throw InputError("failed writing corpus file: " + path.string());
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read corpus file: " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (j.contains("header")) {
      corpus.header = j["header"];
      continue;
    }
    auto r = record_from_json(j);
    try {
      if (editsup::replay<std::string>(r.noisy, r.trace) != r.clean) {
        throw InputError("trace does not replay noisy to clean");
      }
    } catch (const ContractError& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write file: " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw InputError("failed writing file: " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write file: " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read file: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace secoco
