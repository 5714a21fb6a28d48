#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msea/error.hpp"

namespace msea::corpus {

/// One patent: the specification is the primary source, the claims the secondary
/// source, and the abstract the reference summary.
struct PatentRecord {
  std::string title;
  std::string publication_number;
  std::string abstract;
  std::string specification;
  std::string claims;

  friend bool operator==(const PatentRecord&, const PatentRecord&) = default;
};

inline nlohmann::json to_json(const PatentRecord& r) {
  return nlohmann::json{{"title", r.title},
                        {"publication_number", r.publication_number},
                        {"abstract", r.abstract},
                        {"specification", r.specification},
                        {"claims", r.claims}};
}

inline PatentRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  PatentRecord r;
  auto field = [&](const char* name, std::string& out) {
    auto it = j.find(name);
    if (it == j.end()) return;
    if (!it->is_string()) throw DataError(std::string("record field '") + name + "' is not a string");
    out = it->get<std::string>();
  };
  field("title", r.title);
  field("publication_number", r.publication_number);
  field("abstract", r.abstract);
  field("specification", r.specification);
  field("claims", r.claims);
  return r;
}

/// Result of reading a line-delimited record file: parsed records plus one
/// diagnostic per unreadable line.
struct RecordReadResult {
  std::vector<PatentRecord> records;
  std::vector<std::pair<std::size_t, std::string>> errors;  // (1-based line, message)
};

inline RecordReadResult read_records(std::istream& in) {
  RecordReadResult out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      out.errors.emplace_back(lineno, e.what());
    } catch (const DataError& e) {
      out.errors.emplace_back(lineno, e.what());
    }
  }
  return out;
}

inline RecordReadResult read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open record file " + path);
  return read_records(in);
}

inline void write_records(std::ostream& out, const std::vector<PatentRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

}  // namespace msea::corpus
