#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "msea/corpus/encode.hpp"
#include "msea/corpus/pipeline.hpp"
#include "msea/corpus/record.hpp"
#include "msea/corpus/tokenize.hpp"
#include "msea/corpus/vocab.hpp"
#include "msea/error.hpp"
#include "msea/training/config.hpp"

namespace msea::training {

namespace fs = std::filesystem;

inline constexpr std::string_view kSplits[] = {"train", "validation", "test"};

/// Cleaned records of each split plus the vocabulary built from the training split.
struct Dataset {
  corpus::Vocabulary vocab;
  corpus::TokenizerMode tokenizer = corpus::TokenizerMode::char_cjk;
  std::vector<corpus::PatentRecord> train, validation, test;

  [[nodiscard]] const std::vector<corpus::PatentRecord>& split(std::string_view name) const {
    if (name == "train") return train;
    if (name == "validation" || name == "val") return validation;
    if (name == "test") return test;
    throw ConfigError("unknown split '" + std::string(name) + "' (expected train, validation or test)");
  }
};

/// A claims-only model reads the claims where the specification normally goes.
inline corpus::PatentRecord as_claims_only(corpus::PatentRecord r) {
  r.specification = std::move(r.claims);
  r.claims.clear();
  return r;
}

/// Encodes records the way a model with `cfg` consumes them.
inline std::vector<corpus::EncodedExample> encode_for(const std::vector<corpus::PatentRecord>& records,
                                                      const corpus::Vocabulary& vocab, corpus::TokenizerMode mode,
                                                      const TrainConfig& cfg) {
  const corpus::EncodeOptions opts{mode, cfg.max_in, cfg.model.max_out};
  const bool claims_only = !cfg.model.use_spec;
  std::vector<corpus::EncodedExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(corpus::encode_example(claims_only ? as_claims_only(r) : r, vocab, opts));
  return out;
}

/// Vocabulary of the dataset cut to the run's vocab_max.
inline corpus::Vocabulary run_vocabulary(const Dataset& ds, const TrainConfig& cfg) {
  return ds.vocab.size() > cfg.vocab_max ? ds.vocab.truncated(cfg.vocab_max) : ds.vocab;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes the standard layout and returns the written files in a fixed order:
///   vocab.tsv, dataset.json, {split}.records.jsonl (cleaned records),
///   {split}.jsonl (encoded with the default source settings), rejected.jsonl.
inline std::vector<fs::path> write_dataset(const fs::path& dir, const corpus::PreparedCorpus& prepared,
                                           const corpus::PreprocessOptions& opts,
                                           const corpus::EncodeOptions& encode = {}) {
  fs::create_directories(dir);
  std::vector<fs::path> written;
  {
    std::ostringstream os;
    prepared.vocab.write(os);
    write_text(dir / "vocab.tsv", os.str());
    written.push_back(dir / "vocab.tsv");
  }
  const nlohmann::json info{{"tokenizer", corpus::to_string(opts.tokenizer)},
                            {"vocab_max", opts.vocab_max},
                            {"min_count", opts.min_count},
                            {"seed", opts.seed},
                            {"max_in", encode.max_input},
                            {"max_out", encode.max_output},
                            {"vocab_size", prepared.vocab.size()},
                            {"train", prepared.split.train.size()},
                            {"validation", prepared.split.validation.size()},
                            {"test", prepared.split.test.size()},
                            {"rejected", prepared.rejected.size()}};
  write_text(dir / "dataset.json", info.dump(2) + "\n");
  written.push_back(dir / "dataset.json");

  auto enc_opts = encode;
  enc_opts.tokenizer = opts.tokenizer;
  const std::vector<corpus::PatentRecord>* parts[] = {&prepared.split.train, &prepared.split.validation,
                                                       &prepared.split.test};
  for (std::size_t k = 0; k < 3; ++k) {
    std::ostringstream records, encoded;
    corpus::write_records(records, *parts[k]);
    for (const auto& r : *parts[k]) encoded << corpus::to_json(corpus::encode_example(r, prepared.vocab, enc_opts)).dump() << '\n';
    const std::string name(kSplits[k]);
    write_text(dir / (name + ".records.jsonl"), records.str());
    write_text(dir / (name + ".jsonl"), encoded.str());
    written.push_back(dir / (name + ".records.jsonl"));
    written.push_back(dir / (name + ".jsonl"));
  }
  std::ostringstream rejected;
  for (const auto& r : prepared.rejected) {
    rejected << nlohmann::json{{"publication_number", r.publication_number}, {"error", r.reason}}.dump() << '\n';
  }
  write_text(dir / "rejected.jsonl", rejected.str());
  written.push_back(dir / "rejected.jsonl");
  return written;
}

inline Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
  Dataset ds;
  nlohmann::json info;
  try {
    info = nlohmann::json::parse(read_text(dir / "dataset.json"));
    ds.tokenizer = corpus::tokenizer_from_string(info.at("tokenizer").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed " + (dir / "dataset.json").string() + ": " + e.what());
  }
  {
    std::ifstream in(dir / "vocab.tsv");
    if (!in) throw DataError("cannot open " + (dir / "vocab.tsv").string());
    ds.vocab = corpus::Vocabulary::read(in);
  }
  std::vector<corpus::PatentRecord>* parts[] = {&ds.train, &ds.validation, &ds.test};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto path = dir / (std::string(kSplits[k]) + ".records.jsonl");
    auto result = corpus::read_records(path.string());
    if (!result.errors.empty()) {
      throw DataError(path.string() + " line " + std::to_string(result.errors[0].first) + ": " +
                      result.errors[0].second);
    }
    *parts[k] = std::move(result.records);
  }
  if (ds.train.empty()) throw DataError("dataset " + dir.string() + " has an empty training split");
  return ds;
}

}  // namespace msea::training
