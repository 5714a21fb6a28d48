#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "msea/error.hpp"
#include "msea/training/dataset.hpp"

namespace msea::cli {

namespace fs = std::filesystem;

/// SHA-1 of "blob <size>\0<content>", the id git gives the same file.
inline std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

inline std::string file_hash(const fs::path& p) { return git_blob_hash(training::read_text(p)); }

/// Hash over the sorted "<hash> <name>" lines of the files, so a set of files gets
/// one id that changes when any member does.
inline std::string combined_hash(const std::vector<fs::path>& files) {
  std::vector<std::string> lines;
  for (const auto& f : files) lines.push_back(file_hash(f) + " " + f.filename().string());
  std::sort(lines.begin(), lines.end());
  std::string all;
  for (const auto& l : lines) all += l + "\n";
  return git_blob_hash(all);
}

/// Vocabulary and dataset ids of a dataset directory.
inline nlohmann::json dataset_hashes(const fs::path& dir) {
  std::vector<fs::path> parts{dir / "dataset.json"};
  for (auto split : training::kSplits) parts.push_back(dir / (std::string(split) + ".records.jsonl"));
  return {{"vocab", file_hash(dir / "vocab.tsv")}, {"dataset", combined_hash(parts)}};
}

/// What one invocation did: enough to rerun it and to check its outputs.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  /// Files written, relative to the output directory.
  std::vector<fs::path> outputs;
  nlohmann::json artifact_hashes = nlohmann::json::object();
};

/// Writes `name` (manifest.json by default) into `dir` with the hash of every
/// listed output.
inline void write_manifest(const fs::path& dir, const RunManifest& m, const std::string& name = "manifest.json") {
  nlohmann::json outputs = nlohmann::json::object();
  for (const auto& o : m.outputs) {
    const auto full = o.is_absolute() ? o : dir / o;
    if (fs::exists(full)) outputs[fs::relative(full, dir).generic_string()] = file_hash(full);
  }
  const nlohmann::json j{{"subcommand", m.subcommand}, {"command", m.command},
                         {"config", m.config},         {"seed", m.seed},
                         {"inputs", m.inputs},         {"outputs", outputs},
                         {"artifact_hashes", m.artifact_hashes}};
  training::write_text(dir / name, j.dump(2) + "\n");
}

/// Manifest for a command whose main output is a single file: "<file>.manifest.json".
inline void write_manifest_beside(const fs::path& file, const RunManifest& m) {
  const auto abs = fs::absolute(file);
  write_manifest(abs.parent_path(), m, abs.filename().string() + ".manifest.json");
}

}  // namespace msea::cli
