#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msea/error.hpp"
#include "msea/model/params.hpp"
#include "msea/numerics/adam.hpp"
#include "msea/training/config.hpp"

namespace msea::training {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are stored little-endian");

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'E', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training exactly where it stopped.
struct Checkpoint {
  TrainConfig config;
  model::ModelParams<double> params;
  num::AdamState<double> adam;
  /// Completed epochs.
  std::size_t epoch = 0;
  /// Batches already applied in epoch `epoch + 1`.
  std::size_t batch = 0;
  /// Serialized dropout generator.
  std::string rng_state;
  /// Trainer bookkeeping (metric history, best score, partial epoch sums).
  nlohmann::json progress = nlohmann::json::object();
};

inline std::uint64_t fnv1a(const char* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

/// Lists every field where two architectures disagree; empty when compatible.
inline std::vector<std::string> config_conflicts(const model::ModelConfig& have, const model::ModelConfig& want) {
  std::vector<std::string> out;
  const auto a = model::to_json(have), b = model::to_json(want);
  for (const auto& [key, value] : a.items()) {
    if (b.contains(key) && b.at(key) != value) out.push_back(key + " " + value.dump() + " vs " + b.at(key).dump());
  }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto& params = ck.params;
  const auto names = params.names();
  std::string payload;
  auto append = [&](const double* p, std::size_t n) {
    payload.append(reinterpret_cast<const char*>(p), n * sizeof(double));
  };
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& n : names) {
    const auto& t = params[n];
    tensors.push_back({{"name", n}, {"shape", t.shape().dims()}});
    append(t.data().data(), t.size());
  }
  const bool moments = !ck.adam.first_moment.empty();
  if (moments) {
    for (const auto& m : ck.adam.first_moment) append(m.data(), m.size());
    for (const auto& v : ck.adam.second_moment) append(v.data(), v.size());
  }
  nlohmann::json header{{"config", to_json(ck.config)},
                        {"epoch", ck.epoch},
                        {"batch", ck.batch},
                        {"rng", ck.rng_state},
                        {"progress", ck.progress},
                        {"adam",
                         {{"step", ck.adam.step},
                          {"learning_rate", ck.adam.learning_rate},
                          {"beta1", ck.adam.beta1},
                          {"beta2", ck.adam.beta2},
                          {"epsilon", ck.adam.epsilon},
                          {"moments", moments}}},
                        {"tensors", tensors},
                        {"payload_bytes", payload.size()},
                        {"checksum", fnv1a(payload.data(), payload.size())}};
  const std::string head = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint " + tmp.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t head_len = head.size();
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&head_len), sizeof head_len);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw FormatError("write failed for checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Reads a checkpoint. When `expect` is given, an architecture mismatch is a
/// ConfigError naming the conflicting fields.
inline Checkpoint load_checkpoint(const std::filesystem::path& path, const model::ModelConfig* expect = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t head_len = 0;
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kCheckpointVersion) {
    throw FormatError(path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  in.read(reinterpret_cast<char*>(&head_len), sizeof head_len);
  if (!in || head_len > (std::uint64_t{1} << 32)) throw FormatError(path.string() + ": corrupt header length");
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw FormatError(path.string() + ": truncated header");

  Checkpoint ck;
  nlohmann::json header;
  std::uint64_t bytes = 0, checksum = 0;
  try {
    header = nlohmann::json::parse(head);
    ck.config = train_config_from_json(header.at("config"));
    ck.epoch = header.at("epoch").get<std::size_t>();
    ck.batch = header.at("batch").get<std::size_t>();
    ck.rng_state = header.at("rng").get<std::string>();
    ck.progress = header.at("progress");
    const auto& a = header.at("adam");
    ck.adam.step = a.at("step").get<std::uint64_t>();
    ck.adam.learning_rate = a.at("learning_rate").get<double>();
    ck.adam.beta1 = a.at("beta1").get<double>();
    ck.adam.beta2 = a.at("beta2").get<double>();
    ck.adam.epsilon = a.at("epsilon").get<double>();
    bytes = header.at("payload_bytes").get<std::uint64_t>();
    checksum = header.at("checksum").get<std::uint64_t>();
    if (!header.at("tensors").is_array()) throw FormatError(path.string() + ": tensor directory is not a list");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }
  if (expect != nullptr) {
    if (auto c = config_conflicts(ck.config.model, *expect); !c.empty()) {
      std::string msg = "checkpoint " + path.string() + " conflicts with the requested model:";
      for (const auto& s : c) msg += " " + s + ";";
      throw ConfigError(msg);
    }
  }

  const auto remaining = std::filesystem::file_size(path) - static_cast<std::uint64_t>(in.tellg());
  if (bytes != remaining) throw FormatError(path.string() + ": payload is " + std::to_string(remaining) +
                                            " bytes, header says " + std::to_string(bytes));
  std::string payload(bytes, '\0');
  in.read(payload.data(), static_cast<std::streamsize>(bytes));
  if (!in || static_cast<std::uint64_t>(in.gcount()) != bytes) throw FormatError(path.string() + ": truncated payload");
  if (fnv1a(payload.data(), payload.size()) != checksum) {
    throw FormatError(path.string() + ": payload checksum mismatch");
  }

  ck.params = model::ModelParams<double>(ck.config.model);
  const auto names = ck.params.names();
  const auto& listed = header.at("tensors");
  if (listed.size() != names.size()) throw FormatError(path.string() + ": tensor count disagrees with its config");
  std::size_t offset = 0;
  auto take = [&](double* dst, std::size_t n) {
    const std::size_t len = n * sizeof(double);
    if (offset + len > payload.size()) throw FormatError(path.string() + ": payload shorter than its tensors");
    std::memcpy(dst, payload.data() + offset, len);
    offset += len;
  };
  for (std::size_t k = 0; k < names.size(); ++k) {
    auto& t = ck.params[names[k]];
    if (listed[k].at("name").get<std::string>() != names[k] ||
        listed[k].at("shape").get<std::vector<std::size_t>>() != t.shape().dims()) {
      throw FormatError(path.string() + ": tensor " + std::to_string(k) + " does not match " + names[k] + " " +
                        t.shape().str());
    }
    take(t.data().data(), t.size());
  }
  if (header.at("adam").at("moments").get<bool>()) {
    for (auto* moments : {&ck.adam.first_moment, &ck.adam.second_moment}) {
      for (const auto& n : names) {
        moments->emplace_back(ck.params[n].size());
        take(moments->back().data(), moments->back().size());
      }
    }
  }
  if (offset != payload.size()) throw FormatError(path.string() + ": trailing payload bytes");
  return ck;
}

}  // namespace msea::training
