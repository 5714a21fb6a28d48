#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

#include "msea/error.hpp"

namespace msea::model {

/// Architecture sizes and feature switches.
///
/// `use_claims` and `use_spec` select the dual-source variant: both (default),
/// specification only, or claims only. The pointer, coverage and slave switches
/// drive both which parameters exist and which forward paths run.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embedding = 256;
  std::size_t hidden_master = 256;
  std::size_t hidden_slave = 256;
  std::size_t hidden_decoder = 256;
  std::size_t content = 256;
  std::size_t attention = 256;
  std::size_t K = 100;
  std::size_t max_out = 100;
  double lambda = 1.0;
  double dropout = 0.5;
  double init_range = 0.05;
  bool pointer = true;
  bool coverage = true;
  bool slave = true;
  bool use_claims = true;
  bool use_spec = true;
  /// Separate matrices for the two bilinear terms of the importance gate.
  bool untie_ws = false;
  /// Partial content from the mean master state instead of decoded states.
  bool cd_from_source = false;

  [[nodiscard]] std::size_t source_width() const { return 2 * hidden_master; }

  /// Claims feed the model only through the slave gate, and only when the
  /// specification holds the source position.
  [[nodiscard]] bool claims_encoder() const { return slave && use_claims && use_spec; }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(vocab_size, "vocab_size");
    positive(embedding, "embedding");
    positive(hidden_master, "hidden_master");
    positive(hidden_slave, "hidden_slave");
    positive(hidden_decoder, "hidden_decoder");
    positive(content, "content");
    positive(attention, "attention");
    positive(K, "K");
    positive(max_out, "max_out");
    if (vocab_size <= 4) throw ConfigError("vocab_size must exceed the 4 reserved ids");
    if (!use_claims && !use_spec) throw ConfigError("at least one of use_claims/use_spec must be set");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
    if (!(init_range > 0.0)) throw ConfigError("init_range must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},   {"embedding", c.embedding},
          {"hidden_master", c.hidden_master}, {"hidden_slave", c.hidden_slave},
          {"hidden_decoder", c.hidden_decoder}, {"content", c.content},
          {"attention", c.attention},     {"K", c.K},
          {"max_out", c.max_out},         {"lambda", c.lambda},
          {"dropout", c.dropout},         {"init_range", c.init_range},
          {"pointer", c.pointer},         {"coverage", c.coverage},
          {"slave", c.slave},             {"use_claims", c.use_claims},
          {"use_spec", c.use_spec},       {"untie_ws", c.untie_ws},
          {"cd_from_source", c.cd_from_source}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embedding = j.at("embedding").get<std::size_t>();
    c.hidden_master = j.at("hidden_master").get<std::size_t>();
    c.hidden_slave = j.at("hidden_slave").get<std::size_t>();
    c.hidden_decoder = j.at("hidden_decoder").get<std::size_t>();
    c.content = j.at("content").get<std::size_t>();
    c.attention = j.at("attention").get<std::size_t>();
    c.K = j.at("K").get<std::size_t>();
    c.max_out = j.at("max_out").get<std::size_t>();
    c.lambda = j.at("lambda").get<double>();
    c.dropout = j.at("dropout").get<double>();
    c.init_range = j.at("init_range").get<double>();
    c.pointer = j.at("pointer").get<bool>();
    c.coverage = j.at("coverage").get<bool>();
    c.slave = j.at("slave").get<bool>();
    c.use_claims = j.at("use_claims").get<bool>();
    c.use_spec = j.at("use_spec").get<bool>();
    c.untie_ws = j.at("untie_ws").get<bool>();
    c.cd_from_source = j.at("cd_from_source").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model config: ") + e.what());
  }
  return c;
}

}  // namespace msea::model
