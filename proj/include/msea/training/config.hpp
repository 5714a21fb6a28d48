#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "msea/error.hpp"
#include "msea/model/config.hpp"

namespace msea::training {

/// Model architecture plus optimization and data-shaping settings.
struct TrainConfig {
  model::ModelConfig model;
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  std::size_t epochs = 30;
  /// Epochs without validation improvement before stopping; 0 never stops early.
  std::size_t patience = 5;
  /// Global gradient-norm cap; 0 disables clipping.
  double clip_norm = 2.0;
  std::uint64_t seed = 1;
  /// Source truncation applied when encoding (the target cap is model.max_out).
  std::size_t max_in = 500;
  /// Vocabulary entries kept from the dataset vocabulary (reserved ids included).
  std::size_t vocab_max = 100000;
  /// Beam width of validation decodes.
  std::size_t val_beam = 1;

  void validate() const {
    model.validate();
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be nonnegative");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be nonnegative");
    if (max_in == 0) throw ConfigError("max_in must be positive");
    if (vocab_max <= 4) throw ConfigError("vocab_max must exceed the 4 reserved ids");
    if (val_beam == 0) throw ConfigError("val_beam must be positive");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"model", model::to_json(c.model)},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"patience", c.patience},
          {"clip_norm", c.clip_norm},
          {"seed", c.seed},
          {"max_in", c.max_in},
          {"vocab_max", c.vocab_max},
          {"val_beam", c.val_beam}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.model = model::model_config_from_json(j.at("model"));
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.max_in = j.at("max_in").get<std::size_t>();
    c.vocab_max = j.at("vocab_max").get<std::size_t>();
    c.val_beam = j.at("val_beam").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed training config: ") + e.what());
  }
  return c;
}

}  // namespace msea::training
