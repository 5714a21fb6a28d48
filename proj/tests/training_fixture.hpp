#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "msea/corpus/pipeline.hpp"
#include "msea/corpus/synthetic.hpp"
#include "msea/training/dataset.hpp"
#include "msea/training/trainer.hpp"

namespace msea::testing {

inline training::Dataset synthetic_dataset(std::size_t n, std::uint64_t seed = 3,
                                           const corpus::SyntheticGrammar& grammar = {}) {
  corpus::PreprocessOptions po;
  po.tokenizer = corpus::TokenizerMode::whitespace;
  po.seed = seed;
  auto prep = corpus::prepare_corpus(corpus::generate_synthetic(n, seed, grammar), po);
  training::Dataset ds;
  ds.vocab = prep.vocab;
  ds.tokenizer = po.tokenizer;
  ds.train = std::move(prep.split.train);
  ds.validation = std::move(prep.split.validation);
  ds.test = std::move(prep.split.test);
  return ds;
}

/// A model small enough for unit tests to train in well under a second per epoch.
inline training::TrainConfig tiny_train_config(const training::Dataset& ds, std::size_t width = 8) {
  training::TrainConfig cfg;
  auto& m = cfg.model;
  m.vocab_size = ds.vocab.size();
  m.embedding = m.content = m.attention = width;
  m.hidden_master = m.hidden_slave = m.hidden_decoder = width;
  m.K = 3;
  m.max_out = 30;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  cfg.patience = 0;
  cfg.seed = 11;
  return cfg;
}

inline training::Trainer make_trainer(const training::Dataset& ds, const training::TrainConfig& cfg) {
  return {cfg, ds.vocab, training::encode_for(ds.train, ds.vocab, ds.tokenizer, cfg),
          training::encode_for(ds.validation, ds.vocab, ds.tokenizer, cfg)};
}

/// Fresh scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("msea-" + tag + "-" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace msea::testing
