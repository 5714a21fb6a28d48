#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msea/corpus/encode.hpp"
#include "msea/corpus/split.hpp"
#include "msea/corpus/vocab.hpp"
#include "msea/error.hpp"
#include "msea/model/decode.hpp"
#include "msea/model/decoder.hpp"
#include "msea/model/encoders.hpp"
#include "msea/model/params.hpp"
#include "msea/numerics/adam.hpp"
#include "msea/rouge/rouge.hpp"
#include "msea/training/checkpoint.hpp"
#include "msea/training/config.hpp"
#include "msea/training/dataset.hpp"

namespace msea::training {

using Params = model::ModelParams<double>;
using Examples = std::vector<corpus::EncodedExample>;

/// Summed loss over some examples; `mean()` is the per-token objective.
struct LossSum {
  double total = 0;
  double nll = 0;
  double coverage = 0;
  std::size_t tokens = 0;
  std::vector<double> per_example;

  [[nodiscard]] double mean() const { return tokens ? total / static_cast<double>(tokens) : 0.0; }
};

inline std::size_t target_tokens(const corpus::EncodedExample& ex, const model::ModelConfig& cfg) {
  return (cfg.pointer ? ex.summary_extended_ids : ex.summary_ids).size();
}

/// Adds the gradient of (1/T)·Σ example losses to every parameter's grad buffer,
/// T being the batch's target token count. Examples are run one at a time, so no
/// padding or masking is involved. Gradients must be enabled on `params`.
inline LossSum accumulate_gradients(Params& params, const model::ModelConfig& cfg,
                                    std::span<const corpus::EncodedExample* const> batch, std::mt19937_64* rng) {
  LossSum sum;
  for (const auto* ex : batch) sum.tokens += target_tokens(*ex, cfg);
  if (sum.tokens == 0) throw DataError("batch has no target tokens");
  const double seed = 1.0 / static_cast<double>(sum.tokens);
  for (const auto* ex : batch) {
    num::Tape<double> tape;
    const model::Bound<double> p(tape, params);
    const auto loss = model::example_loss(p, cfg, *ex, rng);
    const double value = loss.total.item();
    if (!std::isfinite(value)) {
      throw DivergenceError("non-finite loss on example " + ex->publication_number);
    }
    tape.backward(loss.total, seed);
    sum.total += value;
    sum.nll += loss.nll;
    sum.coverage += loss.coverage;
    sum.per_example.push_back(value);
  }
  return sum;
}

/// Evaluation-mode loss (no dropout, no gradients).
inline LossSum step_loss(Params& params, const model::ModelConfig& cfg,
                         std::span<const corpus::EncodedExample> examples) {
  auto eval = cfg;
  eval.dropout = 0.0;
  LossSum sum;
  for (const auto& ex : examples) {
    num::Tape<double> tape(false);
    const model::Bound<double> p(tape, params);
    const auto loss = model::example_loss(p, eval, ex, nullptr);
    sum.total += loss.total.item();
    sum.nll += loss.nll;
    sum.coverage += loss.coverage;
    sum.tokens += loss.tokens;
    sum.per_example.push_back(loss.total.item());
  }
  return sum;
}

struct Decoded {
  std::vector<std::vector<std::string>> tokens;
  std::vector<model::DecodeResult> results;
};

inline Decoded decode_all(Params& params, const model::ModelConfig& cfg, const Examples& examples,
                          const corpus::Vocabulary& vocab, const model::DecodeOptions& opts = {}) {
  Decoded out;
  for (const auto& ex : examples) {
    out.results.push_back(model::decode_sequence(params, cfg, ex, opts));
    out.tokens.push_back(model::decoded_tokens(out.results.back().ids, vocab, ex));
  }
  return out;
}

inline rouge::CorpusScores score_decodes(const Decoded& decoded, const Examples& examples) {
  std::vector<std::vector<std::string>> refs;
  for (const auto& ex : examples) refs.push_back(ex.reference_tokens);
  return rouge::evaluate_corpus(decoded.tokens, refs);
}

struct Evaluation {
  LossSum loss;
  rouge::CorpusScores rouge;
  Decoded decoded;
};

inline Evaluation evaluate(Params& params, const model::ModelConfig& cfg, const Examples& examples,
                           const corpus::Vocabulary& vocab, std::size_t beam = 1) {
  Evaluation e;
  if (examples.empty()) return e;
  e.loss = step_loss(params, cfg, examples);
  e.decoded = decode_all(params, cfg, examples, vocab, {beam, 0});
  e.rouge = score_decodes(e.decoded, examples);
  return e;
}

/// One line of the metric log.
struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_r1 = 0;
  double val_r2 = 0;
  double val_rl = 0;
  bool best = false;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},   {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"val_r1", r.val_r1},
          {"val_r2", r.val_r2}, {"val_rl", r.val_rl},         {"best", r.best}};
}

inline EpochRecord epoch_record_from_json(const nlohmann::json& j) {
  return {j.at("epoch").get<std::size_t>(), j.at("train_loss").get<double>(), j.at("val_loss").get<double>(),
          j.at("val_r1").get<double>(),     j.at("val_r2").get<double>(),     j.at("val_rl").get<double>(),
          j.at("best").get<bool>()};
}

/// "epoch=3 train_loss=... val_loss=... val_r1=... val_r2=... val_rl=..." with
/// round-trippable precision.
inline std::string format_log_line(const EpochRecord& r) {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch=" << r.epoch << " train_loss=" << r.train_loss << " val_loss=" << r.val_loss
     << " val_r1=" << r.val_r1 << " val_r2=" << r.val_r2 << " val_rl=" << r.val_rl << " best=" << (r.best ? 1 : 0);
  return os.str();
}

/// Derives independent streams from one run seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Example order of a given (1-based) epoch. Depends only on the seed and epoch, so a
/// resumed run sees the same order.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  return corpus::seeded_permutation(n, mix_seed(seed, 1000 + epoch));
}

struct TrainOptions {
  /// Checkpoints and the metric log go here; empty keeps everything in memory.
  std::filesystem::path out_dir;
  /// Epoch checkpoints retained besides last.ckpt and the best one; 0 keeps all.
  std::size_t keep_checkpoints = 0;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Stops (as if interrupted) after this many batches in this call; 0 runs to the end.
  std::size_t stop_after_batches = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  Params best_params;
  /// State after the last applied batch; resuming from it continues the run.
  Checkpoint last;
  bool stopped_early = false;
  bool interrupted = false;
};

/// Teacher-forced training with Adam, global-norm clipping and validation-based
/// model selection (ROUGE-L, ties to lower validation loss).
class Trainer {
 public:
  Trainer(TrainConfig cfg, corpus::Vocabulary vocab, Examples train, Examples validation)
      : cfg_(std::move(cfg)), vocab_(std::move(vocab)), train_(std::move(train)), val_(std::move(validation)) {
    if (train_.empty()) throw DataError("training split is empty");
    if (cfg_.model.vocab_size != vocab_.size()) {
      throw ConfigError("model vocab_size " + std::to_string(cfg_.model.vocab_size) + " differs from vocabulary size " +
                        std::to_string(vocab_.size()));
    }
    cfg_.validate();
  }

  /// Fresh state: parameters drawn from U[-init_range, init_range] with the run seed.
  [[nodiscard]] Checkpoint initial_state() const {
    Checkpoint ck;
    ck.config = cfg_;
    ck.params = Params(cfg_.model);
    ck.params.initialize(mix_seed(cfg_.seed, 0), cfg_.model.init_range);
    ck.adam.learning_rate = cfg_.learning_rate;
    std::mt19937_64 rng(mix_seed(cfg_.seed, 1));
    std::ostringstream os;
    os << rng;
    ck.rng_state = os.str();
    return ck;
  }

  TrainResult run(const TrainOptions& opts = {}) { return run(initial_state(), opts); }

  TrainResult run(Checkpoint state, const TrainOptions& opts) {
    if (auto c = config_conflicts(state.config.model, cfg_.model); !c.empty()) {
      throw ConfigError("resume state was trained with a different model: " + c.front());
    }
    state.config = cfg_;
    if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);
    Progress prog = Progress::from_json(state.progress);
    TrainResult result;
    result.history = prog.history;
    result.best_epoch = prog.best_epoch;
    result.best_params = state.params;
    if (prog.best_epoch > 0 && !opts.out_dir.empty()) {
      const auto best = opts.out_dir / checkpoint_name(prog.best_epoch);
      if (std::filesystem::exists(best)) result.best_params = load_checkpoint(best).params;
    }

    std::mt19937_64 rng;
    {
      std::istringstream is(state.rng_state);
      is >> rng;
      if (!is) throw FormatError("unreadable generator state in training checkpoint");
    }
    Params& params = state.params;
    params.enable_grad();
    const auto tensors = params.tensors();
    const std::size_t n = train_.size();
    const std::size_t batches = (n + cfg_.batch_size - 1) / cfg_.batch_size;
    std::size_t applied = 0;

    for (std::size_t epoch = state.epoch + 1; epoch <= cfg_.epochs; ++epoch) {
      const auto order = epoch_order(n, cfg_.seed, epoch);
      for (std::size_t b = state.batch; b < batches; ++b) {
        std::vector<const corpus::EncodedExample*> batch;
        for (std::size_t k = b * cfg_.batch_size; k < std::min(n, (b + 1) * cfg_.batch_size); ++k) {
          batch.push_back(&train_[order[k]]);
        }
        params.zero_grad();
        LossSum loss;
        try {
          loss = accumulate_gradients(params, cfg_.model, batch, &rng);
          if (cfg_.clip_norm > 0) num::clip_grad_norm<double>(tensors, cfg_.clip_norm);
          num::adam_step<double>(tensors, state.adam);
        } catch (const NonFiniteError& e) {
          throw DivergenceError(divergence_message(opts, epoch, e.what()));
        } catch (const DivergenceError& e) {
          throw DivergenceError(divergence_message(opts, epoch, e.what()));
        }
        prog.epoch_loss += loss.total;
        prog.epoch_tokens += loss.tokens;
        state.batch = b + 1;
        if (opts.stop_after_batches > 0 && ++applied == opts.stop_after_batches && state.batch < batches) {
          state.progress = prog.to_json();
          state.rng_state = serialize(rng);
          if (!opts.out_dir.empty()) save_checkpoint(opts.out_dir / "last.ckpt", state);
          result.last = std::move(state);
          result.interrupted = true;
          return result;
        }
      }

      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = prog.epoch_tokens ? prog.epoch_loss / static_cast<double>(prog.epoch_tokens) : 0.0;
      const auto val = evaluate(params, cfg_.model, val_, vocab_, cfg_.val_beam);
      rec.val_loss = val.loss.mean();
      rec.val_r1 = val.rouge.r1.f1;
      rec.val_r2 = val.rouge.r2.f1;
      rec.val_rl = val.rouge.rl.f1;
      // Without validation data the training loss drives selection.
      const double loss_key = val_.empty() ? rec.train_loss : rec.val_loss;
      const bool improved = prog.best_epoch == 0 || rec.val_rl > prog.best_rl + 1e-12 ||
                            (rec.val_rl >= prog.best_rl - 1e-12 && loss_key < prog.best_loss);
      if (improved) {
        prog.best_epoch = epoch;
        prog.best_rl = std::max(prog.best_rl, rec.val_rl);
        prog.best_loss = loss_key;
        prog.stale = 0;
        rec.best = true;
        result.best_epoch = epoch;
        result.best_params = params;
      } else {
        ++prog.stale;
      }
      prog.history.push_back(rec);
      prog.epoch_loss = 0;
      prog.epoch_tokens = 0;
      state.epoch = epoch;
      state.batch = 0;
      state.progress = prog.to_json();
      state.rng_state = serialize(rng);
      result.history.push_back(rec);

      if (!opts.out_dir.empty()) write_epoch_files(opts, state, rec, prog);
      if (opts.on_epoch) opts.on_epoch(rec);
      if (cfg_.patience > 0 && prog.stale >= cfg_.patience) {
        result.stopped_early = true;
        break;
      }
    }
    result.last = std::move(state);
    return result;
  }

  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  [[nodiscard]] const corpus::Vocabulary& vocabulary() const { return vocab_; }

  static std::string checkpoint_name(std::size_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch-%04zu.ckpt", epoch);
    return buf;
  }

 private:
  struct Progress {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_rl = -1;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    double epoch_loss = 0;
    std::size_t epoch_tokens = 0;

    [[nodiscard]] nlohmann::json to_json() const {
      nlohmann::json h = nlohmann::json::array();
      for (const auto& r : history) h.push_back(training::to_json(r));
      return {{"history", h},
              {"best_epoch", best_epoch},
              {"best_rl", best_rl},
              {"best_loss", std::isfinite(best_loss) ? nlohmann::json(best_loss) : nlohmann::json(nullptr)},
              {"stale", stale},
              {"epoch_loss", epoch_loss},
              {"epoch_tokens", epoch_tokens}};
    }
    static Progress from_json(const nlohmann::json& j) {
      Progress p;
      if (!j.is_object() || j.empty()) return p;
      try {
        for (const auto& r : j.at("history")) p.history.push_back(epoch_record_from_json(r));
        p.best_epoch = j.at("best_epoch").get<std::size_t>();
        p.best_rl = j.at("best_rl").get<double>();
        if (!j.at("best_loss").is_null()) p.best_loss = j.at("best_loss").get<double>();
        p.stale = j.at("stale").get<std::size_t>();
        p.epoch_loss = j.at("epoch_loss").get<double>();
        p.epoch_tokens = j.at("epoch_tokens").get<std::size_t>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed training progress in checkpoint: ") + e.what());
      }
      return p;
    }
  };

  static std::string serialize(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
  }

  static std::string divergence_message(const TrainOptions& opts, std::size_t epoch, const std::string& what) {
    std::string msg = "training diverged in epoch " + std::to_string(epoch) + ": " + what;
    if (!opts.out_dir.empty() && epoch > 1) {
      msg += "; last good checkpoint " + (opts.out_dir / checkpoint_name(epoch - 1)).string();
    }
    return msg;
  }

  void write_epoch_files(const TrainOptions& opts, const Checkpoint& state, const EpochRecord& rec,
                         const Progress& prog) const {
    const auto& dir = opts.out_dir;
    save_checkpoint(dir / checkpoint_name(rec.epoch), state);
    std::filesystem::copy_file(dir / checkpoint_name(rec.epoch), dir / "last.ckpt",
                               std::filesystem::copy_options::overwrite_existing);
    // Rewritten from the recorded history, so a resumed run leaves one line per epoch.
    std::ostringstream log;
    for (const auto& r : prog.history) log << format_log_line(r) << '\n';
    write_text(dir / "metrics.log", log.str());
    if (rec.best) {
      const nlohmann::json marker{{"epoch", rec.epoch},
                                  {"checkpoint", checkpoint_name(rec.epoch)},
                                  {"val_rl", rec.val_rl},
                                  {"val_loss", rec.val_loss}};
      write_text(dir / "best.json", marker.dump(2) + "\n");
    }
    if (opts.keep_checkpoints > 0 && rec.epoch > opts.keep_checkpoints) {
      const std::size_t old = rec.epoch - opts.keep_checkpoints;
      if (old != prog.best_epoch) std::filesystem::remove(dir / checkpoint_name(old));
    }
  }

  TrainConfig cfg_;
  corpus::Vocabulary vocab_;
  Examples train_;
  Examples val_;
};

/// Resolves a checkpoint argument: a file, or a run directory (its best marker).
inline std::filesystem::path resolve_checkpoint(const std::filesystem::path& p) {
  if (!std::filesystem::is_directory(p)) return p;
  const auto marker = p / "best.json";
  if (!std::filesystem::exists(marker)) return p / "last.ckpt";
  try {
    return p / nlohmann::json::parse(read_text(marker)).at("checkpoint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed " + marker.string() + ": " + e.what());
  }
}

}  // namespace msea::training
