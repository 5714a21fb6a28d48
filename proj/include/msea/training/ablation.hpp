#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "msea/error.hpp"
#include "msea/rouge/rouge.hpp"
#include "msea/training/dataset.hpp"
#include "msea/training/trainer.hpp"

namespace msea::training {

/// Feature switches of one ablation variant.
struct Variant {
  std::string name = "full";
  bool coverage = true;
  bool slave = true;
  bool pointer = true;
  bool use_spec = true;
  bool use_claims = true;

  [[nodiscard]] model::ModelConfig apply(model::ModelConfig cfg) const {
    cfg.coverage = coverage;
    cfg.slave = slave;
    cfg.pointer = pointer;
    cfg.use_spec = use_spec;
    cfg.use_claims = use_claims;
    return cfg;
  }
};

/// Parses "full", "-coverage", "-slave", "-pointer", "spec-only", "claims-only",
/// "seq2seq" (all three mechanisms off), or '+'-joined combinations such as
/// "-coverage+-pointer".
inline Variant parse_variant(const std::string& spec) {
  Variant v;
  v.name = spec;
  std::istringstream in(spec);
  std::string part;
  bool any = false;
  while (std::getline(in, part, '+')) {
    any = true;
    if (part == "full" || part == "both") continue;
    if (part == "-coverage") {
      v.coverage = false;
    } else if (part == "-slave") {
      v.slave = false;
    } else if (part == "-pointer") {
      v.pointer = false;
    } else if (part == "seq2seq") {
      v.coverage = v.slave = v.pointer = false;
    } else if (part == "spec-only") {
      v.use_claims = false;
    } else if (part == "claims-only") {
      v.use_spec = false;
    } else {
      throw ConfigError("unknown ablation variant '" + part +
                        "' (expected full, -coverage, -slave, -pointer, seq2seq, spec-only, claims-only)");
    }
  }
  if (!any) throw ConfigError("empty ablation variant");
  if (!v.use_spec && !v.use_claims) throw ConfigError("variant " + spec + " removes both sources");
  return v;
}

/// Fraction of bigrams that repeat an earlier bigram of the same sequence, pooled
/// over all sequences.
inline double repeated_bigram_rate(const std::vector<std::vector<std::string>>& sequences) {
  std::size_t total = 0, repeated = 0;
  for (const auto& s : sequences) {
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t i = 1; i < s.size(); ++i) {
      ++total;
      if (!seen.emplace(s[i - 1], s[i]).second) ++repeated;
    }
  }
  return total ? static_cast<double>(repeated) / static_cast<double>(total) : 0.0;
}

struct AblationRow {
  Variant variant;
  rouge::CorpusScores scores;
  double repeat_rate = 0;
  double train_loss = 0;
  std::size_t parameters = 0;
  std::size_t epochs = 0;
};

/// Trains one model per variant with the same seed and data, selects each by
/// validation score and evaluates it on `eval_split`.
inline std::vector<AblationRow> run_ablation(const Dataset& ds, const TrainConfig& base,
                                             const std::vector<std::string>& variants,
                                             const std::string& eval_split = "validation",
                                             const std::function<void(const std::string&)>& progress = {}) {
  std::vector<AblationRow> rows;
  for (const auto& name : variants) {
    AblationRow row;
    row.variant = parse_variant(name);
    TrainConfig cfg = base;
    cfg.model = row.variant.apply(base.model);
    const auto vocab = run_vocabulary(ds, cfg);
    cfg.model.vocab_size = vocab.size();
    Trainer trainer(cfg, vocab, encode_for(ds.train, vocab, ds.tokenizer, cfg),
                    encode_for(ds.validation, vocab, ds.tokenizer, cfg));
    auto result = trainer.run();
    const auto examples = encode_for(ds.split(eval_split), vocab, ds.tokenizer, cfg);
    const auto decoded = decode_all(result.best_params, cfg.model, examples, vocab);
    row.scores = score_decodes(decoded, examples);
    row.repeat_rate = repeated_bigram_rate(decoded.tokens);
    row.train_loss = result.history.empty() ? 0.0 : result.history.back().train_loss;
    row.parameters = result.best_params.count();
    row.epochs = result.history.size();
    if (progress) progress(name);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// ROUGE table followed by one repetition line per variant.
inline std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::vector<rouge::TableRow> table;
  for (const auto& r : rows) table.push_back(rouge::table_row(r.variant.name, r.scores));
  std::ostringstream os;
  os << rouge::format_table(table) << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    os << r.variant.name << ": repeated_bigram_rate=" << r.repeat_rate << " parameters=" << r.parameters
       << " epochs=" << r.epochs << '\n';
  }
  return os.str();
}

}  // namespace msea::training
