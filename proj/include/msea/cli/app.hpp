#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "msea/cli/manifest.hpp"
#include "msea/corpus/pipeline.hpp"
#include "msea/corpus/synthetic.hpp"
#include "msea/error.hpp"
#include "msea/model/decode.hpp"
#include "msea/rouge/rouge.hpp"
#include "msea/training/ablation.hpp"
#include "msea/training/checkpoint.hpp"
#include "msea/training/dataset.hpp"
#include "msea/training/trainer.hpp"

namespace msea::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kDivergence = 4 };

inline constexpr const char* kDataDirEnv = "MSEA_DATA_DIR";

/// Model and optimization flags shared by train and ablate.
struct TrainArgs {
  training::TrainConfig cfg;
  std::size_t hidden = 0;
  std::optional<std::size_t> hidden_master, hidden_slave, hidden_decoder;
  bool no_pointer = false, no_coverage = false, no_slave = false;
  bool spec_only = false, claims_only = false;
  bool untie_ws = false, cd_from_source = false;

  [[nodiscard]] training::TrainConfig resolve() const {
    auto c = cfg;
    if (hidden > 0) c.model.hidden_master = c.model.hidden_slave = c.model.hidden_decoder = hidden;
    if (hidden_master) c.model.hidden_master = *hidden_master;
    if (hidden_slave) c.model.hidden_slave = *hidden_slave;
    if (hidden_decoder) c.model.hidden_decoder = *hidden_decoder;
    if (no_pointer) c.model.pointer = false;
    if (no_coverage) c.model.coverage = false;
    if (no_slave) c.model.slave = false;
    if (spec_only && claims_only) throw ConfigError("--spec-only and --claims-only exclude each other");
    if (spec_only) c.model.use_claims = false;
    if (claims_only) c.model.use_spec = false;
    c.model.untie_ws = untie_ws;
    c.model.cd_from_source = cd_from_source;
    return c;
  }
};

inline void add_train_options(CLI::App& app, TrainArgs& a) {
  auto& c = a.cfg;
  auto& m = c.model;
  app.add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  app.add_option("--batch-size", c.batch_size, "Examples per update")->capture_default_str();
  app.add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
  app.add_option("--patience", c.patience, "Stale epochs before stopping (0: never)")->capture_default_str();
  app.add_option("--clip-norm", c.clip_norm, "Global gradient-norm cap (0: off)")->capture_default_str();
  app.add_option("--seed", c.seed, "Run seed")->capture_default_str();
  app.add_option("--K", m.K, "Decoding steps between slave fusions")->capture_default_str();
  app.add_option("--hidden", a.hidden, "Set all three hidden sizes");
  app.add_option("--hidden-master", a.hidden_master, "Master encoder hidden size (overrides --hidden)");
  app.add_option("--hidden-slave", a.hidden_slave, "Slave encoder hidden size (overrides --hidden)");
  app.add_option("--hidden-decoder", a.hidden_decoder, "Decoder hidden size (overrides --hidden)");
  app.add_option("--embedding", m.embedding, "Embedding width")->capture_default_str();
  app.add_option("--content", m.content, "Content vector width d_c")->capture_default_str();
  app.add_option("--attention", m.attention, "Attention width")->capture_default_str();
  app.add_option("--max-in", c.max_in, "Source truncation")->capture_default_str();
  app.add_option("--max-out", m.max_out, "Summary length cap")->capture_default_str();
  app.add_option("--vocab-max", c.vocab_max, "Vocabulary entries kept")->capture_default_str();
  app.add_option("--lambda", m.lambda, "Coverage loss weight")->capture_default_str();
  app.add_option("--dropout", m.dropout, "Embedding dropout rate")->capture_default_str();
  app.add_option("--init-range", m.init_range, "Uniform initialization half-width")->capture_default_str();
  app.add_option("--val-beam", c.val_beam, "Beam width of validation decodes")->capture_default_str();
  app.add_flag("--no-pointer", a.no_pointer, "Drop the copy mechanism");
  app.add_flag("--no-coverage", a.no_coverage, "Drop coverage attention and loss");
  app.add_flag("--no-slave", a.no_slave, "Drop the slave encoder and claims");
  app.add_flag("--spec-only", a.spec_only, "Use the specification only");
  app.add_flag("--claims-only", a.claims_only, "Use the claims only");
  app.add_flag("--untie-ws", a.untie_ws, "Separate matrices for the two bilinear gate terms");
  app.add_flag("--cd-from-source", a.cd_from_source, "Partial content from master states");
}

/// Vocabulary and tokenizer a training run was made with; stored next to its
/// checkpoints.
struct RunContext {
  corpus::Vocabulary vocab;
  corpus::TokenizerMode tokenizer = corpus::TokenizerMode::char_cjk;
  fs::path data_dir;
};

inline void write_run_context(const fs::path& dir, const corpus::Vocabulary& vocab, corpus::TokenizerMode mode,
                              const fs::path& data_dir) {
  std::ostringstream os;
  vocab.write(os);
  training::write_text(dir / "vocab.tsv", os.str());
  const nlohmann::json j{{"tokenizer", corpus::to_string(mode)}, {"data_dir", fs::absolute(data_dir).string()}};
  training::write_text(dir / "run.json", j.dump(2) + "\n");
}

inline RunContext read_run_context(const fs::path& dir) {
  RunContext ctx;
  const auto info = dir / "run.json";
  if (!fs::exists(info)) throw DataError("no run.json beside the checkpoint in " + dir.string());
  try {
    const auto j = nlohmann::json::parse(training::read_text(info));
    ctx.tokenizer = corpus::tokenizer_from_string(j.at("tokenizer").get<std::string>());
    ctx.data_dir = j.at("data_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed " + info.string() + ": " + e.what());
  }
  std::ifstream in(dir / "vocab.tsv");
  if (!in) throw DataError("cannot open " + (dir / "vocab.tsv").string());
  ctx.vocab = corpus::Vocabulary::read(in);
  return ctx;
}

struct LoadedModel {
  training::Checkpoint ck;
  RunContext ctx;
  fs::path path;
};

inline LoadedModel load_model(const fs::path& arg) {
  LoadedModel m;
  m.path = training::resolve_checkpoint(arg);
  m.ck = training::load_checkpoint(m.path);
  m.ctx = read_run_context(m.path.parent_path());
  if (m.ck.config.model.vocab_size != m.ctx.vocab.size()) {
    throw FormatError("checkpoint vocabulary size " + std::to_string(m.ck.config.model.vocab_size) +
                      " differs from " + std::to_string(m.ctx.vocab.size()) + " entries in its vocab.tsv");
  }
  return m;
}

struct Invocation {
  std::vector<std::string> args;
  std::ostream& out;
  std::ostream& err;
};

inline std::vector<fs::path> relative_all(const std::vector<fs::path>& files, const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& f : files) out.push_back(fs::relative(f, dir));
  return out;
}

/// Cleans, splits and writes a dataset directory, then its manifest.
inline corpus::PreparedCorpus write_prepared(const std::vector<corpus::PatentRecord>& raw,
                                             std::vector<corpus::RejectedRecord> unreadable,
                                             const corpus::PreprocessOptions& po, const corpus::EncodeOptions& enc,
                                             const fs::path& out_dir, RunManifest manifest,
                                             const Invocation& inv) {
  auto prep = corpus::prepare_corpus(raw, po);
  prep.rejected.insert(prep.rejected.begin(), unreadable.begin(), unreadable.end());
  const auto files = training::write_dataset(out_dir, prep, po, enc);
  for (const auto& r : prep.rejected) inv.err << "rejected " << r.publication_number << ": " << r.reason << '\n';
  auto outputs = relative_all(files, out_dir);
  outputs.insert(outputs.end(), manifest.outputs.begin(), manifest.outputs.end());
  manifest.outputs = outputs;
  manifest.artifact_hashes = dataset_hashes(out_dir);
  write_manifest(out_dir, manifest);
  inv.out << "train=" << prep.split.train.size() << " validation=" << prep.split.validation.size()
          << " test=" << prep.split.test.size() << " rejected=" << prep.rejected.size()
          << " vocab=" << prep.vocab.size() << '\n';
  return prep;
}

inline nlohmann::json report_json(const std::string& name, const rouge::CorpusScores& s) {
  return {{"model", name}, {"scores", rouge::to_json(s)}};
}

inline rouge::TableRow row_from_report(const nlohmann::json& j) {
  auto score = [&](const char* key) {
    const auto& s = j.at("scores").at(key);
    return rouge::RougeScore{s.at("precision").get<double>(), s.at("recall").get<double>(), s.at("f1").get<double>()};
  };
  return {j.at("model").get<std::string>(), score("rouge-1"), score("rouge-2"), score("rouge-l")};
}

inline std::string join_args(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) s += (s.empty() ? "" : " ") + a;
  return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string part; std::getline(in, part, ',');) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

/// Reads "key=value" lines ('#' starts a comment) as "--key=value" flags.
inline std::vector<std::string> config_flags(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::vector<std::string> out;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(path.string() + " line " + std::to_string(lineno) + ": expected key=value");
    }
    auto key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

/// Splices the flags of a "--config FILE" argument in front of the command's own
/// flags, so anything given on the command line wins.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty()) return args;
  fs::path config;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty()) return args;
  std::vector<std::string> out{args.front()};
  const auto flags = config_flags(config);
  out.insert(out.end(), flags.begin(), flags.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

/// Runs one command line. Errors become messages on `err` and an exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const Invocation inv{args, out, err};
  CLI::App app{"Patent abstract summarization with a master-slave encoder"};
  app.name("msea");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  const std::vector<std::string> tokenizers{"char_cjk", "whitespace"};

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Clean, split 8:1:1 and index a raw record file");
  std::string pre_input, pre_out, pre_tok = "char_cjk";
  corpus::PreprocessOptions pre_po;
  corpus::EncodeOptions pre_enc;
  pre->add_option("--input", pre_input, "Line-delimited JSON records")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "Dataset directory")->required();
  pre->add_option("--tokenizer", pre_tok, "char_cjk or whitespace")->check(CLI::IsMember(tokenizers))->capture_default_str();
  pre->add_option("--seed", pre_po.seed, "Split seed")->capture_default_str();
  pre->add_option("--vocab-max", pre_po.vocab_max, "Vocabulary cap")->capture_default_str();
  pre->add_option("--min-count", pre_po.min_count, "Minimum token count")->capture_default_str();
  pre->add_option("--max-in", pre_enc.max_input, "Source truncation")->capture_default_str();
  pre->add_option("--max-out", pre_enc.max_output, "Summary truncation")->capture_default_str();

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a synthetic corpus in the dataset layout");
  std::size_t syn_n = 0;
  std::uint64_t syn_seed = 1;
  std::string syn_out;
  corpus::SyntheticGrammar grammar;
  corpus::PreprocessOptions syn_po;
  syn_po.tokenizer = corpus::TokenizerMode::whitespace;
  syn->add_option("--n", syn_n, "Number of records")->required()->check(CLI::PositiveNumber);
  syn->add_option("--seed", syn_seed, "Generator and split seed")->capture_default_str();
  syn->add_option("--out", syn_out, "Dataset directory")->required();
  syn->add_option("--repetition", grammar.repetition, "Probability of repeating the first sentence's frame")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  syn->add_option("--min-sentences", grammar.min_sentences, "Shortest specification")->capture_default_str();
  syn->add_option("--max-sentences", grammar.max_sentences, "Longest specification")->capture_default_str();
  syn->add_option("--key-terms", grammar.key_terms, "Distinct claims key terms")->capture_default_str();
  syn->add_option("--min-count", syn_po.min_count, "Minimum token count")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a dataset directory");
  TrainArgs ta;
  std::string tr_data, tr_out, tr_resume;
  std::size_t tr_keep = 0;
  std::string tr_config, ab_config;
  tr->add_option("--config", tr_config, "key=value file; command-line flags override it")->check(CLI::ExistingFile);
  tr->add_option("--data", tr_data, "Dataset directory")->envname(kDataDirEnv)->required();
  tr->add_option("--out", tr_out, "Run directory")->required();
  tr->add_option("--resume", tr_resume, "Checkpoint or run directory to continue from");
  tr->add_option("--keep-checkpoints", tr_keep, "Epoch checkpoints kept (0: all)")->capture_default_str();
  add_train_options(*tr, ta);

  // summarize
  auto* sum = app.add_subcommand("summarize", "Write summaries for a record file");
  std::string sum_ck, sum_input, sum_output, sum_trace;
  std::size_t sum_beam = 1;
  sum->add_option("--checkpoint", sum_ck, "Checkpoint or run directory")->required()->check(CLI::ExistingPath);
  sum->add_option("--input", sum_input, "Line-delimited JSON records")->required()->check(CLI::ExistingFile);
  sum->add_option("--output", sum_output, "Summary file (one per line); stdout when absent");
  sum->add_option("--beam", sum_beam, "Beam width (1: greedy)")->check(CLI::PositiveNumber)->capture_default_str();
  sum->add_option("--trace", sum_trace, "Per-token audit records (JSON lines)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "ROUGE of a checkpoint on a dataset split");
  std::string ev_ck, ev_data, ev_split = "test", ev_name = "MSEA", ev_json, ev_summaries;
  std::size_t ev_beam = 1;
  ev->add_option("--checkpoint", ev_ck, "Checkpoint or run directory")->required()->check(CLI::ExistingPath);
  ev->add_option("--data", ev_data, "Dataset directory (default: the one trained on)")->envname(kDataDirEnv);
  ev->add_option("--split", ev_split, "train, validation or test")->capture_default_str();
  ev->add_option("--name", ev_name, "Row label")->capture_default_str();
  ev->add_option("--beam", ev_beam, "Beam width")->check(CLI::PositiveNumber)->capture_default_str();
  ev->add_option("--json", ev_json, "Also write the report as JSON");
  ev->add_option("--summaries", ev_summaries, "Also write the decoded summaries");

  // rouge
  auto* rg = app.add_subcommand("rouge", "Score candidate summaries against references");
  std::string rg_c, rg_r, rg_tok = "char_cjk", rg_name = "candidates", rg_json;
  rg->add_option("--candidates", rg_c, "One summary per line")->required()->check(CLI::ExistingFile);
  rg->add_option("--references", rg_r, "One reference per line")->required()->check(CLI::ExistingFile);
  rg->add_option("--tokenizer", rg_tok, "char_cjk or whitespace")->check(CLI::IsMember(tokenizers))->capture_default_str();
  rg->add_option("--name", rg_name, "Row label")->capture_default_str();
  rg->add_option("--json", rg_json, "Also write the report as JSON");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and score several model variants");
  TrainArgs aa;
  std::string ab_data, ab_out, ab_variants = "full,-coverage,-slave,-pointer,seq2seq", ab_split = "validation";
  ab->add_option("--config", ab_config, "key=value file; command-line flags override it")->check(CLI::ExistingFile);
  ab->add_option("--data", ab_data, "Dataset directory")->envname(kDataDirEnv)->required();
  ab->add_option("--out", ab_out, "Output directory")->required();
  ab->add_option("--variants", ab_variants, "Comma-separated variants")->capture_default_str();
  ab->add_option("--split", ab_split, "Split scored")->capture_default_str();
  add_train_options(*ab, aa);

  // table
  auto* tb = app.add_subcommand("table", "Assemble JSON reports into one ROUGE table");
  std::vector<std::string> tb_reports;
  std::string tb_out;
  tb->add_option("reports", tb_reports, "Reports from evaluate/rouge --json")->required()->check(CLI::ExistingFile);
  tb->add_option("--out", tb_out, "Also write the table here");

  std::vector<std::string> argv_store{"msea"};
  try {
    const auto expanded = expand_config(args);
    argv_store.insert(argv_store.end(), expanded.begin(), expanded.end());
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  }
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  RunManifest manifest;
  manifest.command = argv_store;

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::string usage;
    for (auto* sub : app.get_subcommands()) usage = sub->help();
    err << "error: " << e.what() << '\n' << usage;
    return kConfigError;
  }

  try {
    if (pre->parsed()) {
      pre_po.tokenizer = corpus::tokenizer_from_string(pre_tok);
      pre_enc.tokenizer = pre_po.tokenizer;
      auto read = corpus::read_records(pre_input);
      std::vector<corpus::RejectedRecord> unreadable;
      for (const auto& [line, msg] : read.errors) unreadable.push_back({"line " + std::to_string(line), msg});
      manifest.subcommand = "preprocess";
      manifest.seed = pre_po.seed;
      manifest.inputs = {pre_input};
      manifest.config = {{"tokenizer", pre_tok},
                         {"vocab_max", pre_po.vocab_max},
                         {"min_count", pre_po.min_count},
                         {"max_in", pre_enc.max_input},
                         {"max_out", pre_enc.max_output}};
      write_prepared(read.records, unreadable, pre_po, pre_enc, pre_out, manifest, inv);
      return kOk;
    }

    if (syn->parsed()) {
      syn_po.seed = syn_seed;
      const auto raw = corpus::generate_synthetic(syn_n, syn_seed, grammar);
      fs::create_directories(syn_out);
      std::ostringstream os;
      corpus::write_records(os, raw);
      training::write_text(fs::path(syn_out) / "raw.jsonl", os.str());
      manifest.subcommand = "synth";
      manifest.outputs = {"raw.jsonl"};
      manifest.seed = syn_seed;
      manifest.config = {{"n", syn_n},
                         {"tokenizer", "whitespace"},
                         {"repetition", grammar.repetition},
                         {"min_sentences", grammar.min_sentences},
                         {"max_sentences", grammar.max_sentences},
                         {"key_terms", grammar.key_terms},
                         {"min_count", syn_po.min_count}};
      corpus::EncodeOptions enc;
      enc.tokenizer = syn_po.tokenizer;
      write_prepared(raw, {}, syn_po, enc, syn_out, manifest, inv);
      return kOk;
    }

    if (tr->parsed()) {
      const auto ds = training::load_dataset(tr_data);
      auto cfg = ta.resolve();
      const auto vocab = training::run_vocabulary(ds, cfg);
      cfg.model.vocab_size = vocab.size();
      cfg.validate();
      const fs::path dir = tr_out;
      fs::create_directories(dir);
      training::Trainer trainer(cfg, vocab, training::encode_for(ds.train, vocab, ds.tokenizer, cfg),
                                training::encode_for(ds.validation, vocab, ds.tokenizer, cfg));
      write_run_context(dir, vocab, ds.tokenizer, tr_data);
      training::TrainOptions opts;
      opts.out_dir = dir;
      opts.keep_checkpoints = tr_keep;
      opts.on_epoch = [&](const training::EpochRecord& r) { out << training::format_log_line(r) << std::endl; };
      const std::size_t parameters = model::ModelParams<double>(cfg.model).count();
      out << "parameters=" << parameters << " train=" << ds.train.size() << " validation=" << ds.validation.size()
          << " vocab=" << vocab.size() << std::endl;
      training::TrainResult result;
      if (!tr_resume.empty()) {
        fs::path from = tr_resume;
        if (fs::is_directory(from)) from /= "last.ckpt";
        result = trainer.run(training::load_checkpoint(from, &cfg.model), opts);
        manifest.inputs.push_back(from.string());
      } else {
        result = trainer.run(opts);
      }
      out << "best_epoch=" << result.best_epoch << " epochs=" << result.history.size()
          << " stopped_early=" << (result.stopped_early ? 1 : 0) << '\n';
      manifest.subcommand = "train";
      manifest.seed = cfg.seed;
      manifest.inputs.insert(manifest.inputs.begin(), tr_data);
      manifest.config = training::to_json(cfg);
      manifest.config["parameters"] = parameters;
      manifest.outputs = {"vocab.tsv", "run.json", "metrics.log", "best.json"};
      if (result.best_epoch > 0) manifest.outputs.push_back(training::Trainer::checkpoint_name(result.best_epoch));
      manifest.artifact_hashes = dataset_hashes(tr_data);
      write_manifest(dir, manifest);
      return kOk;
    }

    if (sum->parsed()) {
      auto m = load_model(sum_ck);
      const auto read = corpus::read_records(sum_input);
      if (!read.errors.empty()) {
        throw DataError(sum_input + " line " + std::to_string(read.errors[0].first) + ": " + read.errors[0].second);
      }
      std::vector<corpus::PatentRecord> records;
      const auto ws = corpus::whitespace_mode_for(m.ctx.tokenizer);
      for (const auto& r : read.records) records.push_back(corpus::clean_record(r, ws));
      const auto examples = training::encode_for(records, m.ctx.vocab, m.ctx.tokenizer, m.ck.config);
      std::ostringstream summaries, trace;
      for (const auto& ex : examples) {
        const auto res = model::decode_sequence(m.ck.params, m.ck.config.model, ex, {sum_beam, 0});
        summaries << corpus::join_tokens(model::decoded_tokens(res.ids, m.ctx.vocab, ex), m.ctx.tokenizer) << '\n';
        if (!sum_trace.empty()) model::write_trace(trace, ex.publication_number, res, m.ctx.vocab, ex);
      }
      if (sum_output.empty()) {
        out << summaries.str();
      } else {
        training::write_text(sum_output, summaries.str());
      }
      if (!sum_trace.empty()) training::write_text(sum_trace, trace.str());
      if (!sum_output.empty()) {
        manifest.subcommand = "summarize";
        manifest.seed = m.ck.config.seed;
        manifest.inputs = {m.path.string(), sum_input};
        manifest.config = {{"beam", sum_beam}, {"model", model::to_json(m.ck.config.model)}};
        const fs::path o = fs::absolute(sum_output);
        manifest.outputs = {o};
        if (!sum_trace.empty()) manifest.outputs.push_back(fs::absolute(sum_trace));
        write_manifest_beside(o, manifest);
      }
      return kOk;
    }

    if (ev->parsed()) {
      auto m = load_model(ev_ck);
      const fs::path data = ev_data.empty() ? m.ctx.data_dir : fs::path(ev_data);
      const auto ds = training::load_dataset(data);
      const auto examples = training::encode_for(ds.split(ev_split), m.ctx.vocab, ds.tokenizer, m.ck.config);
      if (examples.empty()) throw DataError("split " + ev_split + " of " + data.string() + " is empty");
      const auto decoded = training::decode_all(m.ck.params, m.ck.config.model, examples, m.ctx.vocab, {ev_beam, 0});
      const auto scores = training::score_decodes(decoded, examples);
      out << rouge::format_table({rouge::table_row(ev_name, scores)});
      for (const auto& w : scores.warnings) err << "warning: " << w << '\n';
      manifest.subcommand = "evaluate";
      manifest.seed = m.ck.config.seed;
      manifest.inputs = {m.path.string(), data.string()};
      manifest.config = {{"split", ev_split}, {"beam", ev_beam}, {"name", ev_name}};
      manifest.artifact_hashes = dataset_hashes(data);
      if (!ev_summaries.empty()) {
        std::ostringstream os;
        for (const auto& t : decoded.tokens) os << corpus::join_tokens(t, ds.tokenizer) << '\n';
        training::write_text(ev_summaries, os.str());
        manifest.outputs.push_back(fs::absolute(ev_summaries));
      }
      if (!ev_json.empty()) {
        auto j = report_json(ev_name, scores);
        j["split"] = ev_split;
        training::write_text(ev_json, j.dump(2) + "\n");
        manifest.outputs.push_back(fs::absolute(ev_json));
      }
      if (!manifest.outputs.empty()) write_manifest_beside(manifest.outputs.front(), manifest);
      return kOk;
    }

    if (rg->parsed()) {
      const auto scores = rouge::evaluate_texts(rouge::read_lines(rg_c), rouge::read_lines(rg_r),
                                                corpus::tokenizer_from_string(rg_tok));
      out << rouge::format_table({rouge::table_row(rg_name, scores)});
      for (const auto& w : scores.warnings) err << "warning: " << w << '\n';
      if (!rg_json.empty()) {
        training::write_text(rg_json, report_json(rg_name, scores).dump(2) + "\n");
        manifest.subcommand = "rouge";
        manifest.inputs = {rg_c, rg_r};
        manifest.config = {{"tokenizer", rg_tok}, {"name", rg_name}};
        manifest.outputs = {fs::absolute(rg_json)};
        write_manifest_beside(fs::absolute(rg_json), manifest);
      }
      return kOk;
    }

    if (ab->parsed()) {
      const auto ds = training::load_dataset(ab_data);
      auto base = aa.resolve();
      base.model.vocab_size = training::run_vocabulary(ds, base).size();
      const auto variants = split_list(ab_variants);
      if (variants.empty()) throw ConfigError("no ablation variants given");
      for (const auto& v : variants) (void)training::parse_variant(v);
      const auto rows = training::run_ablation(ds, base, variants, ab_split,
                                               [&](const std::string& v) { out << "done " << v << std::endl; });
      const fs::path dir = ab_out;
      fs::create_directories(dir);
      const auto table = training::format_ablation(rows);
      out << table;
      nlohmann::json j = nlohmann::json::array();
      for (const auto& r : rows) {
        auto row = report_json(r.variant.name, r.scores);
        row["repeated_bigram_rate"] = r.repeat_rate;
        row["parameters"] = r.parameters;
        row["epochs"] = r.epochs;
        row["train_loss"] = r.train_loss;
        j.push_back(row);
      }
      training::write_text(dir / "ablation.md", table);
      training::write_text(dir / "ablation.json", j.dump(2) + "\n");
      manifest.subcommand = "ablate";
      manifest.seed = base.seed;
      manifest.inputs = {ab_data};
      manifest.config = training::to_json(base);
      manifest.config["variants"] = variants;
      manifest.config["split"] = ab_split;
      manifest.outputs = {"ablation.md", "ablation.json"};
      manifest.artifact_hashes = dataset_hashes(ab_data);
      write_manifest(dir, manifest);
      return kOk;
    }

    if (tb->parsed()) {
      std::vector<rouge::TableRow> rows;
      for (const auto& path : tb_reports) {
        try {
          const auto j = nlohmann::json::parse(training::read_text(path));
          if (j.is_array()) {
            for (const auto& r : j) rows.push_back(row_from_report(r));
          } else {
            rows.push_back(row_from_report(j));
          }
        } catch (const nlohmann::json::exception& e) {
          throw FormatError(path + " is not a ROUGE report: " + e.what());
        }
      }
      const auto table = rouge::format_table(rows);
      out << table;
      if (!tb_out.empty()) {
        training::write_text(tb_out, table);
        manifest.subcommand = "table";
        manifest.inputs = tb_reports;
        manifest.outputs = {fs::absolute(tb_out)};
        write_manifest_beside(fs::absolute(tb_out), manifest);
      }
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace msea::cli
