#include "scapt/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "scapt/corpus.hpp"
#include "scapt/dataio.hpp"
#include "scapt/errors.hpp"
#include "scapt/gradcheck.hpp"
#include "scapt/metrics.hpp"
#include "scapt/trainer.hpp"

namespace scapt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  usage error (unknown flag, bad value, invalid config, single-label corpus)\n"
    "  3  missing or malformed input file, or an aspect cut off by max_len\n"
    "  4  checkpoint and config are incompatible\n"
    "  5  output already exists (pass --force to overwrite)\n"
    "  6  numerical failure (NaN/Inf during training)\n"
    "  7  degenerate data (empty dataset, no usable contrastive batch)\n"
    "  9  gradient check failed\n"
    "Errors are printed to stderr as {\"error\": <kind>, \"message\": <text>, \"exit_code\": <n>}.";

/// Raised for failures the CLI classifies itself.
struct CliError {
  int code;
  std::string kind;
  std::string message;
};

[[noreturn]] void fail(int code, std::string kind, std::string message) {
  throw CliError{code, std::move(kind), std::move(message)};
}

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> tau;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::string profile = "desk";
  bool force = false;
  std::string manifest;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON run config; flags override its values");
  cmd->add_option("--seed", f.seed, "Seed for every random stream");
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size");
  cmd->add_option("--lr", f.lr, "Base learning rate");
  cmd->add_option("--tau", f.tau, "Contrastive temperature");
  cmd->add_option("--alpha", f.alpha, "Reconstruction loss weight");
  cmd->add_option("--beta", f.beta, "Masked aspect prediction loss weight");
  cmd->add_option("--profile", f.profile, "Default sizes")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_flag("--force", f.force, "Overwrite existing outputs");
  cmd->add_option("--manifest", f.manifest, "Run manifest path (default: <out>.manifest.json)");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(exit_code::kInput, "missing_file", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(exit_code::kUsage, "invalid_config", path.string() + ": " + e.what());
  }
}

RunConfig resolve_config(const CommonFlags& f, Stage stage) {
  RunConfig c = RunConfig::defaults(f.profile == "paper" ? Profile::Paper : Profile::Desk, stage);
  if (!f.config.empty()) {
    try {
      merge_json(read_json_file(f.config), c);
    } catch (const json::exception& e) {
      fail(exit_code::kUsage, "invalid_config", f.config + ": " + e.what());
    }
  }
  if (f.seed) c.seed = *f.seed;
  if (f.epochs) c.epochs = *f.epochs;
  if (f.batch_size) c.batch_size = *f.batch_size;
  if (f.lr) c.base_lr = *f.lr;
  if (f.tau) c.pretrain.tau = *f.tau;
  if (f.alpha) c.pretrain.alpha = *f.alpha;
  if (f.beta) c.pretrain.beta = *f.beta;
  c.validate();
  return c;
}

void require_input(const std::string& path, const char* what) {
  if (path.empty()) fail(exit_code::kUsage, "usage", std::string(what) + " is required");
  if (!fs::exists(path)) fail(exit_code::kInput, "missing_file", std::string(what) + " not found: " + path);
}

void guard_output(const std::string& path, bool force) {
  if (path.empty()) return;
  if (fs::exists(path) && !force)
    fail(exit_code::kOutputExists, "output_exists",
         path + " already exists; pass --force to overwrite");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(exit_code::kInput, "io_error", "cannot write " + path.string());
  out << text;
}

void write_manifest(const CommonFlags& f, const std::string& out_path, const std::string& command,
                    const std::vector<std::string>& args, const json& resolved) {
  const std::string path = f.manifest.empty() ? out_path + ".manifest.json" : f.manifest;
  json m = {{"command", command}, {"args", args}, {"config", resolved}};
  write_text(path, m.dump(2) + "\n");
  spdlog::debug("manifest written to {}", path);
}

std::set<std::string> split_topics(const std::string& csv) {
  std::set<std::string> out;
  std::stringstream ss(csv);
  for (std::string t; std::getline(ss, t, ',');)
    if (!t.empty()) out.insert(t);
  return out;
}

/// One polarity label per line, aligned with the flattened aspects of the data.
std::vector<Polarity> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  std::vector<Polarity> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    auto p = parse_polarity(line);
    if (!p) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": unknown polarity '" + line + "'");
    out.push_back(*p);
  }
  return out;
}

void configure_logging(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("scapt", sink);
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char* env = std::getenv("SCAPT_LOG")) {
    level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"
    if (level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::info;
  }
  spdlog::set_level(level);
}

json error_json(const std::string& kind, const std::string& message, int code) {
  return {{"error", kind}, {"message", message}, {"exit_code", code}};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  configure_logging(err);

  CLI::App app{"SCAPT aspect-based sentiment analysis toolkit", "scapt"};
  app.require_subcommand(1);
  app.footer(kExitCodes);

  CommonFlags f;
  std::string out_path, reviews, absa_train, topics, corpus, train, init, data, checkpoint,
      predictions, curves;
  bool slice = false;
  std::size_t threads = 1, entries = 0;

  auto* cb = app.add_subcommand("corpus-build", "Build the noisy-labeled pre-training corpus");
  add_common(cb, f);
  cb->add_option("--reviews", reviews, "Review JSONL")->required();
  cb->add_option("--absa-train", absa_train, "ABSA training JSONL (aspect lexicon)")->required();
  cb->add_option("--topics", topics, "Comma-separated allowed review topics")->required();
  cb->add_option("--out", out_path, "Corpus JSONL output")->required();

  auto* pt = app.add_subcommand("pretrain", "Pre-train the encoder with the joint objective");
  add_common(pt, f);
  pt->add_option("--corpus", corpus, "Pre-training corpus JSONL")->required();
  pt->add_option("--absa-train", absa_train, "Extra ABSA JSONL whose tokens join the vocabulary");
  pt->add_option("--out", out_path, "Checkpoint output")->required();
  pt->add_option("--curves", curves, "Loss curve CSV (default: <out>.curves.csv)");

  auto* ft = app.add_subcommand("finetune", "Fine-tune an aspect classifier");
  add_common(ft, f);
  ft->add_option("--train", train, "ABSA training JSONL")->required();
  ft->add_option("--init", init, "Pre-trained checkpoint; random init when omitted");
  ft->add_option("--out", out_path, "Checkpoint output")->required();
  ft->add_option("--curves", curves, "Loss curve CSV (default: <out>.curves.csv)");

  auto* ev = app.add_subcommand("eval", "Accuracy and macro-F1 on an ABSA split");
  add_common(ev, f);
  ev->add_option("--data", data, "ABSA JSONL with gold polarities")->required();
  ev->add_option("--checkpoint", checkpoint, "Fine-tuned checkpoint");
  ev->add_option("--predictions", predictions,
                 "Score a prediction file (one polarity per aspect) instead of a checkpoint");
  ev->add_flag("--slice", slice, "Report explicit/implicit slice accuracy");
  ev->add_option("--threads", threads, "Inference threads")->check(CLI::PositiveNumber);
  ev->add_option("--out", out_path, "Metrics JSON output")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  add_common(gc, f);
  gc->add_option("--entries", entries, "Entries probed per parameter at model scale (0 = all)");
  gc->add_option("--out", out_path, "Result table JSON")->required();

  auto* ex = app.add_subcommand("export-embeddings", "Dump sentiment representations as CSV");
  add_common(ex, f);
  ex->add_option("--data", data, "ABSA JSONL")->required();
  ex->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  ex->add_option("--out", out_path, "CSV output")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return exit_code::kOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return exit_code::kOk;
    } catch (const CLI::ParseError& e) {
      fail(exit_code::kUsage, "usage", e.what());
    }

    const CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    const Stage stage = name == "pretrain" || name == "corpus-build" || name == "gradcheck"
                            ? Stage::Pretrain
                            : Stage::Finetune;
    const RunConfig cfg = resolve_config(f, stage);
    guard_output(out_path, f.force);

    if (name == "corpus-build") {
      require_input(reviews, "--reviews");
      require_input(absa_train, "--absa-train");
      const auto allowed = split_topics(topics);
      if (allowed.empty()) fail(exit_code::kUsage, "usage", "--topics names no topic");
      write_manifest(f, out_path, name, args,
                     {{"reviews", reviews}, {"absa_train", absa_train},
                      {"topics", allowed}, {"out", out_path}, {"seed", cfg.seed}});
      const CorpusStats stats = build_pretrain_corpus(reviews, absa_train, allowed, out_path);
      out << stats.to_json().dump() << '\n';
      return exit_code::kOk;
    }

    if (name == "pretrain") {
      require_input(corpus, "--corpus");
      if (!absa_train.empty()) require_input(absa_train, "--absa-train");
      RunConfig run = cfg;
      run.checkpoint_path = out_path;
      run.curves_path = curves.empty() ? out_path + ".curves.csv" : curves;
      guard_output(run.curves_path, f.force);
      write_manifest(f, out_path, name, args, json(run));

      const auto sentences = read_pretrain_corpus(corpus);
      std::vector<std::vector<std::string>> token_lists;
      for (const auto& s : sentences) token_lists.push_back(s.tokens);
      if (!absa_train.empty())
        for (const auto& s : read_absa(absa_train)) token_lists.push_back(s.tokens);
      ScaptModel model = ScaptModel::initialize(run.encoder, Vocab::build(token_lists, run.min_count),
                                                run.seed, true);
      const auto result = pretrain_loop(model, sentences, run);
      model.save(out_path, {{"run", run}, {"epoch", run.epochs}, {"stage", "pretrain"}});
      out << json{{"checkpoint", out_path},
                  {"curves", run.curves_path},
                  {"steps", result.curve.size()},
                  {"degenerate_batches", result.degenerate_batches},
                  {"final_loss", result.curve.empty() ? 0.0 : result.curve.back().total}}
                 .dump()
          << '\n';
      return exit_code::kOk;
    }

    if (name == "finetune") {
      require_input(train, "--train");
      if (!init.empty()) require_input(init, "--init");
      RunConfig run = cfg;
      run.checkpoint_path = out_path;
      run.curves_path = curves.empty() ? out_path + ".curves.csv" : curves;
      guard_output(run.curves_path, f.force);
      write_manifest(f, out_path, name, args, {{"run", run}, {"init", init}});

      const auto sentences = read_absa(train);
      ScaptModel model;
      if (init.empty()) {
        std::vector<std::vector<std::string>> token_lists;
        for (const auto& s : sentences) token_lists.push_back(s.tokens);
        model = ScaptModel::initialize(run.encoder, Vocab::build(token_lists, run.min_count),
                                       run.seed, false);
      } else {
        model = ScaptModel::load(init);
        check_compatible(model, run.encoder);
      }
      const auto result = finetune_loop(model, sentences, run);
      model.save(out_path, {{"run", run}, {"epoch", run.epochs}, {"stage", "finetune"}});
      out << json{{"checkpoint", out_path},
                  {"steps", result.curve.size()},
                  {"final_loss", result.curve.empty() ? 0.0 : result.curve.back().loss}}
                 .dump()
          << '\n';
      return exit_code::kOk;
    }

    if (name == "eval") {
      require_input(data, "--data");
      if (checkpoint.empty() == predictions.empty())
        fail(exit_code::kUsage, "usage", "eval needs exactly one of --checkpoint or --predictions");
      if (!checkpoint.empty()) require_input(checkpoint, "--checkpoint");
      if (!predictions.empty()) require_input(predictions, "--predictions");
      write_manifest(f, out_path, name, args,
                     {{"data", data}, {"checkpoint", checkpoint}, {"predictions", predictions},
                      {"slice", slice}, {"threads", threads}, {"seed", cfg.seed}});

      const auto sentences = read_absa(data);
      MetricsReport report;
      if (!predictions.empty()) {
        const auto examples = flatten(sentences);
        const auto preds = read_predictions(predictions);
        if (preds.size() != examples.size())
          throw ParseError(predictions + ": " + std::to_string(preds.size()) +
                           " predictions for " + std::to_string(examples.size()) + " aspects");
        std::vector<Polarity> gold;
        for (const auto& e : examples) gold.push_back(e.polarity);
        report = compute_metrics(gold, preds, slice_ese_ise(examples).tags);
      } else {
        ScaptModel model = ScaptModel::load(checkpoint);
        if (!model.has_classifier())
          throw IncompatibleError(checkpoint + ": checkpoint has no aspect classifier; run finetune first");
        report = evaluate(model, sentences, threads);
      }
      json j = report.to_json();
      if (!slice)
        for (const char* k : {"ese_accuracy", "ise_accuracy", "ese_count", "ise_count"}) j.erase(k);
      write_text(out_path, j.dump(2) + "\n");
      out << j.dump() << '\n';
      return exit_code::kOk;
    }

    if (name == "gradcheck") {
      EncoderConfig enc = cfg.encoder;
      enc.n_layers = 2;
      enc.dropout_rate = 0.0;
      GradCheckOptions opts;
      opts.entries_per_param = entries;
      opts.seed = cfg.seed;
      write_manifest(f, out_path, name, args,
                     {{"encoder", enc}, {"entries_per_param", entries}, {"step", opts.step},
                      {"threshold", opts.threshold}, {"seed", cfg.seed}});
      const auto results = run_gradcheck_suite(enc, cfg.seed, opts);
      json table = json::array();
      bool all_pass = true;
      out << std::left << std::setw(32) << "check" << std::setw(14) << "max_rel_err"
          << std::setw(10) << "entries" << "result\n";
      for (const auto& r : results) {
        all_pass = all_pass && r.pass;
        std::ostringstream err_txt;
        err_txt << std::scientific << std::setprecision(3) << r.max_rel_err;
        out << std::left << std::setw(32) << r.name << std::setw(14) << err_txt.str()
            << std::setw(10) << r.checked << (r.pass ? "PASS" : "FAIL") << '\n';
        table.push_back({{"name", r.name},
                         {"max_rel_err", r.max_rel_err},
                         {"checked", r.checked},
                         {"worst", r.worst_param},
                         {"loss", r.loss},
                         {"pass", r.pass}});
      }
      write_text(out_path, json{{"pass", all_pass}, {"checks", table}}.dump(2) + "\n");
      if (!all_pass) fail(exit_code::kGradcheckFailed, "gradcheck_failed", "at least one check exceeded the threshold");
      return exit_code::kOk;
    }

    // export-embeddings
    require_input(data, "--data");
    require_input(checkpoint, "--checkpoint");
    write_manifest(f, out_path, name, args,
                   {{"data", data}, {"checkpoint", checkpoint}, {"seed", cfg.seed}});
    const auto sentences = read_absa(data);
    ScaptModel model = ScaptModel::load(checkpoint);
    const ClusterScore score = export_embeddings(model, sentences, out_path);
    out << json{{"rows", flatten(sentences).size()},
                {"intra", score.intra},
                {"inter", score.inter},
                {"clustering_score", score.score()}}
               .dump()
        << '\n';
    return exit_code::kOk;
  } catch (const CliError& e) {
    err << error_json(e.kind, e.message, e.code).dump() << '\n';
    return e.code;
  } catch (const ConfigError& e) {
    err << error_json("invalid_config", e.what(), exit_code::kUsage).dump() << '\n';
    return exit_code::kUsage;
  } catch (const ParseError& e) {
    err << error_json("parse_error", e.what(), exit_code::kInput).dump() << '\n';
    return exit_code::kInput;
  } catch (const IncompatibleError& e) {
    err << error_json("incompatible", e.what(), exit_code::kIncompatible).dump() << '\n';
    return exit_code::kIncompatible;
  } catch (const NumericError& e) {
    err << error_json("numeric", e.what(), exit_code::kNumeric).dump() << '\n';
    return exit_code::kNumeric;
  } catch (const DegenerateBatchError& e) {
    err << error_json("degenerate_data", e.what(), exit_code::kDegenerateData).dump() << '\n';
    return exit_code::kDegenerateData;
  } catch (const IndexError& e) {
    // e.g. an aspect span cut off by max_len truncation
    err << error_json("index_out_of_range", e.what(), exit_code::kInput).dump() << '\n';
    return exit_code::kInput;
  } catch (const ContractError& e) {
    err << error_json("degenerate_data", e.what(), exit_code::kDegenerateData).dump() << '\n';
    return exit_code::kDegenerateData;
  } catch (const std::exception& e) {
    err << error_json("internal", e.what(), exit_code::kInternal).dump() << '\n';
    return exit_code::kInternal;
  }
}

}  // namespace scapt
