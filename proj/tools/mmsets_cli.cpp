// mmsets: generate synthetic data, train set/concat models, evaluate with
// k-fold cross-validation and export feature-importance matrices.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 runtime numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif
#include <nlohmann/json.hpp>

#include "mmsets/mmsets.hpp"

namespace fs = std::filesystem;
using namespace mmsets;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Flags {
  std::string data;
  std::string config;
  std::string out;
  std::string checkpoint;
  std::optional<std::string> pool;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> kfold;
  std::optional<std::string> baseline;
  std::vector<std::string> modalities;
  bool importance = false;
};

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::validation, path.string() + ": " + e.what());
  }
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
}

RunConfig resolve(const Flags& flags) {
  RunConfig cfg;
  if (const char* env = std::getenv("MMSETS_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorKind::validation, "MMSETS_SEED must be a non-negative integer");
    }
  }
  bool explicit_warmup = false;
  if (!flags.config.empty()) {
    const auto j = read_json_file(flags.config);
    apply_json(j, cfg);
    explicit_warmup = j.contains("warmup_epochs");
  }
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.pool) cfg.pool = *flags.pool;
  if (flags.dim) cfg.dim = *flags.dim;
  if (flags.epochs) cfg.epochs = *flags.epochs;
  if (flags.kfold) cfg.kfold = *flags.kfold;
  if (flags.baseline) cfg.baseline = *flags.baseline;
  if (!flags.modalities.empty()) cfg.modalities = flags.modalities;
  if (flags.importance) cfg.importance = true;
  // Short runs keep the default recipe's warmup share (5 of 25 epochs).
  if (!explicit_warmup && cfg.warmup_epochs >= static_cast<double>(cfg.epochs)) {
    cfg.warmup_epochs = static_cast<double>(cfg.epochs) / 5.0;
  }
  cfg.validate();
  return cfg;
}

/// Output directory keyed by a hash of command, resolved config and data.
fs::path run_dir(const std::string& command, const RunConfig& cfg, const Flags& flags, const std::string& extra = {}) {
  std::string key = command + "\n" + to_json(cfg).dump() + "\n";
  key += read_bytes(fs::path(flags.data) / "manifest.json");
  key += read_bytes(fs::path(flags.data) / "samples.jsonl");
  key += extra;
  fs::path dir = fs::path(flags.out.empty() ? "runs" : flags.out) / (command + "-" + fnv1a_hex(key));
  fs::create_directories(dir);
  return dir;
}

AnyModel make_model(const RunConfig& cfg, const Dataset& ds, std::span<const Sample> train_set, std::uint64_t seed) {
  ModelConfig mc = cfg.model_config(ds.manifest);
  Rng rng(mix_seed(seed, 0, "init"));
  if (cfg.baseline == "concat") return ConcatModel(mc, default_concat_slots(mc.modalities, train_set), rng);
  return FusionModel(mc, rng);
}

int cmd_gen_synthetic(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed) {
  SyntheticConfig cfg = synthetic_config_from_json(read_json_file(config_path));
  if (seed) cfg.seed = *seed;
  Dataset ds = generate_synthetic(cfg);
  save_dataset(out, ds);
  write_text(fs::path(out) / "synthetic_config.json", to_json(cfg).dump(2) + "\n");
  std::cout << "wrote " << ds.samples.size() << " samples to " << out << "\n";
  return kOk;
}

int cmd_train(const Flags& flags) {
  const RunConfig cfg = resolve(flags);
  const Dataset ds = load_dataset(flags.data);
  const fs::path dir = run_dir("train", cfg, flags);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");

  AnyModel model = make_model(cfg, ds, ds.samples, cfg.seed);
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  if (!log) throw Error(ErrorKind::io, "cannot write " + (dir / "train_log.jsonl").string());
  auto on_epoch = [&](const EpochLog& e) {
    log << nlohmann::json{{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"train_accuracy", e.accuracy}}.dump() << '\n';
  };
  const TrainConfig tc = cfg.train_config(ds.manifest.task);
  std::visit([&](auto& m) { train(m, ds.samples, tc, on_epoch); }, model);

  Checkpoint ck{fnv1a_hex(to_json(cfg).dump()), ds.manifest.task, ds.manifest.classes, cfg.seed, std::move(model)};
  save_checkpoint(dir / "checkpoint.json", ck);
  std::cout << dir.string() << "\n";
  return kOk;
}

void write_report(const fs::path& dir, const EvalReport& report, bool importance, const std::string& model_tag) {
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  if (!importance) return;
  std::string lines;
  for (const auto& r : report.importance) lines += to_json(r).dump() + "\n";
  write_text(dir / "importance.jsonl", lines);
  const std::vector<FimRow> rows{{model_tag, *report.fim}};
  export_fim(rows, dir / "fim.csv");
}

int cmd_eval(const Flags& flags) {
  const Dataset ds = load_dataset(flags.data);
  if (!flags.checkpoint.empty()) {
    if (flags.kfold) throw CLI::ValidationError("--checkpoint and --kfold are mutually exclusive");
    const Checkpoint ck = load_checkpoint(flags.checkpoint);
    if (ck.classes != ds.manifest.classes) throw Error(ErrorKind::validation, "checkpoint classes differ from the dataset's");
    RunConfig cfg;
    cfg.importance = flags.importance;
    const bool is_set = std::holds_alternative<FusionModel>(ck.model);
    if (cfg.importance) {
      if (!is_set) throw Error(ErrorKind::validation, "feature importance is only defined for the set model");
      const auto pool = std::get<FusionModel>(ck.model).config().pool;
      if (!is_extremum(pool)) {
        throw Error(ErrorKind::validation, "feature importance requires max or min pooling, checkpoint uses '" + to_string(pool) + "'");
      }
    }
    const fs::path dir = run_dir("eval", cfg, flags, read_bytes(flags.checkpoint));
    EvalReport report;
    std::visit(
        [&](const auto& m) {
          auto preds = predict(m, ds.samples, ck.task, ck.eval_seed);
          report.folds.push_back(compute_metrics(preds, ck.task));
          report.importance = std::move(preds.importance);
        },
        ck.model);
    report.mean = mean_metrics(report.folds);
    if (cfg.importance) report.fim = aggregate_importance(report.importance);
    else report.importance.clear();
    write_text(dir / "config.json", nlohmann::json{{"checkpoint", flags.checkpoint}, {"importance", cfg.importance}}.dump(2) + "\n");
    const std::string tag = is_set ? "set-" + to_string(std::get<FusionModel>(ck.model).config().pool) : "concat";
    write_report(dir, report, cfg.importance, tag);
    std::cout << dir.string() << "\n";
    return kOk;
  }

  const RunConfig cfg = resolve(flags);
  if (cfg.kfold < 2) throw CLI::ValidationError("eval needs --checkpoint or --kfold K (K >= 2)");
  const fs::path dir = run_dir("eval", cfg, flags);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
  const TrainConfig tc = cfg.train_config(ds.manifest.task);
  EvalReport report;
  if (cfg.baseline == "concat") {
    report = run_kfold(ds.samples, cfg.kfold, tc, [&](std::size_t fold) {
      ModelConfig mc = cfg.model_config(ds.manifest);
      Rng rng(mix_seed(cfg.seed, fold, "init"));
      return ConcatModel(mc, default_concat_slots(mc.modalities, ds.samples), rng);
    });
  } else {
    report = run_kfold(ds.samples, cfg.kfold, tc, [&](std::size_t fold) {
      Rng rng(mix_seed(cfg.seed, fold, "init"));
      return FusionModel(cfg.model_config(ds.manifest), rng);
    });
  }
  if (!cfg.importance) {
    report.fim.reset();
    report.importance.clear();
  }
  write_report(dir, report, cfg.importance, cfg.baseline == "concat" ? "concat" : "set-" + cfg.pool);
  std::cout << dir.string() << "\n";
  return kOk;
}

void add_model_flags(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--data", flags.data, "Dataset directory (manifest.json + samples.jsonl)")->required();
  cmd->add_option("--config", flags.config, "JSON run config; flags override its values");
  cmd->add_option("--out", flags.out, "Parent directory for run outputs")->default_str("runs");
  cmd->add_option("--pool", flags.pool, "Set pooling: sum, max, min or mean")
      ->check(CLI::IsMember({"sum", "max", "min", "mean"}));
  cmd->add_option("--dim", flags.dim, "Common encoder width D")->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", flags.epochs, "Training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", flags.seed, "Random seed (falls back to MMSETS_SEED)");
  cmd->add_option("--baseline", flags.baseline, "Train the concatenation baseline instead")->check(CLI::IsMember({"concat", "none"}));
  cmd->add_option("--modalities", flags.modalities, "Restrict to these modality ids")->delimiter(',');
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep multi-modal set fusion: train, evaluate and explain set-pooled classifiers"};
  app.require_subcommand(1);

  std::string gen_config, gen_out;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("gen-synthetic", "Generate a planted-importance synthetic dataset");
  gen->add_option("--config", gen_config, "Synthetic config JSON")->required();
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "Override the config seed");

  Flags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_model_flags(train_cmd, train_flags);

  Flags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or run k-fold cross-validation");
  add_model_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", eval_flags.checkpoint, "Checkpoint to evaluate");
  eval_cmd->add_option("--kfold", eval_flags.kfold, "Cross-validate with K folds")->check(CLI::Range(2, 1000000));
  eval_cmd->add_flag("--importance", eval_flags.importance, "Emit per-sample importance and the aggregated FIM");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_synthetic(gen_config, gen_out, gen_seed);
    if (*train_cmd) return cmd_train(train_flags);
    if (*eval_cmd) return cmd_eval(eval_flags);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.kind() == ErrorKind::numeric ? kNumeric : kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
