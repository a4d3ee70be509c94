#include "cape/commands.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <numeric>
#include <ostream>
#include <sstream>

#include "cape/config_file.hpp"
#include "cape/csv.hpp"
#include "cape/errors.hpp"
#include "cape/manifest.hpp"
#include "cape/plots.hpp"
#include "cape/storage.hpp"

namespace cape {
namespace fs = std::filesystem;

namespace {

// Creates `dir` and refuses to clobber any planned output unless forced.
void prepare_out(const fs::path& dir, const std::vector<std::string>& names, bool force,
                 const std::string& manifest = kManifestName) {
  if (dir.empty()) throw ConfigError("--out: output directory is required");
  fs::create_directories(dir);
  if (force) return;
  for (const auto& name : names) {
    if (fs::exists(dir / name)) {
      throw ConfigError((dir / name).string() + " already exists; pass --force to overwrite");
    }
  }
  if (fs::exists(dir / manifest)) {
    throw ConfigError((dir / manifest).string() + " already exists; pass --force to overwrite");
  }
}

void merge(std::map<std::string, std::string>& into, const std::map<std::string, std::string>& from,
           const std::string& prefix) {
  for (const auto& [k, v] : from) into[prefix + k] = v;
}

std::string join(const auto& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      out += format_number(v);
    } else {
      out += std::to_string(v);
    }
  }
  return out;
}

}  // namespace

void cmd_generate(const GenerateOptions& opts) {
  const std::string started = utc_timestamp();
  ConfigFile cfg = ConfigFile::load(opts.config);
  FieldConfig field;
  std::size_t n_samples = 100;
  read_field_config(cfg, field);
  cfg.get("n_samples", n_samples);
  cfg.reject_unknown();
  if (opts.seed) field.seed = *opts.seed;
  field.validate();

  const std::vector<std::string> outputs{"dataset.bin"};
  prepare_out(opts.out, outputs, opts.force);
  const Dataset data = generate_dataset(field, n_samples);
  write_dataset(opts.out / "dataset.bin", data);

  RunManifest manifest;
  manifest.command = "generate";
  manifest.seed = field.seed;
  manifest.started = started;
  manifest.config = describe(field);
  manifest.config["n_samples"] = std::to_string(n_samples);
  manifest.config["offset"] = format_number(data.offset);
  manifest.outputs = outputs;
  write_manifest(opts.out, manifest);
}

void cmd_train(const TrainOptions& opts) {
  const std::string started = utc_timestamp();
  TrainConfig config;
  if (opts.config) {
    ConfigFile cfg = ConfigFile::load(*opts.config);
    read_train_config(cfg, config);
    cfg.reject_unknown();
  }
  if (opts.seed) config.seed = *opts.seed;
  if (opts.lambda) config.lambda = *opts.lambda;
  if (opts.bins) config.bins = *opts.bins;
  config.validate();

  const Dataset data = read_dataset(opts.dataset);
  const std::vector<std::string> outputs{"epochs.csv", "bce.ckpt", "cape.ckpt", "test_metrics.csv"};
  prepare_out(opts.out, outputs, opts.force);

  // A single run trains on rotation 0 of the k-fold split.
  const auto folds = split_kfold(data.size(), config.folds, config.seed);
  const FoldResult fold = run_fold(data, folds, 0, config);

  std::vector<EpochRecord> records = fold.warmup_records;
  records.insert(records.end(), fold.cape_records.begin(), fold.cape_records.end());
  write_text(opts.out / "epochs.csv", epoch_csv(records));
  write_checkpoint(opts.out / "bce.ckpt", fold.bce_params);
  write_checkpoint(opts.out / "cape.ckpt", fold.cape_params);
  write_text(opts.out / "test_metrics.csv", arm_metrics_csv(fold.bce, fold.cape));

  RunManifest manifest;
  manifest.command = "train";
  manifest.seed = config.seed;
  manifest.started = started;
  manifest.config = describe(config);
  manifest.config["dataset"] = opts.dataset.string();
  manifest.config["dataset_sha256"] = sha256_file(opts.dataset);
  manifest.config["best_epoch"] = std::to_string(fold.best_epoch);
  manifest.config["stop_epoch"] = std::to_string(fold.stop_epoch);
  manifest.outputs = outputs;
  write_manifest(opts.out, manifest);
}

void cmd_evaluate(const EvaluateOptions& opts) {
  const std::string started = utc_timestamp();
  if (opts.oracle == opts.checkpoint.has_value()) {
    throw ConfigError("evaluate: give exactly one of --checkpoint or --oracle");
  }
  if (opts.bins < 1) throw ConfigError("--bins: must be at least 1");
  const Dataset data = read_dataset(opts.dataset);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  PixelSet pixels;
  if (opts.oracle) {
    pixels = collect_oracle(data, all);
  } else {
    const ModelParams params = read_checkpoint(*opts.checkpoint);
    if (params.channels() != data.channels()) {
      throw FormatError("shape mismatch: checkpoint expects " + std::to_string(params.channels()) +
                        " input channels, dataset has " + std::to_string(data.channels()));
    }
    pixels = collect_predictions(params, data, all);
  }

  const std::vector<std::string> outputs{"metrics.csv", "reliability.csv"};
  prepare_out(opts.out, outputs, opts.force);
  const MetricsReport report = evaluate_pixels(pixels, opts.bins);
  write_text(opts.out / "metrics.csv", metrics_csv(report));
  write_text(opts.out / "reliability.csv", reliability_csv(report.bins));

  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.started = started;
  manifest.config["dataset"] = opts.dataset.string();
  manifest.config["dataset_sha256"] = sha256_file(opts.dataset);
  manifest.config["predictor"] = opts.oracle ? "oracle" : opts.checkpoint->string();
  manifest.config["bins"] = std::to_string(opts.bins);
  manifest.outputs = outputs;
  write_manifest(opts.out, manifest);
}

std::size_t cmd_sweep(const SweepOptions& opts) {
  const std::string started = utc_timestamp();
  ConfigFile cfg = ConfigFile::load(opts.config);
  SweepGrid grid;
  TrainConfig config;
  read_field_config(cfg, grid.field, false);
  read_train_config(cfg, config);
  cfg.get("rhos", grid.rhos);
  cfg.get("sizes", grid.sizes);
  cfg.reject_unknown();
  if (opts.seed) config.seed = *opts.seed;
  if (opts.lambda) config.lambda = *opts.lambda;
  if (opts.bins) config.bins = *opts.bins;
  config.validate();
  if (opts.threads < 1) throw ConfigError("--threads: must be at least 1");

  const std::vector<std::string> outputs{"sweep.csv", "sweep_summary.csv", "ece_vs_rho.svg", "kl_vs_rho.svg"};
  prepare_out(opts.out, outputs, opts.force);

  const SweepReport report = run_experiment(grid, config, config.seed, opts.threads);
  write_text(opts.out / "sweep.csv", sweep_csv(report, config.folds));
  write_text(opts.out / "sweep_summary.csv", sweep_summary_csv(report));
  write_text(opts.out / "ece_vs_rho.svg", render_svg(sweep_chart(report, SweepMetric::kEce)));
  write_text(opts.out / "kl_vs_rho.svg", render_svg(sweep_chart(report, SweepMetric::kKl)));

  RunManifest manifest;
  manifest.command = "sweep";
  manifest.seed = config.seed;
  manifest.started = started;
  manifest.config = describe(config);
  auto field = describe(grid.field);
  field.erase("target_rate");
  field.erase("seed");
  merge(manifest.config, field, "field.");
  manifest.config["rhos"] = join(grid.rhos);
  manifest.config["sizes"] = join(grid.sizes);
  manifest.config["threads"] = std::to_string(opts.threads);
  manifest.config["failed_cells"] = std::to_string(report.failed_cells());
  manifest.outputs = outputs;
  write_manifest(opts.out, manifest);
  return report.failed_cells();
}

fs::path cmd_plot(const PlotOptions& opts) {
  const std::string started = utc_timestamp();
  const auto bytes = read_file(opts.csv);
  const CsvTable table = parse_csv(std::string(bytes.begin(), bytes.end()));
  const auto has = [&](std::string_view name) {
    return std::find(table.header.begin(), table.header.end(), name) != table.header.end();
  };

  std::string svg;
  if (has("phase")) {
    const auto charts = learning_curve_charts(table);
    svg = render_svg(charts, 2);
  } else if (has("p_emp")) {
    svg = render_svg(reliability_chart(table));
  } else {
    throw FormatError(opts.csv.string() + ": line 1: header matches neither the epoch nor the reliability schema");
  }

  fs::path dir = opts.out.empty() ? opts.csv.parent_path() : opts.out;
  if (dir.empty()) dir = ".";
  // Plots usually land next to another run's outputs, so each chart gets
  // its own manifest.
  const std::string name = opts.csv.stem().string() + ".svg";
  const std::string manifest_name = opts.csv.stem().string() + ".manifest.json";
  prepare_out(dir, {name}, opts.force, manifest_name);
  const fs::path target = dir / name;
  write_text(target, svg);

  RunManifest manifest;
  manifest.command = "plot";
  manifest.started = started;
  manifest.config["csv"] = opts.csv.string();
  manifest.config["csv_sha256"] = sha256_hex(bytes);
  manifest.outputs = {name};
  write_manifest(dir, manifest, manifest_name);
  return target;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Calibrated probability estimation for synthetic segmentation", kToolName};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic dataset");
  generate->add_option("--config", gen.config, "Generator config file")->required();
  generate->add_option("--out", gen.out, "Output directory")->required();
  generate->add_option("--seed", gen.seed, "Override the config seed");
  generate->add_flag("--force", gen.force, "Overwrite existing outputs");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Warm-up plus CaPE training on one fold rotation");
  train_cmd->add_option("dataset", train.dataset, "Dataset file")->required();
  train_cmd->add_option("--config", train.config, "Training config file");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--seed", train.seed, "Override the config seed");
  train_cmd->add_option("--lambda", train.lambda, "Calibration loss weight");
  train_cmd->add_option("--bins", train.bins, "Quantile bin count");
  train_cmd->add_option("--threads", train.threads, "Worker threads")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--force", train.force, "Overwrite existing outputs");

  EvaluateOptions eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Calibration metrics of a checkpoint or the oracle");
  eval_cmd->add_option("dataset", eval.dataset, "Dataset file")->required();
  auto* ckpt = eval_cmd->add_option("--checkpoint", eval.checkpoint, "Model checkpoint");
  auto* oracle = eval_cmd->add_flag("--oracle", eval.oracle, "Use true_p as the predictions");
  ckpt->excludes(oracle);
  eval_cmd->add_option("--bins", eval.bins, "Quantile bin count");
  eval_cmd->add_option("--out", eval.out, "Output directory")->required();
  eval_cmd->add_flag("--force", eval.force, "Overwrite existing outputs");

  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Event-rate by dataset-size experiment grid");
  sweep_cmd->add_option("--config", sweep.config, "Sweep config file")->required();
  sweep_cmd->add_option("--out", sweep.out, "Output directory")->required();
  sweep_cmd->add_option("--seed", sweep.seed, "Master seed");
  sweep_cmd->add_option("--lambda", sweep.lambda, "Calibration loss weight");
  sweep_cmd->add_option("--bins", sweep.bins, "Quantile bin count");
  sweep_cmd->add_option("--threads", sweep.threads, "Worker threads")->check(CLI::PositiveNumber);
  sweep_cmd->add_flag("--force", sweep.force, "Overwrite existing outputs");

  PlotOptions plot;
  auto* plot_cmd = app.add_subcommand("plot", "Render an epoch or reliability CSV as SVG");
  plot_cmd->add_option("csv", plot.csv, "epochs.csv or reliability.csv")->required();
  plot_cmd->add_option("--out", plot.out, "Output directory (default: next to the CSV)");
  plot_cmd->add_flag("--force", plot.force, "Overwrite existing outputs");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (generate->parsed()) {
      cmd_generate(gen);
      out << "wrote " << (gen.out / "dataset.bin").string() << '\n';
    } else if (train_cmd->parsed()) {
      cmd_train(train);
      out << "wrote " << train.out.string() << '\n';
    } else if (eval_cmd->parsed()) {
      cmd_evaluate(eval);
      out << "wrote " << eval.out.string() << '\n';
    } else if (sweep_cmd->parsed()) {
      const std::size_t failed = cmd_sweep(sweep);
      out << "wrote " << sweep.out.string() << '\n';
      if (failed > 0) {
        err << "error: " << failed << " sweep cell(s) failed; see sweep_summary.csv\n";
        return kExitPartial;
      }
    } else if (plot_cmd->parsed()) {
      out << "wrote " << cmd_plot(plot).string() << '\n';
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormat;
  }
  return kExitOk;
}

}  // namespace cape
