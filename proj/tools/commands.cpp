#include <cmath>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "spinread/trace_io.hpp"

namespace spinread::cli {
namespace {

using nlohmann::json;

// Stream derivation shared with prepare_classifiers: data, split, then T1 shots.
constexpr std::uint64_t kDataStream = 0;
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kShotStream = 2;

ExperimentConfig load(const CommandOptions& opts) {
  ExperimentConfig cfg = load_config(opts.config);
  if (opts.seed) apply_seed(cfg, *opts.seed);
  return cfg;
}

std::size_t threads_of(const CommandOptions& opts) {
  if (!opts.threads) return 1;
  if (*opts.threads < 1) throw ConfigError("--threads must be >= 1");
  return *opts.threads;
}

std::vector<ClassifierKind> classifiers_or(const ExperimentConfig& cfg,
                                           std::vector<ClassifierKind> fallback) {
  std::vector<ClassifierKind> kinds = cfg.classifiers.value_or(std::move(fallback));
  if (kinds.empty()) throw ConfigError("classifiers: empty set, nothing to do");
  return kinds;
}

std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
  std::filesystem::path out = p;
  out += suffix;
  return out;
}

void prepare_dir(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir) && !std::filesystem::is_directory(dir)) {
    throw std::runtime_error("'" + dir.string() + "' exists and is not a directory");
  }
  std::filesystem::create_directories(dir);
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

void write_manifest(const std::filesystem::path& path, const ExperimentConfig& cfg,
                    const std::string& command, const std::vector<std::string>& outputs) {
  json m;
  m["tool"] = "spinread";
  m["tool_version"] = kToolVersion;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["config_hash"] = config_hash(cfg);
  m["config"] = cfg.canonical;
  m["outputs"] = outputs;
  write_json(path, m);
}

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string line;
  for (const std::string& c : cells) {
    if (!line.empty()) line += ',';
    line += c;
  }
  return line + "\n";
}

std::string num(double v) { return format_double(v); }
std::string num(std::size_t v) { return std::to_string(v); }

json confusion_json(const Confusion& c) {
  return {{"event_as_event", c.event_as_event},
          {"event_as_noevent", c.event_as_noevent},
          {"noevent_as_event", c.noevent_as_event},
          {"noevent_as_noevent", c.noevent_as_noevent}};
}

json report_json(const AccuracyReport& r) {
  json rows = json::array();
  for (const AccuracyRow& row : r.rows) {
    rows.push_back({{"classifier", to_string(row.classifier)},
                    {"level", row.level},
                    {"accuracy", row.accuracy},
                    {"eval_count", row.eval_count},
                    {"confusion", confusion_json(row.confusion)}});
  }
  json audit = json::array();
  for (const ClassifierAudit& a : r.audit) {
    json entry{{"level", a.level}};
    if (a.threshold) {
      entry["threshold"] = {{"threshold", a.threshold->threshold},
                            {"boxcar_width", a.threshold->boxcar_width}};
    }
    if (a.wavelet) {
      entry["wavelet"] = {{"scale", a.wavelet->scale},
                          {"coeff_threshold", a.wavelet->coeff_threshold}};
    }
    if (a.dnn_final_loss) entry["dnn_final_loss"] = *a.dnn_final_loss;
    audit.push_back(entry);
  }
  return {{"rows", rows}, {"audit", audit}};
}

std::string accuracy_csv(const AccuracyReport& r) {
  std::string out = csv_row({"classifier", "level", "accuracy", "eval_count", "event_as_event",
                             "event_as_noevent", "noevent_as_event", "noevent_as_noevent"});
  for (const AccuracyRow& row : r.rows) {
    out += csv_row({std::string(to_string(row.classifier)), num(row.level), num(row.accuracy),
                    num(row.eval_count), num(row.confusion.event_as_event),
                    num(row.confusion.event_as_noevent), num(row.confusion.noevent_as_event),
                    num(row.confusion.noevent_as_noevent)});
  }
  return out;
}

// x, y, error columns; the error is the binomial standard error of the accuracy.
std::string accuracy_plot_csv(const AccuracyReport& r) {
  std::string out = csv_row({"series", "x", "y", "yerr"});
  for (const AccuracyRow& row : r.rows) {
    const double n = static_cast<double>(row.eval_count);
    const double err = n > 0 ? std::sqrt(row.accuracy * (1.0 - row.accuracy) / n) : 0.0;
    out += csv_row({std::string(to_string(row.classifier)), num(row.level), num(row.accuracy),
                    num(err)});
  }
  return out;
}

std::string loss_csv(const std::vector<double>& history) {
  std::string out = csv_row({"epoch", "loss"});
  for (std::size_t e = 0; e < history.size(); ++e) out += csv_row({num(e + 1), num(history[e])});
  return out;
}

std::string dataset_bytes(const std::filesystem::path& path, const LabeledDataset& ds,
                          std::optional<double> baseline) {
  std::ostringstream os(std::ios::binary);
  if (is_binary_path(path)) {
    write_dataset_binary(os, ds, baseline);
  } else {
    write_dataset_text(os, ds, baseline);
  }
  return os.str();
}

std::pair<LabeledDataset, LabeledDataset> held_out_split(const LabeledDataset& ds,
                                                         std::uint64_t seed) {
  const auto [n_train, n_eval] = split_sizes(ds.size());
  Rng split_rng = Rng(seed).split(kSplitStream);
  return split_dataset(ds, n_train, n_eval, split_rng);
}

json eval_json(const DnnModel& model, const LabeledDataset& ds) {
  const std::vector<Label> pred = predict_labels(model, ds.traces);
  return {{"count", ds.size()},
          {"accuracy", accuracy(pred, ds.labels)},
          {"confusion", confusion_json(confusion(pred, ds.labels))}};
}

DatasetFile load_dataset_for(const CommandOptions& opts, const ExperimentConfig& cfg) {
  if (!std::filesystem::exists(opts.dataset)) {
    throw std::runtime_error("dataset '" + opts.dataset.string() + "' does not exist");
  }
  DatasetFile file = read_dataset(opts.dataset);
  if (file.header.length != cfg.settings.dnn.input_len) {
    throw ConfigError("dataset traces have " + std::to_string(file.header.length) +
                      " samples, dnn.input_len is " + std::to_string(cfg.settings.dnn.input_len));
  }
  return file;
}

}  // namespace

void cmd_simulate(const CommandOptions& opts) {
  const ExperimentConfig cfg = load(opts);
  Rng rng = Rng(cfg.seed).split(kDataStream);
  const StandardizedDataset data =
      build_training_dataset(cfg.tunnel, cfg.noise, cfg.n_per_class, rng);
  const std::filesystem::path manifest = sibling(opts.out, ".manifest.json");
  write_file_atomic(opts.out, dataset_bytes(opts.out, data.dataset, data.baseline_mean));
  write_manifest(manifest, cfg, "simulate", {opts.out.filename().string()});
  std::cout << "wrote " << data.dataset.size() << " traces to " << opts.out.string() << "\n";
}

void cmd_train(const CommandOptions& opts) {
  const ExperimentConfig cfg = load(opts);
  const DatasetFile file = load_dataset_for(opts, cfg);
  auto [train_set, eval_set] = held_out_split(file.dataset, cfg.seed);

  const TrainResult result = train(train_set, cfg.settings.dnn, cfg.settings.train);
  json metrics;
  metrics["train"] = eval_json(result.model, train_set);
  metrics["eval"] = eval_json(result.model, eval_set);
  metrics["final_loss"] = result.loss_history.back();
  metrics["best_epoch"] = result.best_epoch + 1;
  metrics["best_loss"] = result.loss_history[result.best_epoch];
  metrics["epochs"] = result.loss_history.size();

  std::ostringstream model_text;
  save_model(model_text, result.model);
  write_file_atomic(opts.out, model_text.str());
  write_file_atomic(sibling(opts.out, ".loss.csv"), loss_csv(result.loss_history));
  write_json(sibling(opts.out, ".metrics.json"), metrics);
  const std::string name = opts.out.filename().string();
  write_manifest(sibling(opts.out, ".manifest.json"), cfg, "train",
                 {name, name + ".loss.csv", name + ".metrics.json"});
  std::cout << "eval accuracy " << format_double(metrics["eval"]["accuracy"].get<double>())
            << " on " << eval_set.size() << " held-out traces\n";
}

void cmd_eval(const CommandOptions& opts) {
  const ExperimentConfig cfg = load(opts);
  const DnnModel model = load_model(opts.model);
  if (!(model.config == cfg.settings.dnn)) {
    throw ConfigError("model architecture does not match the dnn section of the config");
  }
  const DatasetFile file = load_dataset_for(opts, cfg);
  auto [train_set, eval_set] = held_out_split(file.dataset, cfg.seed);
  json metrics;
  metrics["eval"] = eval_json(model, eval_set);
  metrics["all"] = eval_json(model, file.dataset);
  write_json(opts.out, metrics);
  std::cout << "eval accuracy " << format_double(metrics["eval"]["accuracy"].get<double>())
            << ", all " << format_double(metrics["all"]["accuracy"].get<double>()) << "\n";
}

void cmd_sweep(const CommandOptions& opts) {
  const ExperimentConfig cfg = load(opts);
  SweepSpec spec;
  spec.noise_kind = cfg.sweep_kind;
  spec.levels = cfg.sweep_levels;
  spec.n_per_class = cfg.n_per_class;
  spec.classifiers = classifiers_or(
      cfg, {ClassifierKind::Dnn, ClassifierKind::Wavelet, ClassifierKind::Threshold});
  spec.seed = cfg.seed;
  spec.base_noise = cfg.noise;
  spec.tunnel = cfg.tunnel;
  spec.settings = cfg.settings;
  spec.threads = threads_of(opts);

  const AccuracyReport report = run_sweep(spec);
  prepare_dir(opts.out);
  json doc = report_json(report);
  doc["noise_kind"] = to_string(spec.noise_kind);
  write_json(opts.out / "report.json", doc);
  write_file_atomic(opts.out / "accuracy.csv", accuracy_csv(report));
  write_file_atomic(opts.out / "plot.csv", accuracy_plot_csv(report));
  write_manifest(opts.out / "manifest.json", cfg, "sweep",
                 {"report.json", "accuracy.csv", "plot.csv"});
  std::cout << accuracy_csv(report);
}

void cmd_spike(const CommandOptions& opts) {
  const ExperimentConfig cfg = load(opts);
  if (cfg.noise.drift_level != 0.0) {
    throw ConfigError("noise.drift_level: the spike scenario takes Gaussian and spike noise only");
  }
  // Noise keys absent from the config keep the scenario defaults.
  SpikeScenario spec;
  const json noise = cfg.canonical.value("noise", json::object());
  if (noise.contains("gaussian_level")) spec.gaussian_level = cfg.noise.gaussian_level;
  if (noise.contains("spike_rate_per_trace")) spec.spike_rate_per_trace = cfg.noise.spike_rate_per_trace;
  if (noise.contains("spike_amp")) spec.spike_amp = cfg.noise.spike_amp;
  if (noise.contains("spike_width_samples")) spec.spike_width_samples = cfg.noise.spike_width_samples;
  spec.n_per_class = cfg.n_per_class;
  spec.classifiers = classifiers_or(cfg, {ClassifierKind::Dnn, ClassifierKind::Threshold});
  spec.seed = cfg.seed;
  spec.tunnel = cfg.tunnel;
  spec.settings = cfg.settings;
  threads_of(opts);

  const AccuracyReport report = run_spike_scenario(spec);
  prepare_dir(opts.out);
  json doc = report_json(report);
  doc["spike_rate_per_trace"] = spec.spike_rate_per_trace;
  write_json(opts.out / "report.json", doc);
  write_file_atomic(opts.out / "accuracy.csv", accuracy_csv(report));
  write_manifest(opts.out / "manifest.json", cfg, "spike", {"report.json", "accuracy.csv"});
  std::cout << accuracy_csv(report);
}

void cmd_t1(const CommandOptions& opts) {
  const ExperimentConfig cfg = load(opts);
  const std::vector<ClassifierKind> kinds =
      classifiers_or(cfg, {ClassifierKind::Dnn, ClassifierKind::Threshold});
  T1ExperimentSpec spec;
  spec.t_wait_list = cfg.t_wait_us;
  spec.shots_per_point = cfg.shots_per_point;
  spec.spin.t1_us = cfg.t1_us;
  spec.spin.p_down_init = cfg.p_down_init;
  spec.spin.relax_during_readout = cfg.relax_during_readout;
  spec.spin.tunnel = cfg.tunnel;
  spec.noise = cfg.noise;
  spec.classifiers = kinds;
  spec.seed = Rng(cfg.seed).split(kShotStream).next_u64();
  spec.threshold_objective = cfg.threshold_objective;
  spec.threads = threads_of(opts);
  spec.validate();

  const PreparedClassifiers prepared =
      prepare_classifiers(cfg.tunnel, cfg.noise, cfg.n_per_class, kinds, cfg.settings, cfg.seed);
  const T1Result result = run_t1_experiment(spec, prepared.trained);

  std::string curves = csv_row({"series", "t_wait_us", "p_event", "sigma"});
  std::string fits = csv_row({"series", "t1_us", "sigma_t1", "amplitude_a", "sigma_a", "offset_b",
                              "sigma_b", "chi2", "status"});
  json curves_json = json::array();
  for (const DecayCurve& c : result.curves) {
    for (std::size_t i = 0; i < c.t_wait_us.size(); ++i) {
      curves += csv_row({c.name, num(c.t_wait_us[i]), num(c.p_event[i]), num(c.sigma[i])});
    }
    json entry{{"name", c.name}, {"t_wait_us", c.t_wait_us}, {"p_event", c.p_event},
               {"sigma", c.sigma}};
    if (c.fit) {
      const FitResult& f = *c.fit;
      fits += csv_row({c.name, num(f.t1_us), num(f.sigma_t1), num(f.amplitude_a), num(f.sigma_a),
                       num(f.offset_b), num(f.sigma_b), num(f.chi2), "ok"});
      entry["fit"] = {{"t1_us", f.t1_us},           {"sigma_t1", f.sigma_t1},
                      {"amplitude_a", f.amplitude_a}, {"sigma_a", f.sigma_a},
                      {"offset_b", f.offset_b},       {"sigma_b", f.sigma_b},
                      {"chi2", f.chi2},               {"iterations", f.iterations}};
    } else {
      fits += csv_row({c.name, "", "", "", "", "", "", "", "failed"});
      entry["fit_error"] = c.fit_error;
    }
    curves_json.push_back(entry);
  }

  json doc;
  doc["classifier_eval"] = report_json(prepared.eval_report);
  doc["curves"] = curves_json;
  doc["threshold_objective"] = to_string(spec.threshold_objective);
  if (result.threshold_used) doc["threshold_used"] = result.threshold_used->threshold;

  prepare_dir(opts.out);
  std::vector<std::string> outputs{"report.json", "curves.csv", "fits.csv", "plot.csv"};
  write_json(opts.out / "report.json", doc);
  write_file_atomic(opts.out / "curves.csv", curves);
  write_file_atomic(opts.out / "fits.csv", fits);
  // Same rows as curves.csv under the generic plot header.
  write_file_atomic(opts.out / "plot.csv",
                    csv_row({"series", "x", "y", "yerr"}) + curves.substr(curves.find('\n') + 1));
  if (!prepared.trained.dnn_loss_history.empty()) {
    write_file_atomic(opts.out / "loss.csv", loss_csv(prepared.trained.dnn_loss_history));
    outputs.push_back("loss.csv");
  }
  write_manifest(opts.out / "manifest.json", cfg, "t1", outputs);
  std::cout << fits;
}

int run(int argc, char** argv) {
  CLI::App app{"Simulate spin-readout traces, train classifiers and run readout experiments",
               "spinread"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  CommandOptions opts;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  auto common = [&](CLI::App* sub, const char* out_help) {
    sub->add_option("-c,--config", opts.config, "JSON experiment config")->required();
    sub->add_option("-o,--out", opts.out, out_help)->required();
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--threads", threads, "Cap on worker threads");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "Generate a labeled dataset");
  common(simulate, "Dataset file (.bin for binary)");
  CLI::App* train_cmd = app.add_subcommand("train", "Train the DNN on a dataset");
  common(train_cmd, "Model file");
  train_cmd->add_option("-d,--dataset", opts.dataset, "Dataset file")->required();
  CLI::App* eval = app.add_subcommand("eval", "Score a trained model on a dataset");
  common(eval, "Metrics JSON file");
  eval->add_option("-d,--dataset", opts.dataset, "Dataset file")->required();
  eval->add_option("-m,--model", opts.model, "Model file")->required();
  CLI::App* sweep = app.add_subcommand("sweep", "Accuracy versus noise level");
  common(sweep, "Output directory");
  CLI::App* spike = app.add_subcommand("spike", "Accuracy under spike noise");
  common(spike, "Output directory");
  CLI::App* t1 = app.add_subcommand("t1", "Relaxation-time experiment");
  common(t1, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }
  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed") > 0) opts.seed = seed;
    if (sub->count("--threads") > 0) opts.threads = threads;
  }

  try {
    if (simulate->parsed()) cmd_simulate(opts);
    if (train_cmd->parsed()) cmd_train(opts);
    if (eval->parsed()) cmd_eval(opts);
    if (sweep->parsed()) cmd_sweep(opts);
    if (spike->parsed()) cmd_spike(opts);
    if (t1->parsed()) cmd_t1(opts);
  } catch (const ConfigError& e) {
    std::cerr << "spinread: config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const TrainingDiverged& e) {
    std::cerr << "spinread: training diverged at epoch " << e.epoch() << ": " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "spinread: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace spinread::cli
