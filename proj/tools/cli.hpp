#pragma once

// The spinread command-line tool. Every numeric parameter comes from a JSON
// config document; flags carry only paths and the seed/threads overrides.
// docs/FORMATS.md lists the config keys and every output file.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinread/experiments.hpp"

namespace spinread::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsageError = 1, kRuntimeError = 2 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  TunnelConfig tunnel;
  NoiseSpec noise;
  std::size_t n_per_class = 2000;
  // Unset means each command's own default set.
  std::optional<std::vector<ClassifierKind>> classifiers;
  ClassifierSettings settings;
  bool train_seed_given = false;

  NoiseKind sweep_kind = NoiseKind::Gaussian;
  std::vector<double> sweep_levels{0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};

  std::vector<double> t_wait_us = T1ExperimentSpec::default_wait_times();
  std::size_t shots_per_point = 2000;
  double t1_us = 68.0;
  double p_down_init = 1.0;
  bool relax_during_readout = true;
  ThresholdObjective threshold_objective = ThresholdObjective::Accuracy;

  // The parsed document, keys sorted; hashed into every manifest.
  nlohmann::json canonical;
};

// Throws ConfigError on unknown keys, wrong types or out-of-range values.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies the --seed override and fills in derived defaults.
void apply_seed(ExperimentConfig& cfg, std::uint64_t seed);

std::uint64_t fnv1a64(std::string_view bytes);
std::string config_hash(const ExperimentConfig& cfg);

// Writes `content` to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct CommandOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::filesystem::path dataset;
  std::filesystem::path model;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void cmd_simulate(const CommandOptions& opts);
void cmd_train(const CommandOptions& opts);
void cmd_eval(const CommandOptions& opts);
void cmd_sweep(const CommandOptions& opts);
void cmd_spike(const CommandOptions& opts);
void cmd_t1(const CommandOptions& opts);

// Full entry point, exceptions mapped to exit codes.
int run(int argc, char** argv);

}  // namespace spinread::cli
