#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <type_traits>

#include "cli.hpp"

namespace spinread::cli {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.contains(key)) {
      throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

std::string path_of(const std::string& where, const char* key) {
  return where.empty() ? key : where + "." + key;
}

void read(const json& obj, const std::string& where, const char* key, double& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(path_of(where, key) + ": expected a number");
  out = v.get<double>();
  if (!std::isfinite(out)) throw ConfigError(path_of(where, key) + ": must be finite");
}

template <typename UInt>
  requires std::is_unsigned_v<UInt>
void read(const json& obj, const std::string& where, const char* key, UInt& out,
          bool* given = nullptr) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  // Documents built in code hold signed integers; parsed text holds unsigned.
  const bool non_negative =
      v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  if (!non_negative) {
    throw ConfigError(path_of(where, key) + ": expected a non-negative integer");
  }
  out = v.get<UInt>();
  if (given) *given = true;
}

void read(const json& obj, const std::string& where, const char* key, bool& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(path_of(where, key) + ": expected true or false");
  out = v.get<bool>();
}

template <typename Enum, typename Parse>
void read_enum(const json& obj, const std::string& where, const char* key, Enum& out,
               Parse parse) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(path_of(where, key) + ": expected a string");
  try {
    out = parse(v.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path_of(where, key) + ": " + e.what());
  }
}

void read(const json& obj, const std::string& where, const char* key, std::vector<double>& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(path_of(where, key) + ": expected an array of numbers");
  out.clear();
  for (const json& e : v) {
    if (!e.is_number()) throw ConfigError(path_of(where, key) + ": expected an array of numbers");
    out.push_back(e.get<double>());
  }
}

// Runs a library validate() and reports its complaint as a config error.
template <typename F>
void checked(const std::string& where, F f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void parse_tunnel(const json& o, TunnelConfig& t) {
  reject_unknown(o, "tunnel", {"tau_tunnel_us", "tau_return_us", "trace_len_us", "dt_us", "amp_event"});
  read(o, "tunnel", "tau_tunnel_us", t.tau_tunnel_us);
  read(o, "tunnel", "tau_return_us", t.tau_return_us);
  read(o, "tunnel", "trace_len_us", t.trace_len_us);
  read(o, "tunnel", "dt_us", t.dt_us);
  read(o, "tunnel", "amp_event", t.amp_event);
  checked("tunnel", [&] { t.validate(); });
}

void parse_noise(const json& o, NoiseSpec& n) {
  reject_unknown(o, "noise", {"gaussian_level", "drift_level", "drift_freq_khz",
                              "spike_rate_per_trace", "spike_amp", "spike_width_samples"});
  read(o, "noise", "gaussian_level", n.gaussian_level);
  read(o, "noise", "drift_level", n.drift_level);
  read(o, "noise", "drift_freq_khz", n.drift_freq_khz);
  read(o, "noise", "spike_rate_per_trace", n.spike_rate_per_trace);
  read(o, "noise", "spike_amp", n.spike_amp);
  read(o, "noise", "spike_width_samples", n.spike_width_samples);
  checked("noise", [&] { n.validate(); });
}

void parse_dnn(const json& o, DnnConfig& d) {
  reject_unknown(o, "dnn", {"input_len", "conv_layers", "kernel", "stride", "conv_channels",
                            "conv_activation", "lstm_hidden", "lstm_input"});
  read(o, "dnn", "input_len", d.input_len);
  read(o, "dnn", "conv_layers", d.conv_layers);
  read(o, "dnn", "kernel", d.kernel);
  read(o, "dnn", "stride", d.stride);
  read(o, "dnn", "conv_channels", d.conv_channels);
  read_enum(o, "dnn", "conv_activation", d.conv_activation, activation_from_string);
  read(o, "dnn", "lstm_hidden", d.lstm_hidden);
  read(o, "dnn", "lstm_input", d.lstm_input);
  checked("dnn", [&] { d.validate_runnable(); });
}

void parse_train(const json& o, TrainConfig& t, bool& seed_given) {
  reject_unknown(o, "train", {"optimizer", "learning_rate", "epochs", "batch_size", "seed", "init",
                              "init_scale", "conv_bias_init", "clip_norm"});
  read_enum(o, "train", "optimizer", t.optimizer, optimizer_from_string);
  read(o, "train", "learning_rate", t.learning_rate);
  read(o, "train", "epochs", t.epochs);
  read(o, "train", "batch_size", t.batch_size);
  read(o, "train", "seed", t.seed, &seed_given);
  read_enum(o, "train", "init", t.init, init_from_string);
  read(o, "train", "init_scale", t.init_scale);
  read(o, "train", "conv_bias_init", t.conv_bias_init);
  read(o, "train", "clip_norm", t.clip_norm);
  checked("train", [&] { t.validate(); });
}

void parse_classifiers(const json& v, std::vector<ClassifierKind>& out) {
  if (!v.is_array()) throw ConfigError("classifiers: expected an array of names");
  out.clear();
  for (const json& e : v) {
    if (!e.is_string()) throw ConfigError("classifiers: expected an array of names");
    try {
      const ClassifierKind k = classifier_from_string(e.get<std::string>());
      if (std::find(out.begin(), out.end(), k) != out.end()) {
        throw ConfigError("classifiers: '" + e.get<std::string>() + "' listed twice");
      }
      out.push_back(k);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(std::string("classifiers: ") + ex.what());
    }
  }
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  reject_unknown(doc, "", {"seed", "tunnel", "noise", "dataset", "classifiers", "dnn", "train",
                           "threshold", "wavelet", "sweep", "t1"});
  ExperimentConfig cfg;
  read(doc, "", "seed", cfg.seed);
  if (doc.contains("tunnel")) parse_tunnel(doc["tunnel"], cfg.tunnel);
  if (doc.contains("noise")) parse_noise(doc["noise"], cfg.noise);
  if (doc.contains("dataset")) {
    const json& o = doc["dataset"];
    reject_unknown(o, "dataset", {"n_per_class"});
    read(o, "dataset", "n_per_class", cfg.n_per_class);
    if (cfg.n_per_class < 1) throw ConfigError("dataset.n_per_class: must be >= 1");
  }
  if (doc.contains("classifiers")) {
    cfg.classifiers.emplace();
    parse_classifiers(doc["classifiers"], *cfg.classifiers);
  }
  if (doc.contains("dnn")) parse_dnn(doc["dnn"], cfg.settings.dnn);
  if (doc.contains("train")) parse_train(doc["train"], cfg.settings.train, cfg.train_seed_given);
  if (doc.contains("threshold")) {
    const json& o = doc["threshold"];
    reject_unknown(o, "threshold", {"grid_points", "boxcar_width"});
    read(o, "threshold", "grid_points", cfg.settings.threshold_grid_points);
    read(o, "threshold", "boxcar_width", cfg.settings.threshold_boxcar);
    if (cfg.settings.threshold_grid_points < 1) throw ConfigError("threshold.grid_points: must be >= 1");
    if (cfg.settings.threshold_boxcar < 1) throw ConfigError("threshold.boxcar_width: must be >= 1");
  }
  if (doc.contains("wavelet")) {
    const json& o = doc["wavelet"];
    reject_unknown(o, "wavelet", {"max_scale", "threshold_points"});
    read(o, "wavelet", "max_scale", cfg.settings.wavelet.max_scale);
    read(o, "wavelet", "threshold_points", cfg.settings.wavelet.threshold_points);
    if (cfg.settings.wavelet.max_scale < 1) throw ConfigError("wavelet.max_scale: must be >= 1");
    if (cfg.settings.wavelet.threshold_points < 1) {
      throw ConfigError("wavelet.threshold_points: must be >= 1");
    }
  }
  if (doc.contains("sweep")) {
    const json& o = doc["sweep"];
    reject_unknown(o, "sweep", {"noise_kind", "levels"});
    read_enum(o, "sweep", "noise_kind", cfg.sweep_kind, noise_kind_from_string);
    read(o, "sweep", "levels", cfg.sweep_levels);
    if (cfg.sweep_levels.empty()) throw ConfigError("sweep.levels: must not be empty");
    for (double l : cfg.sweep_levels) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("sweep.levels: values must be >= 0");
    }
  }
  if (doc.contains("t1")) {
    const json& o = doc["t1"];
    reject_unknown(o, "t1", {"t_wait_us", "shots_per_point", "t1_us", "p_down_init",
                             "relax_during_readout", "threshold_objective"});
    read(o, "t1", "t_wait_us", cfg.t_wait_us);
    read(o, "t1", "shots_per_point", cfg.shots_per_point);
    read(o, "t1", "t1_us", cfg.t1_us);
    read(o, "t1", "p_down_init", cfg.p_down_init);
    read(o, "t1", "relax_during_readout", cfg.relax_during_readout);
    read_enum(o, "t1", "threshold_objective", cfg.threshold_objective,
              threshold_objective_from_string);
    T1ExperimentSpec probe;
    probe.t_wait_list = cfg.t_wait_us;
    probe.shots_per_point = cfg.shots_per_point;
    probe.spin.t1_us = cfg.t1_us;
    probe.spin.p_down_init = cfg.p_down_init;
    probe.spin.tunnel = cfg.tunnel;
    checked("t1", [&] { probe.validate(); });
  }
  cfg.canonical = doc;
  if (!cfg.train_seed_given) cfg.settings.train.seed = cfg.seed;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

void apply_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.canonical["seed"] = seed;
  if (!cfg.train_seed_given) cfg.settings.train.seed = seed;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.canonical.dump())));
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) {
      std::filesystem::remove(tmp);
      throw std::runtime_error("failed writing '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace spinread::cli
