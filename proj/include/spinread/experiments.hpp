#pragma once

// Experiment harness: the charging-line dataset protocol, accuracy sweeps over
// noise level, the spike-noise scenario and the T1 relaxation experiment.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spinread/baseline.hpp"
#include "spinread/core.hpp"
#include "spinread/dnn.hpp"
#include "spinread/fit.hpp"
#include "spinread/noise.hpp"
#include "spinread/simulator.hpp"

namespace spinread {

enum class ClassifierKind { Dnn, Wavelet, Threshold };

std::string_view to_string(ClassifierKind k);
ClassifierKind classifier_from_string(std::string_view text);

enum class NoiseKind { Gaussian, Drift };

std::string_view to_string(NoiseKind k);
NoiseKind noise_kind_from_string(std::string_view text);

// Noise-injected traces of both classes, standardized against the mean of the
// NoEvent population.
struct StandardizedDataset {
  LabeledDataset dataset;
  double baseline_mean = 0.0;
};

// n_per_class event traces plus n_per_class flat traces, noise injected,
// standardized, shuffled.
StandardizedDataset build_training_dataset(const TunnelConfig& cfg, const NoiseSpec& noise,
                                           std::size_t n_per_class, Rng& rng);

inline constexpr double kTrainFraction = 0.7;  // 2800 of 4000

// Train/eval sizes for a 2 * n_per_class dataset.
std::pair<std::size_t, std::size_t> split_sizes(std::size_t total);

struct ClassifierSettings {
  DnnConfig dnn;
  TrainConfig train;
  std::size_t threshold_grid_points = kThresholdGridPoints;
  std::size_t threshold_boxcar = 1;
  WaveletGrid wavelet;
};

struct TrainedClassifiers {
  double baseline_mean = 0.0;
  std::optional<DnnModel> dnn;
  std::optional<ThresholdClassifier> threshold;
  std::optional<WaveletClassifier> wavelet;
  std::vector<double> dnn_loss_history;

  bool has(ClassifierKind k) const;
  // Expects a standardized trace.
  Label classify(ClassifierKind k, const Trace& trace) const;
  std::vector<Label> classify_all(ClassifierKind k, std::span<const Trace> traces) const;
};

TrainedClassifiers fit_classifiers(const LabeledDataset& train, double baseline,
                                   std::span<const ClassifierKind> kinds,
                                   const ClassifierSettings& settings);

struct Confusion {
  std::size_t event_as_event = 0;
  std::size_t event_as_noevent = 0;
  std::size_t noevent_as_event = 0;
  std::size_t noevent_as_noevent = 0;

  std::size_t total() const {
    return event_as_event + event_as_noevent + noevent_as_event + noevent_as_noevent;
  }
};

struct AccuracyRow {
  ClassifierKind classifier;
  double level = 0.0;
  double accuracy = 0.0;
  std::size_t eval_count = 0;
  Confusion confusion;
};

// Optimized parameters of each baseline, recorded per level for audit.
struct ClassifierAudit {
  double level = 0.0;
  std::optional<ThresholdClassifier> threshold;
  std::optional<WaveletClassifier> wavelet;
  std::optional<double> dnn_final_loss;
};

struct AccuracyReport {
  std::vector<AccuracyRow> rows;
  std::vector<ClassifierAudit> audit;

  const AccuracyRow* find(ClassifierKind k, double level) const;
};

Confusion confusion(std::span<const Label> predicted, std::span<const Label> truth);
AccuracyRow evaluate(const TrainedClassifiers& trained, ClassifierKind k, double level,
                     const LabeledDataset& eval);

struct SweepSpec {
  NoiseKind noise_kind = NoiseKind::Gaussian;
  std::vector<double> levels;
  std::size_t n_per_class = 2000;
  std::vector<ClassifierKind> classifiers{ClassifierKind::Dnn, ClassifierKind::Wavelet,
                                          ClassifierKind::Threshold};
  std::uint64_t seed = 1;
  // Components not being swept, e.g. the 0.1 Gaussian floor under a drift sweep.
  NoiseSpec base_noise;
  TunnelConfig tunnel;
  ClassifierSettings settings;
  std::size_t threads = 1;

  void validate() const;
  NoiseSpec noise_at(double level) const;
};

// Per level: build a dataset, split 70/30, fit every classifier on the train
// part and score it on the held-out part.
AccuracyReport run_sweep(const SweepSpec& spec);

struct SpikeScenario {
  double gaussian_level = 0.1;
  double spike_rate_per_trace = 1.0;
  double spike_amp = 1.2;
  std::size_t spike_width_samples = 3;
  std::size_t n_per_class = 2000;
  std::vector<ClassifierKind> classifiers{ClassifierKind::Dnn, ClassifierKind::Threshold};
  std::uint64_t seed = 1;
  TunnelConfig tunnel;
  ClassifierSettings settings;

  NoiseSpec noise() const;
};

// Rows are keyed by the spike rate.
AccuracyReport run_spike_scenario(const SpikeScenario& spec);

enum class ThresholdObjective { Accuracy, Visibility };

std::string_view to_string(ThresholdObjective o);
ThresholdObjective threshold_objective_from_string(std::string_view text);

struct T1ExperimentSpec {
  std::vector<double> t_wait_list = default_wait_times();
  std::size_t shots_per_point = 2000;
  SpinReadoutConfig spin;
  NoiseSpec noise;
  std::vector<ClassifierKind> classifiers{ClassifierKind::Dnn, ClassifierKind::Threshold};
  std::uint64_t seed = 1;
  // Accuracy keeps the threshold optimized on the training set. Visibility
  // re-picks it to maximize p(first wait) - p(last wait) on the shots.
  ThresholdObjective threshold_objective = ThresholdObjective::Accuracy;
  std::size_t threads = 1;

  void validate() const;
  static std::vector<double> default_wait_times();
};

struct DecayCurve {
  std::string name;  // classifier name, or "truth" for simulator labels
  std::vector<double> t_wait_us;
  std::vector<double> p_event;
  std::vector<double> sigma;
  std::optional<FitResult> fit;
  std::string fit_error;
};

struct T1Result {
  std::vector<DecayCurve> curves;  // one per classifier, then "truth"
  std::optional<ThresholdClassifier> threshold_used;

  const DecayCurve* find(std::string_view name) const;
};

// Classifiers come pre-trained at the same noise (see prepare_classifiers).
T1Result run_t1_experiment(const T1ExperimentSpec& spec, const TrainedClassifiers& trained);

struct PreparedClassifiers {
  TrainedClassifiers trained;
  AccuracyReport eval_report;  // held-out accuracy, level = gaussian level
};

// Charging-line protocol: build a dataset at `noise`, split 70/30, fit, score.
PreparedClassifiers prepare_classifiers(const TunnelConfig& tunnel, const NoiseSpec& noise,
                                        std::size_t n_per_class,
                                        std::span<const ClassifierKind> kinds,
                                        const ClassifierSettings& settings, std::uint64_t seed);

}  // namespace spinread
