#include "spinread/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>
#include <thread>

namespace spinread {
namespace {

// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
// written to per-index slots so the output order never depends on scheduling.
template <typename Body>
void parallel_for(std::size_t n, std::size_t threads, Body body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += threads) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void require_classifiers(std::span<const ClassifierKind> kinds) {
  if (kinds.empty()) throw std::invalid_argument("no classifiers requested");
}

// Level-indexed streams: data, split.
constexpr std::uint64_t kDataStream = 0;
constexpr std::uint64_t kSplitStream = 1;

struct LevelOutcome {
  std::vector<AccuracyRow> rows;
  ClassifierAudit audit;
};

LevelOutcome run_level(const TunnelConfig& tunnel, const NoiseSpec& noise, double level,
                       std::size_t n_per_class, std::span<const ClassifierKind> kinds,
                       const ClassifierSettings& settings, const Rng& level_rng) {
  Rng data_rng = level_rng.split(kDataStream);
  Rng split_rng = level_rng.split(kSplitStream);
  StandardizedDataset data = build_training_dataset(tunnel, noise, n_per_class, data_rng);
  const auto [n_train, n_eval] = split_sizes(data.dataset.size());
  auto [train_set, eval_set] = split_dataset(data.dataset, n_train, n_eval, split_rng);

  TrainedClassifiers trained = fit_classifiers(train_set, data.baseline_mean, kinds, settings);
  LevelOutcome out;
  out.audit.level = level;
  out.audit.threshold = trained.threshold;
  out.audit.wavelet = trained.wavelet;
  if (!trained.dnn_loss_history.empty()) out.audit.dnn_final_loss = trained.dnn_loss_history.back();
  for (ClassifierKind k : kinds) out.rows.push_back(evaluate(trained, k, level, eval_set));
  return out;
}

}  // namespace

std::string_view to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::Dnn:
      return "dnn";
    case ClassifierKind::Wavelet:
      return "wavelet";
    case ClassifierKind::Threshold:
      return "threshold";
  }
  return "dnn";
}

ClassifierKind classifier_from_string(std::string_view text) {
  if (text == "dnn") return ClassifierKind::Dnn;
  if (text == "wavelet") return ClassifierKind::Wavelet;
  if (text == "threshold") return ClassifierKind::Threshold;
  throw std::invalid_argument("unknown classifier '" + std::string(text) + "'");
}

std::string_view to_string(NoiseKind k) { return k == NoiseKind::Gaussian ? "gaussian" : "drift"; }

NoiseKind noise_kind_from_string(std::string_view text) {
  if (text == "gaussian") return NoiseKind::Gaussian;
  if (text == "drift") return NoiseKind::Drift;
  throw std::invalid_argument("unknown noise kind '" + std::string(text) + "'");
}

std::string_view to_string(ThresholdObjective o) {
  return o == ThresholdObjective::Accuracy ? "accuracy" : "visibility";
}

ThresholdObjective threshold_objective_from_string(std::string_view text) {
  if (text == "accuracy") return ThresholdObjective::Accuracy;
  if (text == "visibility") return ThresholdObjective::Visibility;
  throw std::invalid_argument("unknown threshold objective '" + std::string(text) + "'");
}

StandardizedDataset build_training_dataset(const TunnelConfig& cfg, const NoiseSpec& noise,
                                           std::size_t n_per_class, Rng& rng) {
  cfg.validate();
  noise.validate();
  if (n_per_class == 0) throw std::invalid_argument("n_per_class must be >= 1");

  std::vector<Trace> traces;
  std::vector<Label> labels;
  traces.reserve(2 * n_per_class);
  labels.reserve(2 * n_per_class);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    traces.push_back(apply_noise(gen_event_trace(cfg, rng), noise, rng));
    labels.push_back(Label::Event);
  }
  for (std::size_t i = 0; i < n_per_class; ++i) {
    traces.push_back(apply_noise(gen_noevent_trace(cfg), noise, rng));
    labels.push_back(Label::NoEvent);
  }

  const double base =
      baseline_mean(std::span<const Trace>(traces).subspan(n_per_class, n_per_class));
  for (Trace& t : traces) t = standardize(t, base);

  std::vector<std::size_t> order(traces.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  LabeledDataset ds(std::move(traces), std::move(labels), rng.seed());
  return {ds.subset(order), base};
}

std::pair<std::size_t, std::size_t> split_sizes(std::size_t total) {
  const auto n_train = static_cast<std::size_t>(std::llround(kTrainFraction * total));
  return {n_train, total - n_train};
}

bool TrainedClassifiers::has(ClassifierKind k) const {
  switch (k) {
    case ClassifierKind::Dnn:
      return dnn.has_value();
    case ClassifierKind::Wavelet:
      return wavelet.has_value();
    case ClassifierKind::Threshold:
      return threshold.has_value();
  }
  return false;
}

Label TrainedClassifiers::classify(ClassifierKind k, const Trace& trace) const {
  if (!has(k)) throw std::logic_error("classifier '" + std::string(to_string(k)) + "' was not fitted");
  switch (k) {
    case ClassifierKind::Dnn:
      return forward(*dnn, trace).label;
    case ClassifierKind::Wavelet:
      return classify_wavelet(*wavelet, trace);
    case ClassifierKind::Threshold:
      return classify_threshold(*threshold, trace);
  }
  return Label::NoEvent;
}

std::vector<Label> TrainedClassifiers::classify_all(ClassifierKind k,
                                                    std::span<const Trace> traces) const {
  if (k == ClassifierKind::Dnn && dnn) return predict_labels(*dnn, traces);
  std::vector<Label> out;
  out.reserve(traces.size());
  for (const Trace& t : traces) out.push_back(classify(k, t));
  return out;
}

TrainedClassifiers fit_classifiers(const LabeledDataset& train_set, double baseline,
                                   std::span<const ClassifierKind> kinds,
                                   const ClassifierSettings& settings) {
  require_classifiers(kinds);
  TrainedClassifiers out;
  out.baseline_mean = baseline;
  for (ClassifierKind k : kinds) {
    switch (k) {
      case ClassifierKind::Dnn: {
        TrainResult r = train(train_set, settings.dnn, settings.train);
        out.dnn = std::move(r.model);
        out.dnn_loss_history = std::move(r.loss_history);
        break;
      }
      case ClassifierKind::Wavelet:
        out.wavelet = optimize_wavelet(train_set, settings.wavelet);
        break;
      case ClassifierKind::Threshold:
        out.threshold = optimize_threshold(train_set, settings.threshold_grid_points, Polarity::Above,
                                           settings.threshold_boxcar);
        break;
    }
  }
  return out;
}

const AccuracyRow* AccuracyReport::find(ClassifierKind k, double level) const {
  for (const AccuracyRow& r : rows) {
    if (r.classifier == k && std::abs(r.level - level) < 1e-12) return &r;
  }
  return nullptr;
}

Confusion confusion(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("label lists differ in length");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t_event = truth[i] == Label::Event;
    const bool p_event = predicted[i] == Label::Event;
    if (t_event && p_event) ++c.event_as_event;
    if (t_event && !p_event) ++c.event_as_noevent;
    if (!t_event && p_event) ++c.noevent_as_event;
    if (!t_event && !p_event) ++c.noevent_as_noevent;
  }
  return c;
}

AccuracyRow evaluate(const TrainedClassifiers& trained, ClassifierKind k, double level,
                     const LabeledDataset& eval) {
  const std::vector<Label> predicted = trained.classify_all(k, eval.traces);
  AccuracyRow row;
  row.classifier = k;
  row.level = level;
  row.eval_count = eval.size();
  row.confusion = confusion(predicted, eval.labels);
  row.accuracy = accuracy(predicted, eval.labels);
  return row;
}

void SweepSpec::validate() const {
  if (levels.empty()) throw std::invalid_argument("sweep needs at least one level");
  for (double l : levels) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw std::invalid_argument("sweep levels must be >= 0");
  }
  require_classifiers(classifiers);
  if (n_per_class == 0) throw std::invalid_argument("n_per_class must be >= 1");
  tunnel.validate();
  base_noise.validate();
}

NoiseSpec SweepSpec::noise_at(double level) const {
  NoiseSpec n = base_noise;
  if (noise_kind == NoiseKind::Gaussian) {
    n.gaussian_level = level;
  } else {
    n.drift_level = level;
  }
  return n;
}

AccuracyReport run_sweep(const SweepSpec& spec) {
  spec.validate();
  std::vector<LevelOutcome> outcomes(spec.levels.size());
  const Rng master(spec.seed);
  parallel_for(spec.levels.size(), spec.threads, [&](std::size_t i) {
    const double level = spec.levels[i];
    outcomes[i] = run_level(spec.tunnel, spec.noise_at(level), level, spec.n_per_class,
                            spec.classifiers, spec.settings, master.split(i));
  });
  AccuracyReport report;
  for (LevelOutcome& o : outcomes) {
    report.rows.insert(report.rows.end(), o.rows.begin(), o.rows.end());
    report.audit.push_back(o.audit);
  }
  return report;
}

NoiseSpec SpikeScenario::noise() const {
  NoiseSpec n;
  n.gaussian_level = gaussian_level;
  n.spike_rate_per_trace = spike_rate_per_trace;
  n.spike_amp = spike_amp;
  n.spike_width_samples = spike_width_samples;
  return n;
}

AccuracyReport run_spike_scenario(const SpikeScenario& spec) {
  require_classifiers(spec.classifiers);
  LevelOutcome o = run_level(spec.tunnel, spec.noise(), spec.spike_rate_per_trace,
                             spec.n_per_class, spec.classifiers, spec.settings,
                             Rng(spec.seed).split(0));
  AccuracyReport report;
  report.rows = std::move(o.rows);
  report.audit.push_back(o.audit);
  return report;
}

void T1ExperimentSpec::validate() const {
  if (t_wait_list.empty()) throw std::invalid_argument("t_wait_list is empty");
  for (std::size_t i = 0; i < t_wait_list.size(); ++i) {
    if (!(t_wait_list[i] >= 0.0)) throw std::invalid_argument("wait times must be >= 0");
    if (i > 0 && !(t_wait_list[i] > t_wait_list[i - 1])) {
      throw std::invalid_argument("t_wait_list must be strictly increasing");
    }
  }
  if (shots_per_point < 1) throw std::invalid_argument("shots_per_point must be >= 1");
  require_classifiers(classifiers);
  spin.validate();
  noise.validate();
}

std::vector<double> T1ExperimentSpec::default_wait_times() {
  return {0.0, 5.0, 10.0, 20.0, 35.0, 50.0, 70.0, 95.0, 125.0, 165.0, 225.0, 300.0};
}

const DecayCurve* T1Result::find(std::string_view name) const {
  for (const DecayCurve& c : curves) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

T1Result run_t1_experiment(const T1ExperimentSpec& spec, const TrainedClassifiers& trained) {
  spec.validate();
  for (ClassifierKind k : spec.classifiers) {
    if (!trained.has(k)) {
      throw std::invalid_argument("classifier '" + std::string(to_string(k)) + "' is not trained");
    }
  }

  const std::size_t n_points = spec.t_wait_list.size();
  const std::size_t shots = spec.shots_per_point;
  const Rng master(spec.seed);

  // counts[c][i]: shots classified Event at wait i by classifier c; the last
  // slot holds the simulator truth.
  const std::size_t n_cls = spec.classifiers.size();
  std::vector<std::vector<std::size_t>> counts(n_cls + 1, std::vector<std::size_t>(n_points, 0));
  // Per-shot any-sample maximum, for the visibility objective.
  const bool want_visibility = spec.threshold_objective == ThresholdObjective::Visibility &&
                               trained.threshold.has_value();
  std::vector<std::vector<double>> maxima(want_visibility ? n_points : 0);

  parallel_for(n_points, spec.threads, [&](std::size_t i) {
    SpinReadoutConfig cfg = spec.spin;
    cfg.t_wait_us = spec.t_wait_list[i];
    Rng rng = master.split(i);
    std::vector<Trace> traces;
    traces.reserve(shots);
    for (std::size_t s = 0; s < shots; ++s) {
      auto [raw, label] = gen_spin_trace(cfg, rng);
      counts[n_cls][i] += (label == Label::Event);
      traces.push_back(standardize(apply_noise(raw, spec.noise, rng), trained.baseline_mean));
    }
    for (std::size_t c = 0; c < n_cls; ++c) {
      if (want_visibility && spec.classifiers[c] == ClassifierKind::Threshold) continue;
      for (Label l : trained.classify_all(spec.classifiers[c], traces)) {
        counts[c][i] += (l == Label::Event);
      }
    }
    if (want_visibility) {
      for (const Trace& t : traces) {
        const auto filtered = boxcar(t.samples(), trained.threshold->boxcar_width);
        maxima[i].push_back(*std::max_element(filtered.begin(), filtered.end()));
      }
    }
  });

  T1Result result;
  result.threshold_used = trained.threshold;
  if (want_visibility) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& m : maxima) {
      for (double v : m) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    double best_vis = -std::numeric_limits<double>::infinity();
    ThresholdClassifier best = *trained.threshold;
    for (std::size_t g = 0; g < kThresholdGridPoints; ++g) {
      const double thr = lo + (hi - lo) * static_cast<double>(g) / (kThresholdGridPoints - 1);
      auto frac = [&](std::size_t i) {
        std::size_t n = 0;
        for (double v : maxima[i]) n += (v > thr);
        return static_cast<double>(n) / static_cast<double>(shots);
      };
      const double vis = frac(0) - frac(n_points - 1);
      if (vis >= best_vis) {
        best_vis = vis;
        best.threshold = thr;
      }
    }
    result.threshold_used = best;
    const auto c = static_cast<std::size_t>(
        std::find(spec.classifiers.begin(), spec.classifiers.end(), ClassifierKind::Threshold) -
        spec.classifiers.begin());
    for (std::size_t i = 0; i < n_points; ++i) {
      for (double v : maxima[i]) counts[c][i] += (v > best.threshold);
    }
  }

  for (std::size_t c = 0; c <= n_cls; ++c) {
    DecayCurve curve;
    curve.name = c < n_cls ? std::string(to_string(spec.classifiers[c])) : "truth";
    curve.t_wait_us = spec.t_wait_list;
    for (std::size_t i = 0; i < n_points; ++i) {
      const double p = static_cast<double>(counts[c][i]) / static_cast<double>(shots);
      curve.p_event.push_back(p);
      curve.sigma.push_back(binomial_sigma(p, shots));
    }
    if (n_points >= 4) {
      try {
        curve.fit = fit_exponential(curve.t_wait_us, curve.p_event, curve.sigma);
      } catch (const std::exception& e) {
        curve.fit_error = e.what();
      }
    } else {
      curve.fit_error = "fewer than 4 wait times";
    }
    result.curves.push_back(std::move(curve));
  }
  return result;
}

PreparedClassifiers prepare_classifiers(const TunnelConfig& tunnel, const NoiseSpec& noise,
                                        std::size_t n_per_class,
                                        std::span<const ClassifierKind> kinds,
                                        const ClassifierSettings& settings, std::uint64_t seed) {
  require_classifiers(kinds);
  const Rng master(seed);
  Rng data_rng = master.split(kDataStream);
  Rng split_rng = master.split(kSplitStream);
  StandardizedDataset data = build_training_dataset(tunnel, noise, n_per_class, data_rng);
  const auto [n_train, n_eval] = split_sizes(data.dataset.size());
  auto [train_set, eval_set] = split_dataset(data.dataset, n_train, n_eval, split_rng);

  PreparedClassifiers out;
  out.trained = fit_classifiers(train_set, data.baseline_mean, kinds, settings);
  ClassifierAudit audit;
  audit.level = noise.gaussian_level;
  audit.threshold = out.trained.threshold;
  audit.wavelet = out.trained.wavelet;
  if (!out.trained.dnn_loss_history.empty()) audit.dnn_final_loss = out.trained.dnn_loss_history.back();
  out.eval_report.audit.push_back(audit);
  for (ClassifierKind k : kinds) {
    out.eval_report.rows.push_back(evaluate(out.trained, k, noise.gaussian_level, eval_set));
  }
  return out;
}

}  // namespace spinread
