#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "spinread/experiments.hpp"

using namespace spinread;

namespace {

ClassifierSettings quick_settings() {
  ClassifierSettings s;
  s.train.epochs = 120;
  return s;
}

bool same(const AccuracyRow& a, const AccuracyRow& b) {
  return a.classifier == b.classifier && a.level == b.level && a.accuracy == b.accuracy &&
         a.eval_count == b.eval_count && a.confusion.event_as_event == b.confusion.event_as_event &&
         a.confusion.event_as_noevent == b.confusion.event_as_noevent &&
         a.confusion.noevent_as_event == b.confusion.noevent_as_event &&
         a.confusion.noevent_as_noevent == b.confusion.noevent_as_noevent;
}

}  // namespace

TEST_CASE("training dataset has both classes in equal number, shuffled") {
  Rng rng(1);
  NoiseSpec noise;
  noise.gaussian_level = 0.3;
  const StandardizedDataset sd = build_training_dataset(TunnelConfig{}, noise, 50, rng);
  CHECK(sd.dataset.size() == 100);
  CHECK(sd.dataset.count(Label::Event) == 50);
  CHECK(sd.dataset.count(Label::NoEvent) == 50);
  for (const Trace& t : sd.dataset.traces) CHECK(t.size() == 480);
  std::size_t leading_events = 0;
  while (sd.dataset.labels[leading_events] == Label::Event) ++leading_events;
  CHECK(leading_events < 50);
}

TEST_CASE("one trace per class without noise") {
  Rng rng(2);
  const StandardizedDataset sd = build_training_dataset(TunnelConfig{}, NoiseSpec{}, 1, rng);
  REQUIRE(sd.dataset.size() == 2);
  CHECK(sd.baseline_mean == 0.0);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto s = sd.dataset.traces[i].samples();
    const double hi = *std::max_element(s.begin(), s.end());
    const double lo = *std::min_element(s.begin(), s.end());
    CHECK(lo == 0.0);
    CHECK(hi == (sd.dataset.labels[i] == Label::Event ? 1.0 : 0.0));
  }
}

TEST_CASE("standardized NoEvent traces have zero grand mean") {
  Rng rng(3);
  NoiseSpec noise;
  noise.gaussian_level = 0.1;
  const StandardizedDataset sd = build_training_dataset(TunnelConfig{}, noise, 500, rng);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < sd.dataset.size(); ++i) {
    if (sd.dataset.labels[i] != Label::NoEvent) continue;
    for (double v : sd.dataset.traces[i].samples()) sum += v;
    n += 480;
  }
  CHECK(std::abs(sum / static_cast<double>(n)) < 0.01);
}

TEST_CASE("split sizes follow 2800/1200") {
  CHECK(split_sizes(4000) == std::pair<std::size_t, std::size_t>{2800, 1200});
  CHECK(split_sizes(10) == std::pair<std::size_t, std::size_t>{7, 3});
}

TEST_CASE("confusion counts and permutation invariance") {
  Rng rng(4);
  NoiseSpec noise;
  noise.gaussian_level = 1.0;
  const StandardizedDataset sd = build_training_dataset(TunnelConfig{}, noise, 200, rng);
  const std::vector<ClassifierKind> kinds{ClassifierKind::Threshold, ClassifierKind::Wavelet};
  const TrainedClassifiers tc = fit_classifiers(sd.dataset, sd.baseline_mean, kinds, ClassifierSettings{});

  LabeledDataset reversed = sd.dataset;
  std::reverse(reversed.traces.begin(), reversed.traces.end());
  std::reverse(reversed.labels.begin(), reversed.labels.end());
  for (ClassifierKind k : kinds) {
    const AccuracyRow row = evaluate(tc, k, 1.0, sd.dataset);
    CHECK(row.eval_count == 400);
    CHECK(row.confusion.total() == row.eval_count);
    const double correct =
        static_cast<double>(row.confusion.event_as_event + row.confusion.noevent_as_noevent);
    CHECK(row.accuracy == correct / 400.0);
    CHECK(evaluate(tc, k, 1.0, reversed).accuracy == row.accuracy);
  }
  CHECK_THROWS_AS(tc.classify(ClassifierKind::Dnn, sd.dataset.traces[0]), std::logic_error);
}

TEST_CASE("sweep is reproducible and independent of thread count") {
  SweepSpec spec;
  spec.levels = {0.5, 1.5};
  spec.n_per_class = 200;
  spec.classifiers = {ClassifierKind::Threshold};
  spec.seed = 17;
  const AccuracyReport a = run_sweep(spec);
  spec.threads = 2;
  const AccuracyReport b = run_sweep(spec);
  REQUIRE(a.rows.size() == 2);
  REQUIRE(b.rows.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(same(a.rows[i], b.rows[i]));
    CHECK(a.rows[i].eval_count == 120);
    CHECK(a.audit[i].threshold->threshold == b.audit[i].threshold->threshold);
  }
  CHECK(a.find(ClassifierKind::Threshold, 1.5) == &a.rows[1]);
  CHECK(a.find(ClassifierKind::Dnn, 1.5) == nullptr);
  CHECK(a.rows[0].accuracy > a.rows[1].accuracy);
}

TEST_CASE("sweep spec validation") {
  SweepSpec spec;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.levels = {0.1, -0.1};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.levels = {0.1};
  spec.classifiers.clear();
  CHECK_THROWS_AS(run_sweep(spec), std::invalid_argument);
}

TEST_CASE("swept level lands on the swept component") {
  SweepSpec spec;
  spec.base_noise.gaussian_level = 0.1;
  const NoiseSpec g = spec.noise_at(2.0);
  CHECK(g.gaussian_level == 2.0);
  CHECK(g.drift_level == 0.0);
  spec.noise_kind = NoiseKind::Drift;
  const NoiseSpec d = spec.noise_at(2.0);
  CHECK(d.gaussian_level == 0.1);
  CHECK(d.drift_level == 2.0);
}

TEST_CASE("enum names round-trip") {
  for (ClassifierKind k : {ClassifierKind::Dnn, ClassifierKind::Wavelet, ClassifierKind::Threshold})
    CHECK(classifier_from_string(to_string(k)) == k);
  for (NoiseKind k : {NoiseKind::Gaussian, NoiseKind::Drift}) CHECK(noise_kind_from_string(to_string(k)) == k);
  for (ThresholdObjective o : {ThresholdObjective::Accuracy, ThresholdObjective::Visibility})
    CHECK(threshold_objective_from_string(to_string(o)) == o);
  CHECK_THROWS(classifier_from_string("svm"));
}

TEST_CASE("spike rate zero leaves no gap at low noise") {
  SpikeScenario s;
  s.spike_rate_per_trace = 0.0;
  s.n_per_class = 200;
  const AccuracyReport r = run_spike_scenario(s);
  const AccuracyRow* dnn = r.find(ClassifierKind::Dnn, 0.0);
  const AccuracyRow* thr = r.find(ClassifierKind::Threshold, 0.0);
  REQUIRE(dnn);
  REQUIRE(thr);
  CHECK(std::abs(dnn->accuracy - thr->accuracy) <= 0.02);
}

TEST_CASE("threshold errors under spikes are false events") {
  // Default scenario. Spikes above the event amplitude make the two threshold
  // regimes (below the event level, above the spikes) nearly tie on
  // accuracy, so smaller sets can land on either side.
  SpikeScenario s;
  s.classifiers = {ClassifierKind::Threshold};
  const AccuracyReport r = run_spike_scenario(s);
  const AccuracyRow* thr = r.find(ClassifierKind::Threshold, 1.0);
  REQUIRE(thr);
  CHECK(thr->confusion.noevent_as_event > thr->confusion.event_as_noevent);
}

TEST_CASE("t1 spec validation") {
  T1ExperimentSpec spec;
  CHECK_NOTHROW(spec.validate());
  CHECK(spec.t_wait_list.size() == 12);
  spec.t_wait_list = {0, 10, 10};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = {};
  spec.shots_per_point = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = {};
  spec.classifiers.clear();
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("without relaxation every shot is read as down") {
  NoiseSpec noise;
  noise.gaussian_level = 0.1;
  const std::vector<ClassifierKind> kinds{ClassifierKind::Dnn, ClassifierKind::Threshold};
  const PreparedClassifiers prep =
      prepare_classifiers(TunnelConfig{}, noise, 200, kinds, quick_settings(), 5);
  CHECK(prep.eval_report.rows.size() == 2);

  T1ExperimentSpec spec;
  spec.noise = noise;
  spec.shots_per_point = 300;
  spec.spin.t1_us = 1e12;
  spec.spin.relax_during_readout = false;
  spec.threads = 2;
  const T1Result r = run_t1_experiment(spec, prep.trained);
  REQUIRE(r.curves.size() == 3);
  CHECK(r.curves[0].name == "dnn");
  CHECK(r.curves[1].name == "threshold");
  CHECK(r.curves[2].name == "truth");
  REQUIRE(r.threshold_used);
  for (const DecayCurve& c : r.curves) {
    REQUIRE(c.p_event.size() == spec.t_wait_list.size());
    for (std::size_t i = 0; i < c.p_event.size(); ++i) {
      CHECK(c.p_event[i] >= 0.95);
      CHECK(c.p_event[i] <= 1.0);
      CHECK(c.sigma[i] > 0.0);
    }
  }
  CHECK(r.find("truth") == &r.curves[2]);
  CHECK(r.find("wavelet") == nullptr);
}

TEST_CASE("t1 curves stay in the unit interval and the truth curve decays") {
  NoiseSpec noise;
  noise.gaussian_level = 0.8;
  const std::vector<ClassifierKind> kinds{ClassifierKind::Threshold};
  const PreparedClassifiers prep =
      prepare_classifiers(TunnelConfig{}, noise, 200, kinds, ClassifierSettings{}, 6);
  T1ExperimentSpec spec;
  spec.noise = noise;
  spec.classifiers = kinds;
  spec.shots_per_point = 400;
  spec.threshold_objective = ThresholdObjective::Visibility;
  const T1Result r = run_t1_experiment(spec, prep.trained);
  for (const DecayCurve& c : r.curves) {
    for (double p : c.p_event) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
  const DecayCurve* truth = r.find("truth");
  REQUIRE(truth);
  CHECK(truth->p_event.front() > truth->p_event.back() + 0.4);
  REQUIRE(truth->fit);
  CHECK(std::abs(truth->fit->t1_us - 68.0) < 4.0 * truth->fit->sigma_t1 + 1.0);
}
