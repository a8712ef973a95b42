#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "spinread/baseline.hpp"
#include "spinread/noise.hpp"
#include "spinread/simulator.hpp"

using namespace spinread;

namespace {

LabeledDataset noisy_set(std::size_t per_class, double gaussian, double drift, std::uint64_t seed) {
  Rng rng(seed);
  TunnelConfig cfg;
  NoiseSpec noise;
  noise.gaussian_level = gaussian;
  noise.drift_level = drift;
  std::vector<Trace> traces;
  std::vector<Label> labels;
  for (std::size_t i = 0; i < per_class; ++i) {
    traces.push_back(apply_noise(gen_event_trace(cfg, rng), noise, rng));
    labels.push_back(Label::Event);
    traces.push_back(apply_noise(gen_noevent_trace(cfg), noise, rng));
    labels.push_back(Label::NoEvent);
  }
  return LabeledDataset(std::move(traces), std::move(labels), seed);
}

Trace step_at(std::size_t n, std::size_t p) {
  std::vector<double> s(n, 0.0);
  for (std::size_t k = p; k < n; ++k) s[k] = 1.0;
  return Trace(s);
}

double acc_threshold(const ThresholdClassifier& c, const LabeledDataset& ds) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) ok += classify_threshold(c, ds.traces[i]) == ds.labels[i];
  return static_cast<double>(ok) / static_cast<double>(ds.size());
}

double acc_wavelet(const WaveletClassifier& c, const LabeledDataset& ds) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) ok += classify_wavelet(c, ds.traces[i]) == ds.labels[i];
  return static_cast<double>(ok) / static_cast<double>(ds.size());
}

// Direct window means, no prefix sums.
double naive_haar(const Trace& t, std::size_t i, std::size_t s) {
  double left = 0.0, right = 0.0;
  for (std::size_t k = 0; k < s; ++k) {
    left += t[i + k];
    right += t[i + s + k];
  }
  return (left - right) / static_cast<double>(s);
}

}  // namespace

TEST_CASE("threshold classification examples") {
  const ThresholdClassifier c{0.5};
  CHECK(classify_threshold(c, Trace(std::vector<double>(480, 0.0))) == Label::NoEvent);
  std::vector<double> one(480, 0.0);
  one[200] = 1.0;
  CHECK(classify_threshold(c, Trace(one)) == Label::Event);
  const ThresholdClassifier below{-0.5, Polarity::Below};
  one[200] = -1.0;
  CHECK(classify_threshold(below, Trace(one)) == Label::Event);
  // Strict crossing.
  CHECK(classify_threshold(ThresholdClassifier{1.0}, step_at(10, 3)) == Label::NoEvent);
}

TEST_CASE("boxcar pre-filter") {
  const std::vector<double> x{0, 0, 3, 0, 0, 3, 3, 3};
  const std::vector<double> f = boxcar(x, 3);
  REQUIRE(f.size() == 6);
  CHECK(f[0] == doctest::Approx(1.0));
  CHECK(f[5] == doctest::Approx(3.0));
  CHECK(boxcar(x, 1) == x);
  CHECK_THROWS(boxcar(x, 0));
  CHECK_THROWS(boxcar(x, 9));
  // A lone spike is averaged down below a 1.5 threshold, a long step is not.
  const ThresholdClassifier c{1.5, Polarity::Above, 3};
  CHECK(classify_threshold(c, Trace({0, 0, 3, 0, 0, 0})) == Label::NoEvent);
  CHECK(classify_threshold(c, Trace({0, 0, 3, 3, 3, 0})) == Label::Event);
}

TEST_CASE("raising the threshold never turns NoEvent into Event") {
  const LabeledDataset ds = noisy_set(100, 0.8, 0.0, 3);
  for (const Trace& t : ds.traces) {
    bool was_event = true;
    for (double thr = -1.0; thr <= 4.0; thr += 0.05) {
      const bool ev = classify_threshold(ThresholdClassifier{thr}, t) == Label::Event;
      CHECK((was_event || !ev));
      was_event = ev;
    }
  }
}

TEST_CASE("separable data gets a threshold inside the gap") {
  const LabeledDataset ds = noisy_set(50, 0.0, 0.0, 4);
  const ThresholdClassifier c = optimize_threshold(ds);
  CHECK(c.threshold > 0.0);
  CHECK(c.threshold < 1.0);
  CHECK(acc_threshold(c, ds) == 1.0);
}

TEST_CASE("optimize_threshold agrees with an exhaustive grid search") {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    for (std::size_t box : {1u, 4u}) {
      const LabeledDataset ds = noisy_set(100, 1.0, 0.0, seed);
      const std::size_t points = 512;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const Trace& t : ds.traces) {
        for (double v : boxcar(t.samples(), box)) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      double best_acc = -1.0, best_thr = 0.0;
      for (std::size_t i = 0; i < points; ++i) {
        const double thr = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
        const double a = acc_threshold(ThresholdClassifier{thr, Polarity::Above, box}, ds);
        if (a >= best_acc) {
          best_acc = a;
          best_thr = thr;
        }
      }
      const ThresholdClassifier c = optimize_threshold(ds, points, Polarity::Above, box);
      CHECK(c.threshold == best_thr);
      CHECK(c.boxcar_width == box);
      CHECK(acc_threshold(c, ds) == best_acc);
    }
  }
}

TEST_CASE("optimizers need both labels") {
  LabeledDataset one_class({Trace({0.0, 1.0, 0.0, 0.0})}, {Label::Event}, 0);
  CHECK_THROWS_AS(optimize_threshold(one_class), std::invalid_argument);
  CHECK_THROWS_AS(optimize_wavelet(one_class), std::invalid_argument);
}

TEST_CASE("haar detail on flat and shifted traces") {
  Rng rng(8);
  std::vector<double> s(480);
  for (double& v : s) v = rng.normal();
  const Trace t(s);
  std::vector<double> shifted = s;
  for (double& v : shifted) v += 3.7;
  for (std::size_t scale : {1u, 5u, 32u, 240u}) {
    for (double c : haar_detail(Trace(std::vector<double>(480, 0.42)), scale)) {
      CHECK(c == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }
    const auto a = haar_detail(t, scale);
    const auto b = haar_detail(Trace(shifted), scale);
    REQUIRE(a.size() == 480 - 2 * scale + 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).scale(1.0).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < a.size(); i += 37) {
      CHECK(a[i] == doctest::Approx(naive_haar(t, i, scale)).scale(1.0).epsilon(1e-12));
    }
  }
  CHECK_THROWS(haar_detail(t, 0));
  CHECK_THROWS(haar_detail(t, 241));
}

TEST_CASE("haar response to an ideal step peaks at the edge") {
  const std::size_t p = 200;
  for (std::size_t scale : {1u, 8u, 30u}) {
    const auto c = haar_detail(step_at(480, p), scale);
    const auto it = std::max_element(c.begin(), c.end(),
                                     [](double a, double b) { return std::abs(a) < std::abs(b); });
    CHECK(std::abs(*it) == doctest::Approx(1.0));
    CHECK(static_cast<std::size_t>(it - c.begin()) == p - scale);
    CHECK(*it < 0.0);
  }
}

TEST_CASE("haar noise variance is sigma^2 * 2 / s") {
  Rng rng(9);
  const double sigma = 0.7;
  const Trace zero(std::vector<double>(64, 0.0));
  for (std::size_t scale : {1u, 4u, 16u}) {
    double sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double c = haar_detail(add_gaussian(zero, sigma, rng), scale)[0];
      sum2 += c * c;
    }
    CHECK(sum2 / n == doctest::Approx(sigma * sigma * 2.0 / scale).epsilon(0.05));
  }
}

TEST_CASE("wavelet classification examples") {
  const WaveletClassifier c{8, 0.5};
  CHECK(classify_wavelet(c, Trace(std::vector<double>(480, 0.0))) == Label::NoEvent);
  CHECK(classify_wavelet(c, step_at(480, 100)) == Label::Event);
}

TEST_CASE("optimize_wavelet is at least as good as every grid candidate") {
  const LabeledDataset ds = noisy_set(100, 1.0, 0.0, 10);
  const WaveletGrid grid{8, 16};
  const WaveletClassifier best = optimize_wavelet(ds, grid);
  const double best_acc = acc_wavelet(best, ds);
  for (std::size_t scale = 1; scale <= grid.max_scale; ++scale) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const Trace& t : ds.traces) {
      double m = 0.0;
      for (std::size_t i = 0; i + 2 * scale <= t.size(); ++i) m = std::max(m, std::abs(naive_haar(t, i, scale)));
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    for (std::size_t k = 0; k < grid.threshold_points; ++k) {
      const double thr = lo + (hi - lo) * static_cast<double>(k) / (grid.threshold_points - 1);
      // Naive sums can round differently from the prefix sums; one trace of slack.
      CHECK(acc_wavelet(WaveletClassifier{scale, thr}, ds) <= best_acc + 1.0 / ds.size());
    }
  }
}

TEST_CASE("edge detection ignores slow drift that defeats thresholding") {
  const LabeledDataset train = noisy_set(300, 0.1, 2.0, 11);
  const LabeledDataset eval = noisy_set(300, 0.1, 2.0, 12);
  const double thr = acc_threshold(optimize_threshold(train), eval);
  const double wav = acc_wavelet(optimize_wavelet(train), eval);
  CHECK(wav > thr);
}

TEST_CASE("accuracy") {
  const std::vector<Label> truth{Label::Event, Label::NoEvent, Label::Event, Label::Event};
  const std::vector<Label> pred{Label::Event, Label::Event, Label::Event, Label::NoEvent};
  CHECK(accuracy(pred, truth) == 0.5);
  CHECK_THROWS(accuracy(std::vector<Label>{}, std::vector<Label>{}));
}
