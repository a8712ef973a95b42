#include "spinread/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace spinread {
namespace {

void require_both_labels(const LabeledDataset& train) {
  if (train.empty()) throw std::invalid_argument("training set is empty");
  if (train.count(Label::Event) == 0 || train.count(Label::NoEvent) == 0) {
    throw std::invalid_argument("training set must contain both labels");
  }
}

// Extreme value in the classifier's direction after filtering.
double extreme(const Trace& trace, Polarity polarity, std::size_t width) {
  const std::vector<double> filtered = boxcar(trace.samples(), width);
  return polarity == Polarity::Above ? *std::max_element(filtered.begin(), filtered.end())
                                     : *std::min_element(filtered.begin(), filtered.end());
}

std::vector<double> linspace(double lo, double hi, std::size_t points) {
  std::vector<double> out(points);
  if (points == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t i = 0; i < points; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return out;
}

}  // namespace

std::vector<double> boxcar(std::span<const double> samples, std::size_t width) {
  if (width < 1) throw std::invalid_argument("boxcar width must be >= 1");
  if (width == 1) return {samples.begin(), samples.end()};
  if (width > samples.size()) throw std::invalid_argument("boxcar wider than trace");
  std::vector<double> out(samples.size() - width + 1);
  double sum = 0.0;
  for (std::size_t k = 0; k < width; ++k) sum += samples[k];
  out[0] = sum / static_cast<double>(width);
  for (std::size_t i = 1; i < out.size(); ++i) {
    sum += samples[i + width - 1] - samples[i - 1];
    out[i] = sum / static_cast<double>(width);
  }
  return out;
}

Label classify_threshold(const ThresholdClassifier& c, const Trace& trace) {
  const std::vector<double> filtered = boxcar(trace.samples(), c.boxcar_width);
  const bool hit = c.polarity == Polarity::Above
                       ? std::any_of(filtered.begin(), filtered.end(),
                                     [&](double v) { return v > c.threshold; })
                       : std::any_of(filtered.begin(), filtered.end(),
                                     [&](double v) { return v < c.threshold; });
  return hit ? Label::Event : Label::NoEvent;
}

std::vector<double> threshold_grid(const LabeledDataset& train, std::size_t points,
                                   std::size_t boxcar_width) {
  if (points < 1) throw std::invalid_argument("threshold grid needs at least one point");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Trace& t : train.traces) {
    for (double v : boxcar(t.samples(), boxcar_width)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return linspace(lo, hi, points);
}

ThresholdClassifier optimize_threshold(const LabeledDataset& train, std::size_t points,
                                       Polarity polarity, std::size_t boxcar_width) {
  require_both_labels(train);
  const std::vector<double> grid = threshold_grid(train, points, boxcar_width);

  // Any-sample crossing reduces to comparing one extreme per trace.
  std::vector<double> stat(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    stat[i] = extreme(train.traces[i], polarity, boxcar_width);
  }

  std::size_t best_correct = 0;
  double best_thr = grid.front();
  for (double thr : grid) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < stat.size(); ++i) {
      const bool event = polarity == Polarity::Above ? stat[i] > thr : stat[i] < thr;
      correct += (event == (train.labels[i] == Label::Event));
    }
    // Grid ascends, so >= keeps the larger threshold on ties.
    if (correct >= best_correct) {
      best_correct = correct;
      best_thr = thr;
    }
  }
  return {best_thr, polarity, boxcar_width};
}

std::vector<double> haar_detail(const Trace& trace, std::size_t scale) {
  if (scale < 1) throw std::invalid_argument("haar scale must be >= 1");
  const std::size_t n = trace.size();
  if (2 * scale > n) {
    throw std::invalid_argument("haar scale " + std::to_string(scale) + " too large for trace of " +
                                std::to_string(n) + " samples");
  }
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + trace[k];
  const double inv = 1.0 / static_cast<double>(scale);
  std::vector<double> out(n - 2 * scale + 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double left = prefix[i + scale] - prefix[i];
    const double right = prefix[i + 2 * scale] - prefix[i + scale];
    out[i] = (left - right) * inv;
  }
  return out;
}

double max_abs_haar(const Trace& trace, std::size_t scale) {
  double best = 0.0;
  for (double c : haar_detail(trace, scale)) best = std::max(best, std::abs(c));
  return best;
}

Label classify_wavelet(const WaveletClassifier& c, const Trace& trace) {
  return max_abs_haar(trace, c.scale) >= c.coeff_threshold ? Label::Event : Label::NoEvent;
}

WaveletClassifier optimize_wavelet(const LabeledDataset& train, const WaveletGrid& grid) {
  require_both_labels(train);
  if (grid.max_scale < 1 || grid.threshold_points < 1) {
    throw std::invalid_argument("wavelet grid must be non-empty");
  }
  std::size_t min_len = std::numeric_limits<std::size_t>::max();
  for (const Trace& t : train.traces) min_len = std::min(min_len, t.size());
  const std::size_t max_scale = std::min(grid.max_scale, min_len / 2);
  if (max_scale < 1) throw std::invalid_argument("traces too short for any haar scale");

  WaveletClassifier best{1, 0.0};
  std::size_t best_correct = 0;
  bool have_best = false;
  std::vector<double> stat(train.size());
  for (std::size_t scale = 1; scale <= max_scale; ++scale) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      stat[i] = max_abs_haar(train.traces[i], scale);
      lo = std::min(lo, stat[i]);
      hi = std::max(hi, stat[i]);
    }
    // Threshold must stay positive even when a flat trace gives statistic 0.
    lo = std::max(lo, 1e-12);
    hi = std::max(hi, lo);
    for (double thr : linspace(lo, hi, grid.threshold_points)) {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < stat.size(); ++i) {
        correct += ((stat[i] >= thr) == (train.labels[i] == Label::Event));
      }
      const bool better = !have_best || correct > best_correct ||
                          (correct == best_correct && thr > best.coeff_threshold);
      if (better) {
        best = {scale, thr};
        best_correct = correct;
        have_best = true;
      }
    }
  }
  return best;
}

double accuracy(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw std::invalid_argument("accuracy needs equal-length, non-empty label lists");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += (predicted[i] == truth[i]);
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

}  // namespace spinread
