#pragma once

// Conventional discriminators: any-sample thresholding and sliding Haar edge
// detection, each with a grid search that maximizes training accuracy.

#include <cstddef>
#include <span>
#include <vector>

#include "spinread/core.hpp"

namespace spinread {

enum class Polarity { Above, Below };

struct ThresholdClassifier {
  double threshold = 0.5;
  Polarity polarity = Polarity::Above;
  std::size_t boxcar_width = 1;  // moving-average pre-filter, 1 = off
};

// Event iff any (filtered) sample is strictly above (or below) the threshold.
Label classify_threshold(const ThresholdClassifier& c, const Trace& trace);

// Moving average over the window starting at each sample:
// output[i] = mean(samples[i .. i + width)), n - width + 1 outputs.
std::vector<double> boxcar(std::span<const double> samples, std::size_t width);

inline constexpr std::size_t kThresholdGridPoints = 512;

// Candidate thresholds: `points` values evenly spaced over [min, max] of the
// filtered training samples, inclusive.
std::vector<double> threshold_grid(const LabeledDataset& train, std::size_t points,
                                   std::size_t boxcar_width = 1);

// Best training accuracy over threshold_grid; ties go to the larger threshold.
ThresholdClassifier optimize_threshold(const LabeledDataset& train,
                                       std::size_t points = kThresholdGridPoints,
                                       Polarity polarity = Polarity::Above,
                                       std::size_t boxcar_width = 1);

// coeff[i] = mean(x[i, i+s)) - mean(x[i+s, i+2s)), length len - 2s + 1.
// An upward step gives -1, a downward step +1.
std::vector<double> haar_detail(const Trace& trace, std::size_t scale);

// Largest |coeff| of haar_detail.
double max_abs_haar(const Trace& trace, std::size_t scale);

struct WaveletClassifier {
  std::size_t scale = 8;
  double coeff_threshold = 0.5;
};

Label classify_wavelet(const WaveletClassifier& c, const Trace& trace);

struct WaveletGrid {
  std::size_t max_scale = 32;        // scales 1..max_scale
  std::size_t threshold_points = 64;
};

// 2-D grid search. Thresholds per scale span [min, max] of the per-trace
// statistic at that scale. Ties go to the larger threshold, then the smaller
// scale.
WaveletClassifier optimize_wavelet(const LabeledDataset& train, const WaveletGrid& grid = {});

double accuracy(std::span<const Label> predicted, std::span<const Label> truth);

}  // namespace spinread
