#pragma once

// Additive noise injectors. Levels are relative to the unit event step.

#include <cstddef>
#include <span>

#include "spinread/core.hpp"

namespace spinread {

struct NoiseSpec {
  double gaussian_level = 0.0;  // per-sample standard deviation
  double drift_level = 0.0;     // sinusoid amplitude
  double drift_freq_khz = 1.0;
  double spike_rate_per_trace = 0.0;  // Poisson mean of pulses per trace
  double spike_amp = 1.0;
  std::size_t spike_width_samples = 3;

  void validate() const;
};

Trace add_gaussian(const Trace& trace, double level, Rng& rng);

// Adds level * sin(2 pi f t + phi) with phi ~ U[0, 2 pi) drawn per trace.
Trace add_drift(const Trace& trace, double level, double freq_khz, Rng& rng);

// Adds Poisson(rate) rectangular pulses at uniform positions. Pulses lie
// fully inside the trace and never overlap, so the added energy is exactly
// count * width * amp^2.
Trace add_spikes(const Trace& trace, double rate_per_trace, double amp, std::size_t width,
                 Rng& rng);

// Gaussian, then drift, then spikes. Each injector draws from `rng` whether
// or not its level is zero, so one component can be varied without shifting
// the random stream of the others.
Trace apply_noise(const Trace& trace, const NoiseSpec& spec, Rng& rng);

double rms(std::span<const double> values);

// 20 log10(rms(signal) / rms(noise)).
double snr_db(const Trace& signal, const Trace& noise);

}  // namespace spinread
