#include "spinread/noise.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace spinread {

void NoiseSpec::validate() const {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument(std::string(name) + " must be finite and non-negative");
    }
  };
  check(gaussian_level, "gaussian_level");
  check(drift_level, "drift_level");
  check(spike_rate_per_trace, "spike_rate_per_trace");
  if (!std::isfinite(spike_amp)) throw std::invalid_argument("spike_amp must be finite");
  if (!(drift_freq_khz > 0.0)) throw std::invalid_argument("drift_freq_khz must be positive");
  if (spike_width_samples < 1) throw std::invalid_argument("spike_width_samples must be >= 1");
}

Trace add_gaussian(const Trace& trace, double level, Rng& rng) {
  if (!(level >= 0.0)) throw std::invalid_argument("gaussian level must be non-negative");
  std::vector<double> out = trace.to_vector();
  for (double& v : out) v += level * rng.normal();
  return Trace(std::move(out), trace.dt_us());
}

Trace add_drift(const Trace& trace, double level, double freq_khz, Rng& rng) {
  if (!(level >= 0.0)) throw std::invalid_argument("drift level must be non-negative");
  if (!(freq_khz > 0.0)) throw std::invalid_argument("drift frequency must be positive");
  const double phase = 2.0 * std::numbers::pi * rng.uniform();
  const double omega = 2.0 * std::numbers::pi * freq_khz;  // rad per ms
  std::vector<double> out = trace.to_vector();
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double t_ms = static_cast<double>(k) * trace.dt_us() * 1e-3;
    out[k] += level * std::sin(omega * t_ms + phase);
  }
  return Trace(std::move(out), trace.dt_us());
}

Trace add_spikes(const Trace& trace, double rate_per_trace, double amp, std::size_t width,
                 Rng& rng) {
  if (!(rate_per_trace >= 0.0)) throw std::invalid_argument("spike rate must be non-negative");
  if (width < 1) throw std::invalid_argument("spike width must be >= 1");
  const std::size_t n = trace.size();
  const std::uint64_t count = rng.poisson(rate_per_trace);
  if (count == 0) return trace;
  if (width > n || count * width > n / 2) {
    throw std::invalid_argument("spikes do not fit in the trace without overlapping");
  }

  std::vector<char> used(n, 0);
  std::vector<double> out = trace.to_vector();
  const std::size_t positions = n - width + 1;
  for (std::uint64_t s = 0; s < count; ++s) {
    std::size_t start = 0;
    bool free = false;
    // Density is capped at one half, so a free slot turns up quickly.
    for (int attempt = 0; attempt < 10000 && !free; ++attempt) {
      start = rng.index(positions);
      free = true;
      for (std::size_t k = start; k < start + width; ++k) free = free && !used[k];
    }
    if (!free) throw std::runtime_error("could not place non-overlapping spike");
    for (std::size_t k = start; k < start + width; ++k) {
      used[k] = 1;
      out[k] += amp;
    }
  }
  return Trace(std::move(out), trace.dt_us());
}

Trace apply_noise(const Trace& trace, const NoiseSpec& spec, Rng& rng) {
  spec.validate();
  Trace out = add_gaussian(trace, spec.gaussian_level, rng);
  out = add_drift(out, spec.drift_level, spec.drift_freq_khz, rng);
  return add_spikes(out, spec.spike_rate_per_trace, spec.spike_amp, spec.spike_width_samples,
                    rng);
}

double rms(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("rms of an empty sequence");
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return std::sqrt(sum / static_cast<double>(values.size()));
}

double snr_db(const Trace& signal, const Trace& noise) {
  const double noise_rms = rms(noise.samples());
  if (noise_rms == 0.0) throw std::domain_error("noise RMS is zero: SNR is infinite");
  return 20.0 * std::log10(rms(signal.samples()) / noise_rms);
}

}  // namespace spinread
