#pragma once

// Continuous-time two-state Markov model of charge tunneling between a dot
// and its lead, sampled onto a fixed grid. The sensor reads 0 while the dot
// is occupied and amp_event while the electron is out.

#include <stdexcept>
#include <utility>
#include <vector>

#include "spinread/core.hpp"

namespace spinread {

struct TunnelConfig {
  double tau_tunnel_us = 33.0;  // mean time before the electron tunnels out
  double tau_return_us = 33.0;  // mean time before an electron tunnels back in
  double trace_len_us = 480.0;
  double dt_us = 1.0;
  double amp_event = 1.0;

  void validate() const;
  std::size_t sample_count() const;
};

struct SpinReadoutConfig {
  double t1_us = 68.0;
  double t_wait_us = 0.0;
  double p_down_init = 1.0;
  // Lets a down spin relax during the readout window, competing with tunneling out.
  bool relax_during_readout = true;
  TunnelConfig tunnel;

  void validate() const;
};

// One excursion of the signal to the high (electron out) level.
struct HighInterval {
  double rise_us;
  double fall_us;
};

class TraceGenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kEventRetryCap = 1000;

// Telegraph path starting low at t = 0, covering [0, horizon_us). The first
// rise happens after `first_rise_us`, later dwells are exponential.
std::vector<HighInterval> draw_telegraph_path(const TunnelConfig& cfg, Rng& rng,
                                              double first_rise_us, double horizon_us);

// Sample-and-hold onto t_k = k * dt_us.
Trace render_path(const std::vector<HighInterval>& path, const TunnelConfig& cfg);

// Unconditioned telegraph trace; may contain no event.
Trace gen_telegraph_trace(const TunnelConfig& cfg, Rng& rng);

// Telegraph trace with at least one sampled high level. Rejection sampling,
// throws TraceGenerationError after kEventRetryCap attempts.
Trace gen_event_trace(const TunnelConfig& cfg, Rng& rng);

Trace gen_noevent_trace(const TunnelConfig& cfg);

// Energy-selective readout shot. A down spin (probability
// p_down_init * exp(-t_wait / T1)) tunnels out after Exp(tau_tunnel) unless it
// relaxes first, and from then on the shot is an event telegraph. The label is
// the ground truth of whether an event shows up in the sampled trace.
std::pair<Trace, Label> gen_spin_trace(const SpinReadoutConfig& cfg, Rng& rng);

// Probability that a shot at this wait time tunnels out inside the readout
// window, in continuous time.
double expected_event_probability(const SpinReadoutConfig& cfg);

}  // namespace spinread
