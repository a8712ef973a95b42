#include "spinread/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spinread {
namespace {

bool has_event(const Trace& trace) {
  return std::any_of(trace.samples().begin(), trace.samples().end(),
                     [](double v) { return v != 0.0; });
}

}  // namespace

void TunnelConfig::validate() const {
  if (!(tau_tunnel_us > 0.0) || !(tau_return_us > 0.0)) {
    throw std::invalid_argument("tunnel times must be positive");
  }
  if (!(dt_us > 0.0) || !(trace_len_us >= dt_us)) {
    throw std::invalid_argument("need trace_len_us >= dt_us > 0");
  }
  if (!std::isfinite(amp_event) || amp_event == 0.0) {
    throw std::invalid_argument("event amplitude must be finite and non-zero");
  }
}

std::size_t TunnelConfig::sample_count() const {
  // Small slack so 480 / 1.0 style ratios are not lost to rounding.
  return static_cast<std::size_t>(std::floor(trace_len_us / dt_us + 1e-9));
}

void SpinReadoutConfig::validate() const {
  tunnel.validate();
  if (!(t1_us > 0.0)) throw std::invalid_argument("t1_us must be positive");
  if (!(t_wait_us >= 0.0)) throw std::invalid_argument("t_wait_us must be non-negative");
  if (!(p_down_init >= 0.0 && p_down_init <= 1.0)) {
    throw std::invalid_argument("p_down_init must lie in [0, 1]");
  }
}

std::vector<HighInterval> draw_telegraph_path(const TunnelConfig& cfg, Rng& rng,
                                              double first_rise_us, double horizon_us) {
  std::vector<HighInterval> path;
  double t = first_rise_us;
  while (t < horizon_us) {
    const double fall = t + rng.exponential(cfg.tau_return_us);
    path.push_back({t, fall});
    t = fall + rng.exponential(cfg.tau_tunnel_us);
  }
  return path;
}

Trace render_path(const std::vector<HighInterval>& path, const TunnelConfig& cfg) {
  const std::size_t n = cfg.sample_count();
  std::vector<double> samples(n, 0.0);
  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * cfg.dt_us;
    while (j < path.size() && path[j].fall_us <= t) ++j;
    if (j < path.size() && path[j].rise_us <= t) samples[k] = cfg.amp_event;
  }
  return Trace(std::move(samples), cfg.dt_us);
}

Trace gen_telegraph_trace(const TunnelConfig& cfg, Rng& rng) {
  cfg.validate();
  const double first = rng.exponential(cfg.tau_tunnel_us);
  return render_path(draw_telegraph_path(cfg, rng, first, cfg.trace_len_us), cfg);
}

Trace gen_event_trace(const TunnelConfig& cfg, Rng& rng) {
  cfg.validate();
  for (int attempt = 0; attempt < kEventRetryCap; ++attempt) {
    Trace trace = gen_telegraph_trace(cfg, rng);
    if (has_event(trace)) return trace;
  }
  throw TraceGenerationError("no charge transition fit in the trace after " +
                             std::to_string(kEventRetryCap) + " attempts (tau_tunnel_us=" +
                             std::to_string(cfg.tau_tunnel_us) + ")");
}

Trace gen_noevent_trace(const TunnelConfig& cfg) {
  cfg.validate();
  return Trace(std::vector<double>(cfg.sample_count(), 0.0), cfg.dt_us);
}

std::pair<Trace, Label> gen_spin_trace(const SpinReadoutConfig& cfg, Rng& rng) {
  cfg.validate();
  const TunnelConfig& tc = cfg.tunnel;
  const double p_down = cfg.p_down_init * std::exp(-cfg.t_wait_us / cfg.t1_us);
  if (!(rng.uniform() < p_down)) {
    return {gen_noevent_trace(tc), Label::NoEvent};
  }
  const double tunnel_out = rng.exponential(tc.tau_tunnel_us);
  const double relax = cfg.relax_during_readout ? rng.exponential(cfg.t1_us)
                                                : std::numeric_limits<double>::infinity();
  if (relax < tunnel_out || tunnel_out >= tc.trace_len_us) {
    return {gen_noevent_trace(tc), Label::NoEvent};
  }
  // From the first tunneling out on the shot is an event trace, the same
  // telegraph the classifiers are trained on.
  Trace trace = render_path(draw_telegraph_path(tc, rng, tunnel_out, tc.trace_len_us), tc);
  const Label label = has_event(trace) ? Label::Event : Label::NoEvent;
  return {std::move(trace), label};
}

double expected_event_probability(const SpinReadoutConfig& cfg) {
  cfg.validate();
  const double p_down = cfg.p_down_init * std::exp(-cfg.t_wait_us / cfg.t1_us);
  const double rate_out = 1.0 / cfg.tunnel.tau_tunnel_us;
  const double rate_relax = cfg.relax_during_readout ? 1.0 / cfg.t1_us : 0.0;
  const double total = rate_out + rate_relax;
  // Continuous time: excursions that fall entirely between two samples are
  // ignored, later excursions almost always make up for them.
  return p_down * (rate_out / total) * (1.0 - std::exp(-total * cfg.tunnel.trace_len_us));
}

}  // namespace spinread
