#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hadesfit {

/// External drive sampled at known times, interpreted with zero-order hold:
/// the value at time t is the most recent sample at or before t, held up to
/// domain_end. Evaluation outside [0, domain_end] is a domain error.
struct Signal {
  std::vector<double> times;   ///< strictly increasing, times[0] == 0
  std::vector<double> values;  ///< one per sample time
  double domain_end = 0.0;     ///< T >= times.back()

  double evaluate(double t) const;

  /// Times strictly inside (t0, t1) at which the held value actually
  /// changes. Integrators restart on exactly these points; repeated samples
  /// of the same value do not appear.
  std::vector<double> switch_times(double t0, double t1) const;

  void validate() const;
};

/// Mean of the sampled values (not the time-weighted ZOH average).
double signal_mean(const Signal& s);

/// Population standard deviation of the sampled values; 0 for a constant
/// signal.
double signal_std(const Signal& s);

/// Two-or-more state discrete-time Markov chain specification used to draw
/// piecewise-constant benchmark drives.
struct MarkovChainSpec {
  std::vector<double> states;                   ///< state values
  std::vector<std::vector<double>> transition;  ///< row-stochastic matrix
  double step = 0.1;                            ///< sampling interval
  int initial_state_index = 0;

  void validate() const;
};

/// Draw a chain realization on the grid {0, step, 2*step, ...} up to
/// `horizon`; domain_end is set to `horizon`.
Signal sample_markov(const MarkovChainSpec& spec, double horizon,
                     std::uint64_t seed);

/// Configuration for a multi-day rectangular light profile. Times in hours.
struct LightScheduleConfig {
  int days = 1;
  double lux_on = 1000.0;
  double lux_off = 0.0;
  /// Daily on-intervals within [0, 24), non-overlapping.
  std::vector<std::pair<double, double>> on_hours;
  /// Per-day bound on the uniform jitter applied to each interval boundary.
  double jitter_hours = 0.0;
  double grid_step = 0.1;
};

/// Rectangular day/night light profile with optional per-day boundary
/// jitter; reproducible for a fixed jitter seed.
Signal synthetic_light_schedule(const LightScheduleConfig& cfg,
                                std::uint64_t jitter_seed);

/// S(t) = (cos t + 1)/2 sampled densely on [0, horizon]; stands in for a
/// smooth drive while keeping the sampled-signal representation.
Signal smooth_cosine_signal(double horizon, double grid_step = 0.01);

Signal constant_signal(double value, double horizon);

/// Two-column CSV with mandatory "time,value" header. domain_end defaults to
/// the last sample time unless an override (>= last time) is given.
Signal read_signal_csv(const std::string& path,
                       std::optional<double> domain_end = std::nullopt);
void write_signal_csv(const Signal& s, const std::string& path);

}  // namespace hadesfit
