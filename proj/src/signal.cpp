#include "hadesfit/signal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "hadesfit/common.hpp"

namespace hadesfit {

namespace {

/// Number of whole steps of size `step` that fit in `span`, robust against
/// representation error in span/step (e.g. 20/0.1 evaluating below 200).
std::size_t grid_steps(double span, double step) {
  return static_cast<std::size_t>(std::floor(span / step + 1e-9));
}

}  // namespace

void Signal::validate() const {
  if (times.empty()) throw std::invalid_argument("signal has no samples");
  if (times.size() != values.size())
    throw std::invalid_argument("signal times/values length mismatch");
  if (times.front() != 0.0)
    throw std::invalid_argument("signal must start at time 0");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("signal times must be strictly increasing");
  }
  for (double v : values) {
    if (!std::isfinite(v))
      throw std::invalid_argument("signal values must be finite");
  }
  if (!(domain_end >= times.back()))
    throw std::invalid_argument(
        "signal domain_end must not precede the last sample time");
}

double signal_mean(const Signal& s) {
  s.validate();
  double sum = 0.0;
  for (double v : s.values) sum += v;
  return sum / static_cast<double>(s.values.size());
}

double signal_std(const Signal& s) {
  const double mean = signal_mean(s);
  double ss = 0.0;
  for (double v : s.values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(s.values.size()));
}

double Signal::evaluate(double t) const {
  if (!(t >= 0.0 && t <= domain_end)) {
    std::ostringstream msg;
    msg << "signal evaluated at t=" << t << " outside domain [0, "
        << domain_end << "]";
    throw std::domain_error(msg.str());
  }
  // Index of the last sample at or before t.
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const auto idx = static_cast<std::size_t>(it - times.begin()) - 1;
  return values[idx];
}

std::vector<double> Signal::switch_times(double t0, double t1) const {
  std::vector<double> out;
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (values[i] == values[i - 1]) continue;  // held value does not change
    if (times[i] > t0 && times[i] < t1) out.push_back(times[i]);
  }
  return out;
}

void MarkovChainSpec::validate() const {
  const std::size_t n = states.size();
  if (n < 2) throw std::invalid_argument("markov chain needs >= 2 states");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (states[i] == states[j])
        throw std::invalid_argument("markov states must be distinct");
    }
  }
  if (transition.size() != n)
    throw std::invalid_argument("markov transition matrix must be square");
  for (const auto& row : transition) {
    if (row.size() != n)
      throw std::invalid_argument("markov transition matrix must be square");
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument(
            "markov transition probabilities must lie in [0, 1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("markov transition rows must sum to 1");
  }
  if (!(step > 0.0)) throw std::invalid_argument("markov step must be > 0");
  if (initial_state_index < 0 ||
      static_cast<std::size_t>(initial_state_index) >= n)
    throw std::invalid_argument("markov initial state index out of range");
}

Signal sample_markov(const MarkovChainSpec& spec, double horizon,
                     std::uint64_t seed) {
  spec.validate();
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
  const std::size_t n_steps = grid_steps(horizon, spec.step);

  Signal s;
  s.times.reserve(n_steps + 1);
  s.values.reserve(n_steps + 1);
  s.domain_end = horizon;

  Rng rng(seed);
  std::size_t state = static_cast<std::size_t>(spec.initial_state_index);
  s.times.push_back(0.0);
  s.values.push_back(spec.states[state]);
  for (std::size_t k = 1; k <= n_steps; ++k) {
    const double u = rng.uniform01();
    const auto& row = spec.transition[state];
    double cum = 0.0;
    std::size_t next = row.size() - 1;  // absorb rounding into the last state
    for (std::size_t j = 0; j < row.size(); ++j) {
      cum += row[j];
      if (u < cum) {
        next = j;
        break;
      }
    }
    state = next;
    s.times.push_back(static_cast<double>(k) * spec.step);
    s.values.push_back(spec.states[state]);
  }
  s.validate();
  return s;
}

Signal synthetic_light_schedule(const LightScheduleConfig& cfg,
                                std::uint64_t jitter_seed) {
  if (cfg.days < 1) throw std::invalid_argument("light schedule needs days >= 1");
  if (!(cfg.lux_on >= 0.0 && cfg.lux_off >= 0.0))
    throw std::invalid_argument("light levels must be non-negative");
  if (!(cfg.grid_step > 0.0))
    throw std::invalid_argument("light schedule grid step must be > 0");
  if (!(cfg.jitter_hours >= 0.0))
    throw std::invalid_argument("jitter bound must be non-negative");
  auto intervals = cfg.on_hours;
  std::sort(intervals.begin(), intervals.end());
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const auto& [a, b] = intervals[i];
    if (!(0.0 <= a && a < b && b <= 24.0))
      throw std::invalid_argument("on-interval must satisfy 0 <= start < end <= 24");
    if (i > 0 && intervals[i].first < intervals[i - 1].second)
      throw std::invalid_argument("on-intervals must not overlap");
  }

  // Draw all jittered boundaries up front so the profile does not depend on
  // the evaluation grid.
  Rng rng(jitter_seed);
  std::vector<std::vector<std::pair<double, double>>> daily(cfg.days);
  for (int d = 0; d < cfg.days; ++d) {
    daily[d].reserve(intervals.size());
    for (const auto& [a, b] : intervals) {
      double a2 = a, b2 = b;
      if (cfg.jitter_hours > 0.0) {
        a2 += rng.uniform(-cfg.jitter_hours, cfg.jitter_hours);
        b2 += rng.uniform(-cfg.jitter_hours, cfg.jitter_hours);
      }
      a2 = std::clamp(a2, 0.0, 24.0);
      b2 = std::clamp(b2, 0.0, 24.0);
      if (a2 < b2) daily[d].emplace_back(a2, b2);
    }
  }

  const double horizon = 24.0 * cfg.days;
  const std::size_t n_steps = grid_steps(horizon, cfg.grid_step);
  Signal s;
  s.domain_end = horizon;
  s.times.reserve(n_steps + 1);
  s.values.reserve(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k) {
    const double t = static_cast<double>(k) * cfg.grid_step;
    const int day = std::min(static_cast<int>(t / 24.0), cfg.days - 1);
    const double local = t - 24.0 * day;
    bool on = false;
    for (const auto& [a2, b2] : daily[day]) {
      if (local >= a2 && local < b2) {
        on = true;
        break;
      }
    }
    s.times.push_back(t);
    s.values.push_back(on ? cfg.lux_on : cfg.lux_off);
  }
  s.validate();
  return s;
}

Signal smooth_cosine_signal(double horizon, double grid_step) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
  if (!(grid_step > 0.0)) throw std::invalid_argument("grid step must be > 0");
  const std::size_t n_steps = grid_steps(horizon, grid_step);
  Signal s;
  s.domain_end = horizon;
  s.times.reserve(n_steps + 1);
  s.values.reserve(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k) {
    const double t = static_cast<double>(k) * grid_step;
    s.times.push_back(t);
    s.values.push_back(0.5 * (std::cos(t) + 1.0));
  }
  s.validate();
  return s;
}

Signal constant_signal(double value, double horizon) {
  if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be >= 0");
  Signal s;
  s.times = {0.0};
  s.values = {value};
  s.domain_end = horizon;
  s.validate();
  return s;
}

Signal read_signal_csv(const std::string& path,
                       std::optional<double> domain_end) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw std::runtime_error("signal CSV is empty: " + path);
  if (rows[0].size() != 2 || rows[0][0] != "time" || rows[0][1] != "value")
    throw std::runtime_error("signal CSV must start with header 'time,value': " +
                             path);
  Signal s;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 2)
      throw std::runtime_error("signal CSV row must have 2 columns: " + path);
    s.times.push_back(parse_double(rows[i][0], path));
    s.values.push_back(parse_double(rows[i][1], path));
  }
  s.domain_end = domain_end.value_or(s.times.empty() ? 0.0 : s.times.back());
  s.validate();
  return s;
}

void write_signal_csv(const Signal& s, const std::string& path) {
  s.validate();
  std::string out = "time,value\n";
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    out += format_double(s.times[i]);
    out += ',';
    out += format_double(s.values[i]);
    out += '\n';
  }
  write_text_file(path, out);
}

}  // namespace hadesfit
