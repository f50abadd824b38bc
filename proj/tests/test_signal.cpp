// Sampled-signal semantics: zero-order hold, switch detection, generators,
// CSV round trips.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <gtest/gtest.h>
#include <stdexcept>

#include "hadesfit/common.hpp"
#include "hadesfit/signal.hpp"

namespace fs = std::filesystem;
using namespace hadesfit;

namespace {

Signal step_signal() {
  // 0 on [0,1), 1 on [1,2), 0 on [2,3], held to domain_end = 3.
  Signal s;
  s.times = {0.0, 1.0, 2.0};
  s.values = {0.0, 1.0, 0.0};
  s.domain_end = 3.0;
  return s;
}

}  // namespace

// =============================================================================
// Zero-order-hold evaluation
// =============================================================================

TEST(Signal, HoldsMostRecentSample) {
  const Signal s = step_signal();
  EXPECT_DOUBLE_EQ(s.evaluate(0.0), 0.0);
  EXPECT_DOUBLE_EQ(s.evaluate(0.999), 0.0);
  EXPECT_DOUBLE_EQ(s.evaluate(1.0), 1.0);  // new value holds at the sample
  EXPECT_DOUBLE_EQ(s.evaluate(1.5), 1.0);
  EXPECT_DOUBLE_EQ(s.evaluate(2.0), 0.0);
  EXPECT_DOUBLE_EQ(s.evaluate(3.0), 0.0);  // held through domain_end
}

TEST(Signal, EvaluateOutsideDomainIsError) {
  const Signal s = step_signal();
  EXPECT_THROW(s.evaluate(-0.1), std::domain_error);
  EXPECT_THROW(s.evaluate(3.0 + 1e-9), std::domain_error);
}

TEST(Signal, SwitchTimesAreValueChangesOnly) {
  Signal s;
  s.times = {0.0, 1.0, 2.0, 3.0, 4.0};
  s.values = {0.0, 1.0, 1.0, 0.5, 0.5};  // repeats do not switch
  s.domain_end = 5.0;
  const std::vector<double> sw = s.switch_times(0.0, 5.0);
  ASSERT_EQ(sw.size(), 2u);
  EXPECT_DOUBLE_EQ(sw[0], 1.0);
  EXPECT_DOUBLE_EQ(sw[1], 3.0);
}

TEST(Signal, SwitchTimesAreStrictlyInsideTheInterval) {
  const Signal s = step_signal();
  // Switches at 1 and 2; endpoints are excluded.
  EXPECT_TRUE(s.switch_times(1.0, 2.0).empty());
  const std::vector<double> sw = s.switch_times(0.5, 2.0);
  ASSERT_EQ(sw.size(), 1u);
  EXPECT_DOUBLE_EQ(sw[0], 1.0);
}

// =============================================================================
// Validation
// =============================================================================

TEST(Signal, ValidateRejectsMalformedSignals) {
  Signal s;
  EXPECT_THROW(s.validate(), std::invalid_argument);  // empty

  s = step_signal();
  s.values.pop_back();
  EXPECT_THROW(s.validate(), std::invalid_argument);  // length mismatch

  s = step_signal();
  s.times[0] = 0.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);  // must start at 0

  s = step_signal();
  s.times[2] = 1.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);  // not increasing

  s = step_signal();
  s.values[1] = std::nan("");
  EXPECT_THROW(s.validate(), std::invalid_argument);  // non-finite value

  s = step_signal();
  s.domain_end = 1.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);  // domain ends early

  EXPECT_NO_THROW(step_signal().validate());
}

// =============================================================================
// Statistics helpers
// =============================================================================

TEST(Signal, MeanAndStdOfAlternatingBits) {
  Signal s;
  s.times = {0.0, 1.0, 2.0, 3.0};
  s.values = {0.0, 1.0, 0.0, 1.0};
  s.domain_end = 4.0;
  EXPECT_DOUBLE_EQ(signal_mean(s), 0.5);
  EXPECT_DOUBLE_EQ(signal_std(s), 0.5);  // population std of {0,1,0,1}
}

TEST(Signal, StdOfConstantSignalIsZero) {
  const Signal s = constant_signal(3.25, 10.0);
  EXPECT_DOUBLE_EQ(signal_mean(s), 3.25);
  EXPECT_DOUBLE_EQ(signal_std(s), 0.0);
}

// =============================================================================
// Markov chain generator
// =============================================================================

TEST(Markov, BenchmarkChainGridAndStart) {
  MarkovChainSpec spec;
  spec.states = {0.0, 1.0};
  spec.transition = {{0.95, 0.05}, {0.05, 0.95}};
  spec.step = 0.1;
  spec.initial_state_index = 1;

  const Signal s = sample_markov(spec, 20.0, 7);
  ASSERT_EQ(s.times.size(), 201u);  // grid {0, 0.1, ..., 20}
  EXPECT_DOUBLE_EQ(s.times.front(), 0.0);
  EXPECT_NEAR(s.times.back(), 20.0, 1e-12);
  EXPECT_DOUBLE_EQ(s.domain_end, 20.0);
  EXPECT_DOUBLE_EQ(s.values.front(), 1.0);  // starts in the high state
  for (double v : s.values) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Markov, SameSeedSameRealization) {
  MarkovChainSpec spec;
  spec.states = {0.0, 1.0};
  spec.transition = {{0.95, 0.05}, {0.05, 0.95}};

  const Signal a = sample_markov(spec, 20.0, 123);
  const Signal b = sample_markov(spec, 20.0, 123);
  const Signal c = sample_markov(spec, 20.0, 124);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
}

TEST(Markov, StayProbabilityMatchesTransitionMatrix) {
  MarkovChainSpec spec;
  spec.states = {0.0, 1.0};
  spec.transition = {{0.95, 0.05}, {0.05, 0.95}};

  // Long horizon: the empirical stay fraction estimates 0.95. With ~20000
  // transitions the standard error is sqrt(0.95*0.05/20000) ~ 0.0015; a
  // 0.01 tolerance is > 6 sigma.
  const Signal s = sample_markov(spec, 2000.0, 99);
  int stays = 0;
  const int transitions = static_cast<int>(s.values.size()) - 1;
  for (std::size_t i = 1; i < s.values.size(); ++i)
    stays += s.values[i] == s.values[i - 1] ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(stays) / transitions, 0.95, 0.01);
}

TEST(Markov, ValidateRejectsNonStochasticMatrix) {
  MarkovChainSpec spec;
  spec.states = {0.0, 1.0};
  spec.transition = {{0.9, 0.2}, {0.05, 0.95}};  // row sums to 1.1
  EXPECT_THROW(spec.validate(), std::invalid_argument);

  spec.transition = {{0.95, 0.05}};  // wrong shape
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

// =============================================================================
// Light schedule generator
// =============================================================================

TEST(LightSchedule, RectangularProfileWithoutJitter) {
  LightScheduleConfig cfg;
  cfg.days = 2;
  cfg.on_hours = {{8.0, 22.0}};
  cfg.jitter_hours = 0.0;
  cfg.lux_on = 1000.0;
  cfg.lux_off = 0.0;

  const Signal s = synthetic_light_schedule(cfg, 42);
  s.validate();
  EXPECT_DOUBLE_EQ(s.domain_end, 48.0);
  EXPECT_DOUBLE_EQ(s.evaluate(0.0), 0.0);
  EXPECT_DOUBLE_EQ(s.evaluate(10.0), 1000.0);
  EXPECT_DOUBLE_EQ(s.evaluate(23.0), 0.0);
  EXPECT_DOUBLE_EQ(s.evaluate(24.0 + 10.0), 1000.0);
  EXPECT_DOUBLE_EQ(s.evaluate(24.0 + 23.0), 0.0);
}

TEST(LightSchedule, JitterStaysWithinBoundAndIsSeeded) {
  LightScheduleConfig cfg;
  cfg.days = 30;
  cfg.on_hours = {{8.0, 22.0}};
  cfg.jitter_hours = 0.5;

  const Signal a = synthetic_light_schedule(cfg, 1);
  const Signal b = synthetic_light_schedule(cfg, 1);
  const Signal c = synthetic_light_schedule(cfg, 2);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);

  // Every day the profile must be dark at 8 - 0.5 and lit at 8 + 0.5 (and
  // symmetrically around 22), whatever the jitter draw was.
  for (int day = 0; day < 30; ++day) {
    const double base = 24.0 * day;
    EXPECT_DOUBLE_EQ(a.evaluate(base + 7.4), 0.0);
    EXPECT_DOUBLE_EQ(a.evaluate(base + 8.6), 1000.0);
    EXPECT_DOUBLE_EQ(a.evaluate(base + 21.4), 1000.0);
    EXPECT_DOUBLE_EQ(a.evaluate(base + 22.6), 0.0);
  }
}

// =============================================================================
// Analytic generators
// =============================================================================

TEST(Generators, SmoothCosineMatchesClosedForm) {
  const Signal s = smooth_cosine_signal(20.0, 0.01);
  s.validate();
  EXPECT_DOUBLE_EQ(s.domain_end, 20.0);
  for (std::size_t i = 0; i < s.times.size(); i += 97) {
    const double t = s.times[i];
    EXPECT_NEAR(s.values[i], (std::cos(t) + 1.0) / 2.0, 1e-12);
  }
}

TEST(Generators, ConstantSignal) {
  const Signal s = constant_signal(2.5, 7.0);
  s.validate();
  EXPECT_DOUBLE_EQ(s.evaluate(0.0), 2.5);
  EXPECT_DOUBLE_EQ(s.evaluate(7.0), 2.5);
  EXPECT_TRUE(s.switch_times(0.0, 7.0).empty());
}

// =============================================================================
// CSV round trip
// =============================================================================

TEST(SignalCsv, RoundTripIsExact) {
  const fs::path path = fs::temp_directory_path() / "hadesfit_sig_rt.csv";
  Signal s;
  s.times = {0.0, 0.1, 0.30000000000000004, 2.0};
  s.values = {1.0 / 3.0, -0.25, 1e-17, 5.0};
  s.domain_end = 2.5;

  write_signal_csv(s, path.string());
  const Signal r = read_signal_csv(path.string(), 2.5);
  ASSERT_EQ(r.times.size(), s.times.size());
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    EXPECT_DOUBLE_EQ(r.times[i], s.times[i]);    // 17 significant digits
    EXPECT_DOUBLE_EQ(r.values[i], s.values[i]);  // round-trip exactly
  }
  EXPECT_DOUBLE_EQ(r.domain_end, 2.5);
  fs::remove(path);
}

TEST(SignalCsv, DomainEndDefaultsToLastSample) {
  const fs::path path = fs::temp_directory_path() / "hadesfit_sig_de.csv";
  write_signal_csv(step_signal(), path.string());
  const Signal r = read_signal_csv(path.string());
  EXPECT_DOUBLE_EQ(r.domain_end, 2.0);
  fs::remove(path);
}

TEST(SignalCsv, MissingHeaderIsRejected) {
  const fs::path path = fs::temp_directory_path() / "hadesfit_sig_bad.csv";
  {
    std::ofstream out(path);
    out << "0.0,1.0\n0.5,2.0\n";
  }
  EXPECT_THROW(read_signal_csv(path.string()), std::runtime_error);
  fs::remove(path);
}

// =============================================================================
// Seed derivation and the deterministic generator
// =============================================================================

TEST(Rng, NamedStreamsAreUnrelated) {
  const std::uint64_t a = derive_seed(42, "signal");
  const std::uint64_t b = derive_seed(42, "observations");
  const std::uint64_t c = derive_seed(43, "signal");
  EXPECT_NE(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a, derive_seed(42, "signal"));
}

TEST(Rng, IndexedFamilyIsInjectiveOnSmallRanges) {
  const std::uint64_t base = derive_seed(7, "trials");
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.push_back(derive_seed(base, i));
  std::sort(seeds.begin(), seeds.end());
  EXPECT_EQ(std::adjacent_find(seeds.begin(), seeds.end()), seeds.end());
}

TEST(Rng, DistributionsStayInRange) {
  Rng rng(2026);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(2.0, 3.0);
    EXPECT_GE(u, 2.0);
    EXPECT_LT(u, 3.0);
    const double l = rng.log_uniform(0.5, 8.0);
    EXPECT_GE(l, 0.5);
    EXPECT_LT(l, 8.0);
    EXPECT_LT(rng.below(17), 17u);
  }
}

TEST(Rng, LogUniformMedianIsGeometricMean) {
  Rng rng(99);
  // log-uniform on [a, b] has median sqrt(a*b); with 20000 draws the sample
  // median of the logs has s.e. ~ log(b/a)/sqrt(4n) ~ 0.012.
  std::vector<double> draws(20000);
  for (double& d : draws) d = std::log(rng.log_uniform(0.5, 8.0));
  std::nth_element(draws.begin(), draws.begin() + 10000, draws.end());
  EXPECT_NEAR(draws[10000], std::log(2.0), 0.05);  // sqrt(0.5*8) = 2
}

