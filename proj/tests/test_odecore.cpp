// Integrator core: input-source semantics, closed-form and independent-oracle
// trajectory checks, forward sensitivities, failure modes, quadrature.
#include <cmath>
#include <gtest/gtest.h>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hadesfit/common.hpp"
#include "hadesfit/models.hpp"
#include "hadesfit/odecore.hpp"
#include "hadesfit/signal.hpp"
#include "oracles.hpp"

using namespace hadesfit;
namespace oracle = hadesfit::testing;

namespace {

Signal step_signal() {
  // 1 on [0,1), -0.5 on [1,2), 2 on [2,3), 0.25 on [3,4], domain_end = 4.
  Signal s;
  s.times = {0.0, 1.0, 2.0, 3.0};
  s.values = {1.0, -0.5, 2.0, 0.25};
  s.domain_end = 4.0;
  return s;
}

// dy/dt = -p1 * y, ignoring the drive. Closed form y(t) = y0 * exp(-p1 t),
// sensitivity dy/dp1 = -t * y0 * exp(-p1 t).
ModelSpec make_decay_model() {
  ModelSpec m;
  m.state_dim = 1;
  m.param_dim = 1;
  m.rhs = [](double, Eigen::Ref<const Eigen::VectorXd> y,
             Eigen::Ref<const Eigen::VectorXd> p, double,
             Eigen::Ref<Eigen::VectorXd> dy) { dy[0] = -p[0] * y[0]; };
  m.rhs_jac_y = [](double, Eigen::Ref<const Eigen::VectorXd>,
                   Eigen::Ref<const Eigen::VectorXd> p, double,
                   Eigen::Ref<Eigen::MatrixXd> jac) { jac(0, 0) = -p[0]; };
  m.rhs_jac_p = [](double, Eigen::Ref<const Eigen::VectorXd> y,
                   Eigen::Ref<const Eigen::VectorXd>, double,
                   Eigen::Ref<Eigen::MatrixXd> jac) { jac(0, 0) = -y[0]; };
  m.initial_state = Eigen::VectorXd::Constant(1, 2.0);
  m.param_names = {"rate"};
  return m;
}

// dy/dt = p1 * (s(t) - y): first-order relaxation toward the held drive.
// On a piece [a, b) with held value s_k and entry state y_a the closed form
// is y(t) = s_k + (y_a - s_k) * exp(-p1 (t - a)), which makes the exact
// switch-time restart behaviour observable.
ModelSpec make_relaxation_model() {
  ModelSpec m;
  m.state_dim = 1;
  m.param_dim = 1;
  m.rhs = [](double, Eigen::Ref<const Eigen::VectorXd> y,
             Eigen::Ref<const Eigen::VectorXd> p, double s,
             Eigen::Ref<Eigen::VectorXd> dy) { dy[0] = p[0] * (s - y[0]); };
  m.rhs_jac_y = [](double, Eigen::Ref<const Eigen::VectorXd>,
                   Eigen::Ref<const Eigen::VectorXd> p, double,
                   Eigen::Ref<Eigen::MatrixXd> jac) { jac(0, 0) = -p[0]; };
  m.rhs_jac_p = [](double, Eigen::Ref<const Eigen::VectorXd> y,
                   Eigen::Ref<const Eigen::VectorXd>, double s,
                   Eigen::Ref<Eigen::MatrixXd> jac) { jac(0, 0) = s - y[0]; };
  m.initial_state = Eigen::VectorXd::Constant(1, 0.8);
  m.param_names = {"rate"};
  return m;
}

// dy/dt = y^2 with y(0) = 2 blows up in finite time: y(t) = 2 / (1 - 2t),
// so |y| reaches a bound B exactly at t = 1/2 - 1/B.
ModelSpec make_blowup_model() {
  ModelSpec m;
  m.state_dim = 1;
  m.param_dim = 1;
  m.rhs = [](double, Eigen::Ref<const Eigen::VectorXd> y,
             Eigen::Ref<const Eigen::VectorXd>, double,
             Eigen::Ref<Eigen::VectorXd> dy) { dy[0] = y[0] * y[0]; };
  m.rhs_jac_y = [](double, Eigen::Ref<const Eigen::VectorXd> y,
                   Eigen::Ref<const Eigen::VectorXd>, double,
                   Eigen::Ref<Eigen::MatrixXd> jac) { jac(0, 0) = 2.0 * y[0]; };
  m.rhs_jac_p = [](double, Eigen::Ref<const Eigen::VectorXd>,
                   Eigen::Ref<const Eigen::VectorXd>, double,
                   Eigen::Ref<Eigen::MatrixXd> jac) { jac(0, 0) = 0.0; };
  m.initial_state = Eigen::VectorXd::Constant(1, 2.0);
  m.param_names = {"unused"};
  return m;
}

// Tight tolerances for finite-difference cross checks: with default rtol the
// integration error (~1e-8 |y|) divided by the difference step would swamp
// the comparison.
IntegratorOptions tight_opts() {
  IntegratorOptions opts;
  opts.rtol = 1e-12;
  opts.atol = 1e-14;
  return opts;
}

// Central finite differences of the final state with respect to each
// parameter, step 1e-5 * max(1, |p_j|). With the tight integrator options the
// subtraction cancellation stays near 1e-12 * |y| / 2e-5 = 5e-8 |y|, well
// below the 1e-4 comparison tolerance.
Eigen::MatrixXd central_fd_sensitivity(const ModelSpec& model,
                                       const Eigen::VectorXd& p,
                                       const InputSource& input, double t) {
  Eigen::MatrixXd fd(model.state_dim, model.param_dim);
  const std::vector<double> t_eval = {t};
  for (int j = 0; j < model.param_dim; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(p[j]));
    Eigen::VectorXd pp = p;
    Eigen::VectorXd pm = p;
    pp[j] += h;
    pm[j] -= h;
    const Eigen::VectorXd yp =
        integrate(model, pp, input, t_eval, tight_opts()).states.row(0);
    const Eigen::VectorXd ym =
        integrate(model, pm, input, t_eval, tight_opts()).states.row(0);
    fd.col(j) = (yp - ym) / (2.0 * h);
  }
  return fd;
}

// Entrywise relative deviation scaled by max(|a|, |b|, 1), matching the
// convention of the jacobian self-test.
double max_relative_deviation(const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double scale =
          std::max({std::abs(a(i, j)), std::abs(b(i, j)), 1.0});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / scale);
    }
  return worst;
}

Signal table_markov_signal(std::uint64_t seed) {
  MarkovChainSpec spec;
  spec.states = {0.0, 1.0};
  spec.transition = {{0.95, 0.05}, {0.05, 0.95}};
  spec.step = 0.1;
  spec.initial_state_index = 1;
  return sample_markov(spec, 20.0, seed);
}

}  // namespace

// =============================================================================
// Input-source semantics
// =============================================================================

TEST(InputSource, ZeroOrderHoldForwardsTheSignal) {
  const InputSource input = InputSource::zero_order_hold(step_signal());
  ASSERT_TRUE(input.is_sampled());
  EXPECT_DOUBLE_EQ(input.value(0.0), 1.0);
  EXPECT_DOUBLE_EQ(input.value(0.999), 1.0);
  EXPECT_DOUBLE_EQ(input.value(1.0), -0.5);  // new value holds at the sample
  EXPECT_DOUBLE_EQ(input.value(2.5), 2.0);
  EXPECT_DOUBLE_EQ(input.value(3.7), 0.25);  // held through domain_end
}

TEST(InputSource, ClampsAtDomainEndButNotBelowZero) {
  const InputSource input = InputSource::zero_order_hold(step_signal());
  // Slightly-past-the-end queries arise from roundoff in stepping arithmetic
  // and must resolve to the final held value instead of throwing.
  EXPECT_DOUBLE_EQ(input.value(4.0), 0.25);
  EXPECT_DOUBLE_EQ(input.value(4.0 + 1e-9), 0.25);
  // Negative times are a real caller bug and still surface as an error.
  EXPECT_THROW(input.value(-0.5), std::domain_error);
}

TEST(InputSource, SwitchTimesComeFromTheSignal) {
  const Signal s = step_signal();
  const InputSource input = InputSource::zero_order_hold(s);
  EXPECT_EQ(input.switch_times(0.0, 4.0), s.switch_times(0.0, 4.0));
  const std::vector<double> expected = {1.0, 2.0, 3.0};
  EXPECT_EQ(input.switch_times(0.0, 4.0), expected);
}

TEST(InputSource, ZeroOrderHoldReportsDomainEnd) {
  const InputSource input = InputSource::zero_order_hold(step_signal());
  const std::optional<double> end = input.domain_end();
  ASSERT_TRUE(end.has_value());
  EXPECT_DOUBLE_EQ(*end, 4.0);
}

TEST(InputSource, SmoothSourceEvaluatesTheNetworkEverywhere) {
  SmootherNet net(SmootherNet::Architecture{4, 2, 6}, 0.0, 10.0);
  Rng rng(42);
  net.initialize(rng, 1.5, 0.5);
  const SmootherNet copy = net;  // InputSource takes ownership of its own copy
  const InputSource input = InputSource::smooth(std::move(net));

  EXPECT_FALSE(input.is_sampled());
  EXPECT_FALSE(input.domain_end().has_value());
  EXPECT_TRUE(input.switch_times(0.0, 10.0).empty());
  for (double t : {0.0, 0.3, 4.9, 9.999, 10.0}) {
    EXPECT_DOUBLE_EQ(input.value(t), copy.forward(t));
  }
}

// =============================================================================
// Trajectories against closed forms
// =============================================================================

TEST(Integrate, ExponentialDecayMatchesClosedForm) {
  const ModelSpec model = make_decay_model();
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 0.7);
  const InputSource input =
      InputSource::zero_order_hold(constant_signal(1.0, 10.0));
  const std::vector<double> t_eval = {0.0, 0.5, 1.0, 2.0, 5.0, 10.0};

  const Trajectory traj = integrate(model, p, input, t_eval);
  ASSERT_EQ(traj.times.size(), static_cast<Eigen::Index>(t_eval.size()));
  EXPECT_FALSE(traj.has_sensitivities());
  for (std::size_t i = 0; i < t_eval.size(); ++i) {
    const double expected = 2.0 * std::exp(-0.7 * t_eval[i]);
    // Default rtol is 1e-8; allow an order of magnitude for accumulation.
    EXPECT_NEAR(traj.states(static_cast<Eigen::Index>(i), 0), expected,
                1e-7 * std::max(1.0, expected))
        << "at t = " << t_eval[i];
  }
}

TEST(Integrate, EvaluationAtTimeZeroIsTheInitialStateExactly) {
  const ModelSpec model = make_decay_model();
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 0.7);
  const InputSource input =
      InputSource::zero_order_hold(constant_signal(1.0, 5.0));
  const Trajectory traj = integrate(model, p, input, {0.0, 1.0});
  EXPECT_EQ(traj.states(0, 0), 2.0);
}

TEST(Integrate, PiecewiseRelaxationMatchesPerPieceClosedForm) {
  const ModelSpec model = make_relaxation_model();
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 1.3);
  const Signal s = step_signal();
  const InputSource input = InputSource::zero_order_hold(s);
  const std::vector<double> t_eval = {0.5, 1.0, 1.75, 2.0, 3.5, 4.0};

  const Trajectory traj = integrate(model, p, input, t_eval);

  // Walk the exact per-piece solution y(t) = s_k + (y_a - s_k) e^{-p (t-a)},
  // restarting at every held-value change. Any integrator that smears across
  // a switch instead of restarting there drifts from this recursion.
  auto exact_at = [&](double t_query) {
    double y = model.initial_state[0];
    double a = 0.0;
    std::vector<double> cuts = s.switch_times(0.0, t_query);
    cuts.push_back(t_query);
    for (double b : cuts) {
      const double held = s.evaluate(a);
      y = held + (y - held) * std::exp(-p[0] * (b - a));
      a = b;
    }
    return y;
  };
  for (std::size_t i = 0; i < t_eval.size(); ++i) {
    EXPECT_NEAR(traj.states(static_cast<Eigen::Index>(i), 0),
                exact_at(t_eval[i]), 1e-8)
        << "at t = " << t_eval[i];
  }
}

// =============================================================================
// Trajectories against the independent fixed-step oracle
// =============================================================================

TEST(Integrate, LotkaVolterraMatchesRk4UnderConstantDrive) {
  const ModelSpec model = make_lotka_volterra();
  const Eigen::VectorXd p = lotka_volterra_reference_params();
  const InputSource input =
      InputSource::zero_order_hold(constant_signal(1.0, 20.0));

  const Trajectory traj = integrate(model, p, input, {15.0});
  const Eigen::VectorXd oracle =
      oracle::rk4_reference(model, p, input, 15.0, 2000);

  // Both solvers are far more accurate than 1e-6 here (adaptive rtol 1e-8,
  // fixed-step h = 5e-4), so agreement to 1e-6 is a genuine cross check.
  EXPECT_NEAR(traj.states(0, 0), oracle[0], 1e-6);
  EXPECT_NEAR(traj.states(0, 1), oracle[1], 1e-6);
}

TEST(Integrate, LotkaVolterraMatchesRk4UnderMarkovDrive) {
  const ModelSpec model = make_lotka_volterra();
  const Eigen::VectorXd p = lotka_volterra_reference_params();
  const Signal s = table_markov_signal(20260816);
  const InputSource input = InputSource::zero_order_hold(s);

  for (double t_end : {6.0, 12.0, 20.0}) {
    const Trajectory traj = integrate(model, p, input, {t_end});
    const Eigen::VectorXd oracle =
        oracle::rk4_reference(model, p, input, t_end, 2000);
    EXPECT_NEAR(traj.states(0, 0), oracle[0],
                1e-6 * std::max(1.0, std::abs(oracle[0])))
        << "prey at t = " << t_end;
    EXPECT_NEAR(traj.states(0, 1), oracle[1],
                1e-6 * std::max(1.0, std::abs(oracle[1])))
        << "predator at t = " << t_end;
  }
}

TEST(Integrate, CircadianMatchesRk4UnderLightSchedule) {
  const ModelSpec model = make_circadian();
  const Eigen::VectorXd p = circadian_reference_params();
  LightScheduleConfig cfg;
  cfg.days = 2;
  cfg.lux_on = 1000.0;
  cfg.on_hours = {{8.0, 22.0}};
  const Signal s = synthetic_light_schedule(cfg, 7);
  const InputSource input = InputSource::zero_order_hold(s);

  const Trajectory traj = integrate(model, p, input, {30.0});
  const Eigen::VectorXd oracle =
      oracle::rk4_reference(model, p, input, 30.0, 1000);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(traj.states(0, i), oracle[i], 1e-6)
        << "state component " << i;
  }
}

TEST(Integrate, RepeatRunsAreBitIdentical) {
  const ModelSpec model = make_lotka_volterra();
  const Eigen::VectorXd p = lotka_volterra_reference_params();
  const InputSource input =
      InputSource::zero_order_hold(table_markov_signal(11));
  const std::vector<double> t_eval = {5.0, 10.0, 20.0};

  const Trajectory a = integrate(model, p, input, t_eval);
  const Trajectory b = integrate(model, p, input, t_eval);
  EXPECT_EQ((a.states - b.states).cwiseAbs().maxCoeff(), 0.0);
}

// =============================================================================
// Forward sensitivities
// =============================================================================

TEST(Sensitivities, InitialSensitivityIsExactlyZero) {
  const ModelSpec model = make_lotka_volterra();
  const Eigen::VectorXd p = lotka_volterra_reference_params();
  const InputSource input =
      InputSource::zero_order_hold(table_markov_signal(3));

  const Trajectory traj =
      integrate_with_sensitivities(model, p, input, {0.0, 1.0});
  ASSERT_TRUE(traj.has_sensitivities());
  ASSERT_EQ(traj.sensitivities.size(), 2u);
  ASSERT_EQ(traj.sensitivities[0].rows(), 2);
  ASSERT_EQ(traj.sensitivities[0].cols(), 4);
  // z(0) = 0 is a definition, not an approximation.
  EXPECT_EQ(traj.sensitivities[0].cwiseAbs().maxCoeff(), 0.0);
  // By t = 1 the parameters have had visible influence.
  EXPECT_GT(traj.sensitivities[1].cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Sensitivities, ExponentialDecayMatchesClosedForm) {
  const ModelSpec model = make_decay_model();
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 0.7);
  const InputSource input =
      InputSource::zero_order_hold(constant_signal(1.0, 5.0));
  const std::vector<double> t_eval = {0.0, 0.5, 1.5, 3.0, 5.0};

  const Trajectory traj =
      integrate_with_sensitivities(model, p, input, t_eval);
  for (std::size_t i = 0; i < t_eval.size(); ++i) {
    // d/dp [2 e^{-p t}] = -2 t e^{-p t}.
    const double expected = -2.0 * t_eval[i] * std::exp(-0.7 * t_eval[i]);
    EXPECT_NEAR(traj.sensitivities[i](0, 0), expected, 1e-7)
        << "at t = " << t_eval[i];
  }
}

TEST(Sensitivities, LotkaVolterraMatchesCentralDifferencesUnderMarkovDrive) {
  const ModelSpec model = make_lotka_volterra();
  const InputSource input =
      InputSource::zero_order_hold(table_markov_signal(99));

  Rng rng(314159);
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd p(4);
    for (int j = 0; j < 4; ++j) p[j] = rng.log_uniform(0.5, 4.0);
    const double t_end = rng.uniform(4.0, 18.0);

    const Trajectory traj =
        integrate_with_sensitivities(model, p, input, {t_end}, tight_opts());
    const Eigen::MatrixXd fd = central_fd_sensitivity(model, p, input, t_end);
    EXPECT_LT(max_relative_deviation(traj.sensitivities[0], fd), 1e-4)
        << "p = " << p.transpose() << ", t = " << t_end;
  }
}

TEST(Sensitivities, CircadianMatchesCentralDifferencesUnderLightSchedule) {
  const ModelSpec model = make_circadian();
  LightScheduleConfig cfg;
  cfg.days = 2;
  cfg.lux_on = 1000.0;
  cfg.on_hours = {{8.0, 22.0}};
  const InputSource input =
      InputSource::zero_order_hold(synthetic_light_schedule(cfg, 21));

  const Eigen::VectorXd p = circadian_reference_params();
  const Trajectory traj =
      integrate_with_sensitivities(model, p, input, {30.0}, tight_opts());
  const Eigen::MatrixXd fd = central_fd_sensitivity(model, p, input, 30.0);
  EXPECT_LT(max_relative_deviation(traj.sensitivities[0], fd), 1e-4);
}

TEST(Sensitivities, LightProcessingStateIsParameterIndependent) {
  // The light-processing state n evolves as dn/dt = f(n, s) with no
  // dependence on the estimated parameters or the oscillator pair, so its
  // sensitivity row obeys dz_n/dt = (dF_n/dn) z_n with z_n(0) = 0 and stays
  // exactly zero: every Runge-Kutta stage multiplies and adds exact zeros.
  const ModelSpec model = make_circadian();
  LightScheduleConfig cfg;
  cfg.days = 2;
  cfg.lux_on = 1000.0;
  cfg.on_hours = {{8.0, 22.0}};
  const InputSource input =
      InputSource::zero_order_hold(synthetic_light_schedule(cfg, 5));

  const Trajectory traj = integrate_with_sensitivities(
      model, circadian_reference_params(), input, {12.0, 24.0, 40.0});
  for (const Eigen::MatrixXd& z : traj.sensitivities) {
    EXPECT_EQ(z.row(2).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Sensitivities, SmoothSurrogateInputMatchesCentralDifferences) {
  SmootherNet net(SmootherNet::Architecture{6, 2, 8}, 0.0, 12.0);
  Rng rng(2718);
  net.initialize(rng, 1.0, 0.4);
  const InputSource input = InputSource::smooth(std::move(net));

  const ModelSpec model = make_lotka_volterra();
  Eigen::VectorXd p(4);
  p << 1.7, 0.6, 0.9, 1.2;

  const Trajectory traj =
      integrate_with_sensitivities(model, p, input, {10.0}, tight_opts());
  const Eigen::MatrixXd fd = central_fd_sensitivity(model, p, input, 10.0);
  EXPECT_LT(max_relative_deviation(traj.sensitivities[0], fd), 1e-4);
}

// =============================================================================
// Jacobian self-test
// =============================================================================

TEST(JacobianCheck, BuiltinLotkaVolterraPasses) {
  const JacobianCheckResult r =
      check_jacobians(make_lotka_volterra(), {}, 20, 1234);
  EXPECT_LT(r.max_relative_error, 1e-5) << "worst entry: " << r.worst_entry;
  EXPECT_TRUE(r.passed());
}

TEST(JacobianCheck, BuiltinCircadianPasses) {
  JacobianCheckDomain domain;
  domain.t_min = 0.0;
  domain.t_max = 48.0;
  domain.y_min = Eigen::Vector3d(-1.5, -1.5, 0.05);
  domain.y_max = Eigen::Vector3d(1.5, 1.5, 0.95);
  domain.p_min = (Eigen::VectorXd(4) << 15.0, 0.05, 5.0, 0.1).finished();
  domain.p_max = (Eigen::VectorXd(4) << 30.0, 0.6, 40.0, 1.2).finished();
  domain.s_min = 0.0;
  domain.s_max = 2000.0;

  const JacobianCheckResult r =
      check_jacobians(make_circadian(), domain, 20, 5678);
  EXPECT_LT(r.max_relative_error, 1e-5) << "worst entry: " << r.worst_entry;
}

TEST(JacobianCheck, DetectsABrokenJacobian) {
  ModelSpec broken = make_lotka_volterra();
  const ModelSpec::JacFn good = broken.rhs_jac_y;
  broken.rhs_jac_y = [good](double t, Eigen::Ref<const Eigen::VectorXd> y,
                            Eigen::Ref<const Eigen::VectorXd> p, double s,
                            Eigen::Ref<Eigen::MatrixXd> jac) {
    good(t, y, p, s, jac);
    jac(0, 0) += 0.05;
  };
  const JacobianCheckResult r = check_jacobians(broken, {}, 20, 1234);
  EXPECT_GT(r.max_relative_error, 1e-3);
  EXPECT_FALSE(r.passed());
}

TEST(JacobianCheck, RegistryRejectsModelsFailingTheSelfTest) {
  ModelSpec broken = make_lotka_volterra();
  const ModelSpec::JacFn good = broken.rhs_jac_p;
  broken.rhs_jac_p = [good](double t, Eigen::Ref<const Eigen::VectorXd> y,
                            Eigen::Ref<const Eigen::VectorXd> p, double s,
                            Eigen::Ref<Eigen::MatrixXd> jac) {
    good(t, y, p, s, jac);
    jac(1, 2) += 0.1;
  };
  ModelRegistry registry;
  try {
    registry.register_model("broken_lv", std::move(broken));
    FAIL() << "expected the registry to reject the broken model";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("broken_lv"), std::string::npos)
        << "error should name the offending entry, got: " << e.what();
  }
}

// =============================================================================
// Failure modes
// =============================================================================

TEST(IntegrationFailure, StateBoundAbortReportsTheBlowupTime) {
  const ModelSpec model = make_blowup_model();
  const Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
  const InputSource input =
      InputSource::zero_order_hold(constant_signal(0.0, 1.0));
  try {
    integrate(model, p, input, {1.0});
    FAIL() << "expected IntegrationError";
  } catch (const IntegrationError& e) {
    // y = 2/(1-2t) crosses the default bound 1e8 at t = 1/2 - 1e-8.
    EXPECT_NEAR(e.failure_time, 0.5, 0.01);
    EXPECT_NE(std::string(e.what()).find("state bound exceeded"),
              std::string::npos)
        << e.what();
  }
}

TEST(IntegrationFailure, StateBoundIsHonoredQuantitatively) {
  const ModelSpec model = make_blowup_model();
  const Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
  const InputSource input =
      InputSource::zero_order_hold(constant_signal(0.0, 1.0));
  IntegratorOptions opts;
  opts.state_bound = 10.0;  // y crosses 10 at t = 1/2 - 1/10 = 0.4
  try {
    integrate(model, p, input, {1.0}, opts);
    FAIL() << "expected IntegrationError";
  } catch (const IntegrationError& e) {
    EXPECT_NEAR(e.failure_time, 0.4, 0.02);
  }
}

TEST(IntegrationFailure, StepBudgetAbortNamesTheBudget) {
  const ModelSpec model = make_lotka_volterra();
  const Eigen::VectorXd p = lotka_volterra_reference_params();
  const InputSource input =
      InputSource::zero_order_hold(table_markov_signal(4));
  IntegratorOptions opts;
  opts.max_steps = 5;  // far below what 200 pieces over [0, 20] require
  try {
    integrate(model, p, input, {20.0}, opts);
    FAIL() << "expected IntegrationError";
  } catch (const IntegrationError& e) {
    EXPECT_NE(std::string(e.what()).find("step budget exceeded"),
              std::string::npos)
        << e.what();
  }
}

// =============================================================================
// Evaluation-grid validation
// =============================================================================

TEST(EvaluationGrid, RejectsEmptyNegativeAndNonIncreasingGrids) {
  const ModelSpec model = make_decay_model();
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 1.0);
  const InputSource input =
      InputSource::zero_order_hold(constant_signal(1.0, 10.0));

  EXPECT_THROW(integrate(model, p, input, {}), std::invalid_argument);
  EXPECT_THROW(integrate(model, p, input, {-1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(integrate(model, p, input, {1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(integrate(model, p, input, {2.0, 1.0}), std::invalid_argument);
}

TEST(EvaluationGrid, RejectsTimesBeyondTheInputDomain) {
  const ModelSpec model = make_decay_model();
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 1.0);
  const InputSource input =
      InputSource::zero_order_hold(constant_signal(1.0, 10.0));
  try {
    integrate(model, p, input, {5.0, 10.5});
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("exceeds the input domain end"),
              std::string::npos)
        << e.what();
  }
  // The exact domain end itself is admissible.
  EXPECT_NO_THROW(integrate(model, p, input, {10.0}));
}

// =============================================================================
// Quadrature
// =============================================================================

TEST(Quadrature, SineL2NormOverAFullPeriodIsSqrtPi) {
  // Integral of sin^2 over [0, 2 pi] equals pi, so the L2 norm is sqrt(pi).
  const double norm = l2_norm_quadrature(
      [](double t) { return std::sin(t) * std::sin(t); }, 0.0, 2.0 * M_PI);
  EXPECT_NEAR(norm, std::sqrt(M_PI), 1e-10);
}

TEST(Quadrature, SimpsonIsExactForQuadraticSquaredValue) {
  // Simpson integrates cubics exactly; with squared value t^2 on [0, 3] the
  // integral is 9 even on the minimal 3-point grid, so the norm is exactly 3.
  const double norm =
      l2_norm_quadrature([](double t) { return t * t; }, 0.0, 3.0, 3);
  EXPECT_DOUBLE_EQ(norm, 3.0);
}

TEST(Quadrature, RejectsDegenerateGrids) {
  const auto sq = [](double t) { return t * t; };
  EXPECT_THROW(l2_norm_quadrature(sq, 0.0, 1.0, 2000), std::invalid_argument);
  EXPECT_THROW(l2_norm_quadrature(sq, 0.0, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(l2_norm_quadrature(sq, 1.0, 1.0), std::invalid_argument);
}

// =============================================================================
// Model validation and CSV export
// =============================================================================

TEST(ModelSpecValidation, RejectsIncompleteSpecs) {
  ModelSpec missing_jac = make_decay_model();
  missing_jac.rhs_jac_p = nullptr;
  EXPECT_THROW(missing_jac.validate(), std::invalid_argument);

  ModelSpec bad_dims = make_decay_model();
  bad_dims.param_dim = 0;
  EXPECT_THROW(bad_dims.validate(), std::invalid_argument);

  ModelSpec bad_y0 = make_decay_model();
  bad_y0.initial_state = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(bad_y0.validate(), std::invalid_argument);

  ModelSpec bad_names = make_decay_model();
  bad_names.param_names = {"a", "b"};
  EXPECT_THROW(bad_names.validate(), std::invalid_argument);

  EXPECT_NO_THROW(make_decay_model().validate());
}

TEST(TrajectoryCsv, ListsStatesThenSensitivitiesParameterMajor) {
  const ModelSpec model = make_lotka_volterra();
  const Eigen::VectorXd p = lotka_volterra_reference_params();
  const InputSource input =
      InputSource::zero_order_hold(constant_signal(1.0, 5.0));
  const Trajectory traj =
      integrate_with_sensitivities(model, p, input, {0.0, 1.0, 2.0});

  const std::string csv = traj.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "t,y1,y2,z_1_1,z_2_1,z_1_2,z_2_2,z_1_3,z_2_3,z_1_4,z_2_4");
  // Header plus one line per evaluation time.
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(lines, 4);
}
