#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hadesfit/signal.hpp"
#include "hadesfit/smoother.hpp"

namespace hadesfit {

/// Parametrized non-autonomous vector field dy/dt = F(t, y, p, s(t))
/// together with its analytic partial derivatives. The partials power
/// forward sensitivity propagation: with z = dy/dp,
///   dz/dt = dF/dp + (dF/dy) z,  z(0) = 0,
/// integrated jointly with the state.
struct ModelSpec {
  using RhsFn = std::function<void(double t, Eigen::Ref<const Eigen::VectorXd> y,
                                   Eigen::Ref<const Eigen::VectorXd> p, double s,
                                   Eigen::Ref<Eigen::VectorXd> dy)>;
  using JacFn = std::function<void(double t, Eigen::Ref<const Eigen::VectorXd> y,
                                   Eigen::Ref<const Eigen::VectorXd> p, double s,
                                   Eigen::Ref<Eigen::MatrixXd> jac)>;

  int state_dim = 0;
  int param_dim = 0;
  RhsFn rhs;
  JacFn rhs_jac_y;  ///< dF/dy, state_dim x state_dim
  JacFn rhs_jac_p;  ///< dF/dp, state_dim x param_dim
  Eigen::VectorXd initial_state;
  std::vector<std::string> param_names;
  std::vector<bool> param_positive;  ///< which parameters are physically > 0

  void validate() const;
};

/// Box from which the jacobian self-test draws random evaluation points.
struct JacobianCheckDomain {
  double t_min = 0.0, t_max = 10.0;
  Eigen::VectorXd y_min, y_max;  ///< empty => [0.2, 2] per component
  Eigen::VectorXd p_min, p_max;  ///< empty => [0.2, 2] per component
  double s_min = 0.0, s_max = 1.0;
};

struct JacobianCheckResult {
  double max_relative_error = 0.0;
  std::string worst_entry;  ///< coordinates of the worst deviation

  bool passed(double tol = 1e-5) const { return max_relative_error < tol; }
};

/// Compare the analytic jacobians against central finite differences of the
/// rhs at random points of the domain. Relative error is scaled by
/// max(|analytic|, |difference|, 1).
JacobianCheckResult check_jacobians(const ModelSpec& model,
                                    const JacobianCheckDomain& domain,
                                    int n_points, std::uint64_t seed);

/// States (and optionally sensitivities) evaluated on a time grid.
struct Trajectory {
  Eigen::VectorXd times;
  Eigen::MatrixXd states;  ///< one row per time, state_dim columns
  /// dy_i/dp_j at each time (state_dim x param_dim); empty when the plain
  /// integrator produced the trajectory.
  std::vector<Eigen::MatrixXd> sensitivities;

  bool has_sensitivities() const { return !sensitivities.empty(); }
  /// Columns: t, y1..yD, then z_i_j in column-major (i state, j parameter).
  std::string to_csv() const;
};

/// External input for integration: either a sampled signal under zero-order
/// hold (the integrator restarts at its switch times) or a smooth network
/// surrogate. Copies share immutable payloads and are safe to evaluate from
/// multiple threads.
class InputSource {
 public:
  static InputSource zero_order_hold(Signal signal);
  static InputSource zero_order_hold(std::shared_ptr<const Signal> signal);
  static InputSource smooth(SmootherNet net);
  static InputSource smooth(std::shared_ptr<const SmootherNet> net);

  double value(double t) const;
  bool is_sampled() const { return signal_ != nullptr; }
  /// Held-value change points strictly inside (t0, t1); empty for smooth
  /// inputs.
  std::vector<double> switch_times(double t0, double t1) const;
  /// Largest admissible evaluation time, when the input has one.
  std::optional<double> domain_end() const;

 private:
  InputSource() = default;
  std::shared_ptr<const Signal> signal_;
  std::shared_ptr<const SmootherNet> net_;
};

struct IntegratorOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 500'000;
  /// Any component exceeding this magnitude aborts the run. Divergent
  /// trajectories otherwise force ever-shrinking steps and can burn the whole
  /// step budget before overflowing; optimizers treat the abort as infinite
  /// loss either way, so bailing out early only saves time.
  double state_bound = 1e8;
};

/// Raised when adaptive stepping cannot continue (step underflow,
/// non-finite or out-of-bound state, or step budget exhausted). Carries the
/// time at which integration failed.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(double t, const std::string& reason);
  double failure_time;
};

/// Integrate the model from y(0) = initial_state and report states at
/// `t_eval` (strictly increasing, inside [0, input domain]). Integration
/// restarts exactly at the input's switch times so each piece sees a smooth
/// vector field.
Trajectory integrate(const ModelSpec& model, const Eigen::VectorXd& p,
                     const InputSource& input, const std::vector<double>& t_eval,
                     const IntegratorOptions& opts = {});

/// Same, but jointly integrates the forward sensitivity system and fills
/// Trajectory::sensitivities.
Trajectory integrate_with_sensitivities(const ModelSpec& model,
                                        const Eigen::VectorXd& p,
                                        const InputSource& input,
                                        const std::vector<double>& t_eval,
                                        const IntegratorOptions& opts = {});

/// L2([a, b]) norm of a scalar quantity given by its pointwise squared
/// value, via composite Simpson quadrature on a uniform grid (grid_points
/// must be odd).
double l2_norm_quadrature(const std::function<double(double)>& squared_value,
                          double a, double b, int grid_points = 2001);

}  // namespace hadesfit
