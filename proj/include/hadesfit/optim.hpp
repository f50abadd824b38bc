#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hadesfit/odecore.hpp"

namespace hadesfit {

/// Observed state components at sample times. `values` holds one column per
/// entry of `observed_components` (state indices); unobserved components are
/// excluded from the loss entirely.
struct Observations {
  Eigen::VectorXd times;               ///< strictly increasing, in (0, T]
  Eigen::MatrixXd values;              ///< times.size() x observed count
  std::vector<int> observed_components;

  void validate(int state_dim) const;
};

/// Loss value reported when integration fails inside an optimizer: large,
/// finite, and orders of magnitude above any physical residual.
inline constexpr double kLossSentinel = 1e12;

struct LossValue {
  double value = 0.0;
  bool integration_failed = false;
};

/// Root-mean-square misfit
///   loss = sqrt( (1/N) * sum_j sum_i (y_obs[j,i] - y[j,i])^2 ),
/// N = total number of scalar observations. Integration failure maps to the
/// sentinel with the flag set.
LossValue loss_checked(const ModelSpec& model, const Eigen::VectorXd& p,
                       const InputSource& input, const Observations& obs,
                       const IntegratorOptions& opts = {});
double loss(const ModelSpec& model, const Eigen::VectorXd& p,
            const InputSource& input, const Observations& obs,
            const IntegratorOptions& opts = {});

/// Gradient of the loss with respect to p computed from the forward
/// sensitivities: d loss / dp = J^T r / ||r||, where r is the scaled
/// residual vector and J its jacobian.
Eigen::VectorXd loss_gradient(const ModelSpec& model, const Eigen::VectorXd& p,
                              const InputSource& input, const Observations& obs,
                              const IntegratorOptions& opts = {});

enum class Termination {
  kConverged,
  kMaxIterations,
  kIntegrationFailure,
};
std::string to_string(Termination t);

struct FitResult {
  Eigen::VectorXd p_hat;
  double loss_final = 0.0;
  std::vector<double> loss_trace;  ///< accepted objective values, first = at p0
  int n_iterations = 0;
  Termination termination = Termination::kMaxIterations;
  double wall_time_seconds = 0.0;

  /// {p_hat, loss_final, n_iterations, termination, seed, wall_time}.
  std::string to_json(std::uint64_t seed) const;
};

// ---------------------------------------------------------------------------
// Levenberg-Marquardt with analytic sensitivity jacobians
// ---------------------------------------------------------------------------

struct LmOptions {
  double lambda0 = 1e-3;
  double lambda_decrease = 0.5;  ///< applied after an accepted step
  double lambda_increase = 4.0;  ///< applied after a rejected step
  double lambda_max = 1e14;
  double grad_tol = 1e-8;   ///< on ||J^T r|| / ||r||
  double step_tol = 1e-10;  ///< on the accepted step norm
  double loss_floor = 1e-14;  ///< residuals at numerical zero count as converged
  int max_iterations = 200;
  bool positivity_clamp = true;  ///< clamp parameters marked positive at 1e-12
  IntegratorOptions integrator;
};

/// Damped Gauss-Newton iteration on the scaled residuals; the jacobian comes
/// from forward sensitivities, so a smooth input yields exact derivatives.
/// A piecewise-constant input is allowed but gives the rugged objective such
/// inputs are known for; convergence is then not promised.
FitResult fit_lm(const ModelSpec& model, const InputSource& input,
                 const Observations& obs, const Eigen::VectorXd& p0,
                 const LmOptions& opts = {});

// ---------------------------------------------------------------------------
// Derivative-free and finite-difference baselines
// ---------------------------------------------------------------------------

struct NelderMeadOptions {
  int max_evaluations = 2000;
  double xatol = 1e-8;
  double fatol = 1e-12;
  double initial_scale = 0.05;  ///< relative simplex extent around x0
  IntegratorOptions integrator;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = 0.0;
  std::vector<double> best_trace;
  int n_iterations = 0;
  int n_evaluations = 0;
  bool converged = false;
};

/// Downhill simplex with dimension-adaptive expansion/contraction
/// coefficients; convergence when the simplex collapses in both x and f.
NelderMeadResult nelder_mead_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& x0, const NelderMeadOptions& opts = {});

FitResult fit_nelder_mead(const ModelSpec& model, const InputSource& input,
                          const Observations& obs, const Eigen::VectorXd& p0,
                          const NelderMeadOptions& opts = {});

struct DifferentialEvolutionOptions {
  double weight = 0.8;      ///< differential weight F
  double crossover = 0.9;   ///< crossover probability CR
  int population_multiplier = 15;  ///< population = multiplier * dimension
  int max_generations = 200;
  double tol = 0.01;  ///< converged when std(f) <= tol * |mean(f)|
  std::uint64_t seed = 0;
  IntegratorOptions integrator;
};

struct DifferentialEvolutionResult {
  Eigen::VectorXd x;
  double f = 0.0;
  std::vector<double> best_trace;
  int n_generations = 0;
  bool converged = false;
};

/// rand/1/bin differential evolution inside a box.
DifferentialEvolutionResult differential_evolution_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
    const DifferentialEvolutionOptions& opts);

FitResult fit_differential_evolution(const ModelSpec& model,
                                     const InputSource& input,
                                     const Observations& obs,
                                     const Eigen::VectorXd& lower,
                                     const Eigen::VectorXd& upper,
                                     const DifferentialEvolutionOptions& opts);

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 200;
  double grad_tol = 1e-8;
  double step_tol = 1e-10;
  double fd_step_rel = 1e-6;  ///< central-difference step, relative
  int max_backtracks = 30;
  IntegratorOptions integrator;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  std::vector<double> best_trace;
  int n_iterations = 0;
  bool converged = false;
};

/// Limited-memory BFGS with central finite-difference gradients and a
/// backtracking Armijo line search.
LbfgsResult lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& x0, const LbfgsOptions& opts = {});

FitResult fit_lbfgs_fd(const ModelSpec& model, const InputSource& input,
                       const Observations& obs, const Eigen::VectorXd& p0,
                       const LbfgsOptions& opts = {});

/// Mean absolute percentage error, (100/D) * sum_i |ph_i - pt_i| / |pt_i|.
/// Zero true components are a domain error.
double mape(const Eigen::VectorXd& p_hat, const Eigen::VectorXd& p_true);

}  // namespace hadesfit
