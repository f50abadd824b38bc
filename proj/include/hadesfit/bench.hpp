#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hadesfit/hades.hpp"
#include "hadesfit/models.hpp"
#include "hadesfit/optim.hpp"
#include "hadesfit/signal.hpp"

namespace hadesfit {

/// Raised for malformed or inconsistent experiment configuration; the
/// message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class OptimizerId {
  kHades,
  kLm,
  kNelderMead,
  kDifferentialEvolution,
  kLbfgs,
};
OptimizerId optimizer_from_string(const std::string& name);
std::string to_string(OptimizerId id);

/// Declarative signal source. `kind` selects which of the remaining fields
/// apply: "markov" (chain + horizon), "smooth_cosine" (horizon + step),
/// "constant" (value + horizon), "csv" (path [+ domain_end]), or
/// "light_schedule" (light profile; horizon derived from days).
struct SignalConfig {
  std::string kind = "markov";
  double horizon = 20.0;
  double step = 0.1;
  /// Defaults to the benchmark two-state chain: values {0, 1}, stay
  /// probability 0.95, started in the high state.
  MarkovChainSpec markov{{0.0, 1.0}, {{0.95, 0.05}, {0.05, 0.95}}, 0.1, 1};
  double value = 1.0;
  std::string path;
  std::optional<double> csv_domain_end;
  LightScheduleConfig light;

  void validate() const;
};

/// Builds the configured signal; randomness (markov draw, schedule jitter)
/// comes from `seed` only.
Signal build_signal(const SignalConfig& cfg, std::uint64_t seed);

/// One experiment: which model, which drive, how observations are made, and
/// which optimizer runs how many seeded trials.
struct ExperimentConfig {
  std::string model = "lv";
  SignalConfig signal;
  Eigen::VectorXd p_true;
  int n_samples = 10;
  double noise_sigma = 0.0;
  std::vector<int> observed_components;  ///< empty = all state components
  OptimizerId optimizer = OptimizerId::kLm;
  int trials = 1;
  double init_lo = 0.25;  ///< initial guesses log-uniform in [lo*p, hi*p]
  double init_hi = 4.0;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  std::optional<Eigen::VectorXd> force_p0;  ///< overrides the random draw
  unsigned threads = 0;                     ///< 0 = hardware concurrency
  HadesConfig hades;
  LmOptions lm;
  NelderMeadOptions nelder_mead;
  DifferentialEvolutionOptions de;
  LbfgsOptions lbfgs;
  IntegratorOptions integrator;

  /// Parses the documented JSON schema; missing or ill-typed fields raise
  /// ConfigError naming the field.
  static ExperimentConfig from_json(const std::string& text);
  void validate() const;
};

/// Integrates the model at `p_true` against the raw signal and samples
/// `n_samples` uniformly spaced times T*j/n_samples, j = 1..n_samples,
/// adding i.i.d. Gaussian noise of s.d. `noise_sigma` (row-major draw
/// order). Components defaults to all states when empty. Integration
/// failure at p_true is a ConfigError.
Observations generate_observations(const ModelSpec& model,
                                   const Eigen::VectorXd& p_true,
                                   const Signal& signal, int n_samples,
                                   double noise_sigma,
                                   const std::vector<int>& components,
                                   std::uint64_t seed,
                                   const IntegratorOptions& opts = {});

struct TrialRow {
  int trial = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd p0;
  Eigen::VectorXd p_hat;
  double loss_final = 0.0;
  /// Loss of p_hat against the raw signal; differs from loss_final only for
  /// optimizers that fit against a surrogate input.
  double loss_true_signal = 0.0;
  int n_iterations = 0;
  Termination termination = Termination::kMaxIterations;
  double mape = 0.0;
  /// Study-level classification: converged termination AND final loss
  /// within 10x of the best trial's.
  bool converged_class = false;
  double wall_time_seconds = 0.0;
  std::optional<HadesTrace> hades_trace;
};

struct StudyReport {
  std::vector<TrialRow> rows;
  Eigen::VectorXd p_true;
  std::vector<std::string> param_names;
  std::string model;
  OptimizerId optimizer = OptimizerId::kLm;
  double mape_median = 0.0;
  double mape_mean = 0.0;
  double mape_q1 = 0.0;
  double mape_q3 = 0.0;
  double convergence_fraction = 0.0;
  /// Per-parameter quartiles of p_hat / p_true across trials.
  Eigen::VectorXd normalized_median, normalized_q1, normalized_q3;

  /// Per-trial CSV; wall_time_seconds is deliberately the last column so
  /// deterministic comparisons can strip it.
  std::string report_csv() const;
  std::string summary_json() const;
};

/// Runs `cfg.trials` independent seeded trials of the configured optimizer
/// and aggregates them. Individual trial failures land in their row; the
/// study itself only fails on configuration errors.
StudyReport run_study(const ExperimentConfig& cfg);

/// Linear-interpolation quantile (the common statistical default) of an
/// unsorted sample; q in [0, 1].
double quantile(std::vector<double> values, double q);

struct LandscapeAxis {
  int param_index = 0;
  Eigen::VectorXd grid;
};

/// Loss over the Cartesian product of the two axis grids with all other
/// parameters held at p_fixed; integration failures yield the loss
/// sentinel. Result is axis1 x axis2 (rows x columns).
Eigen::MatrixXd loss_landscape(const ModelSpec& model, const InputSource& input,
                               const Observations& obs,
                               const LandscapeAxis& axis1,
                               const LandscapeAxis& axis2,
                               const Eigen::VectorXd& p_fixed,
                               const IntegratorOptions& opts = {},
                               unsigned threads = 1);

/// CSV with an axis2 header row and axis1-led rows; the corner cell names
/// both parameters as "<axis1>\<axis2>".
std::string landscape_csv(const Eigen::MatrixXd& grid,
                          const LandscapeAxis& axis1,
                          const LandscapeAxis& axis2,
                          const std::vector<std::string>& param_names);

/// Mean of |g[i-1][j] - 2 g[i][j] + g[i+1][j]| over both grid directions —
/// the roughness statistic used to contrast smooth and held inputs.
double mean_abs_second_difference(const Eigen::MatrixXd& grid);

struct GronwallRow {
  double epsilon = 0.0;
  double input_l2 = 0.0;  ///< ||S1 - S2|| over [0, T]
  double state_l2 = 0.0;  ///< ||y1 - y2|| over [0, T]
  double ratio = 0.0;
  bool defined = false;  ///< false when both norms vanish (epsilon = 0)
};

/// Perturbs the signal values by one fixed uniform noise pattern scaled to
/// each amplitude in `scales`, integrates the nominal and perturbed systems,
/// and reports continuous L2 norms (composite Simpson, 2001-point grid) and
/// their ratio.
std::vector<GronwallRow> gronwall_study(const ModelSpec& model,
                                        const Eigen::VectorXd& p,
                                        const Signal& signal,
                                        const std::vector<double>& scales,
                                        std::uint64_t seed,
                                        const IntegratorOptions& opts = {});

std::string gronwall_csv(const std::vector<GronwallRow>& table);

/// Entry point behind the command-line binary: subcommands gen-signal,
/// gen-obs, fit, study, landscape, gronwall, and smooth, each driven by a
/// JSON config. Returns 0 on success, 1 on configuration errors, 2 on
/// runtime failures.
int cli_main(int argc, const char* const* argv);

}  // namespace hadesfit
