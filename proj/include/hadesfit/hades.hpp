#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hadesfit/optim.hpp"
#include "hadesfit/signal.hpp"
#include "hadesfit/smoother.hpp"

namespace hadesfit {

/// Configuration of the two-stage alternating estimator. Each outer
/// iteration first continues training the smoothing network on the sampled
/// input signal (Stage 1), then runs a damped Gauss-Newton fit of the model
/// parameters against the smoothed input, warm-started from the previous
/// iterate (Stage 2). The alternation stops when consecutive parameter
/// iterates are closer than `epsilon` in the euclidean norm.
struct HadesConfig {
  double epsilon = 1e-4;         ///< on ||p_n - p_{n-1}||_2
  int max_outer_iterations = 100;
  SmootherNet::Architecture architecture;
  /// Per-outer epoch budget. Because training is cumulative across outer
  /// iterations (total budget max_outer_iterations * stage1.epochs), this
  /// knob sets the pace at which the surrogate sharpens relative to the
  /// parameter fits, and both extremes hurt: a huge budget hands iteration 1
  /// a fully sharp surrogate, losing the smooth-to-sharp progression, while
  /// a tiny budget leaves the surrogate near-constant for many iterations
  /// and a constant drive makes whole parameter directions unidentifiable.
  /// The default is tuned for conditioned (order-one) targets.
  TrainConfig stage1{.epochs = 100};
  LmOptions stage2;

  void validate() const;
};

/// One outer iteration: the Stage-1 objective after training, the parameter
/// iterate after Stage 2, its loss, and the step from the previous iterate.
struct HadesIterationRecord {
  int iteration = 0;  ///< 1-based
  double stage1_mse = 0.0;
  Eigen::VectorXd p;
  double loss = 0.0;
  double step_norm = 0.0;
};

struct HadesTrace {
  std::vector<HadesIterationRecord> records;

  /// CSV with header "iter,stage1_mse,loss,step_norm,<param names>"; the
  /// parameter columns are named p_1..p_D when `param_names` is empty.
  std::string to_csv(const std::vector<std::string>& param_names = {}) const;
};

struct HadesResult {
  FitResult fit;  ///< loss_trace holds one Stage-2 loss per outer iteration
  HadesTrace trace;
  std::optional<SmootherNet> net;  ///< network after the final iteration
};

/// Runs the alternating estimator. The network is seeded deterministically
/// from `seed`, trained cumulatively (optimizer moments persist across outer
/// iterations), and Stage 2 always starts from the previous parameter
/// iterate. If a Stage-2 fit fails to integrate at its start point the run
/// aborts and returns the last successful iterate.
HadesResult run_hades(const ModelSpec& model, const Signal& signal,
                      const Observations& obs, const Eigen::VectorXd& p0,
                      const HadesConfig& cfg, std::uint64_t seed);

}  // namespace hadesfit
