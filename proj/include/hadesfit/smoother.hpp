#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hadesfit/common.hpp"
#include "hadesfit/signal.hpp"

namespace hadesfit {

/// Exponential linear unit: x for x > 0, exp(x) - 1 otherwise.
double elu(double x);
/// Derivative of elu: 1 for x > 0, exp(x) otherwise (continuous at 0).
double elu_derivative(double x);

/// Smooth surrogate for a sampled drive: a bank of cosine features (with
/// trainable frequency, phase and amplitude) followed by dense ELU layers
/// and a linear output. The result is infinitely differentiable in t, so it
/// can replace a piecewise-constant signal inside gradient-based fitting.
///
/// Time is normalized affinely from [time_begin, time_end] onto [-1, 1]
/// before entering the cosine bank; evaluation remains defined for every
/// real t. The raw network output is conditioned as
/// `shift + scale * raw(t)`: adaptive-moment updates move each weight by
/// roughly the learning rate per epoch regardless of gradient magnitude, so
/// without the affine target map a drive spanning hundreds of units (a lux
/// schedule, say) would need tens of thousands of epochs just to grow the
/// output amplitude.
class SmootherNet {
 public:
  struct Architecture {
    int cosine_units = 16;
    int hidden_layers = 5;
    int hidden_units = 16;

    void validate() const;
  };

  SmootherNet(Architecture arch, double time_begin, double time_end);

  /// Random initialization: frequencies log-spaced so the bank spans one
  /// slow oscillation per domain up to 16 of them, phases uniform in
  /// [0, 2*pi), dense weights uniform in +-1/sqrt(fan_in). The target's
  /// level and spread become the output conditioning (`target_scale` <= 0
  /// falls back to 1), so training starts from the signal's mean and fits
  /// order-one quantities.
  void initialize(Rng& rng, double target_mean, double target_scale = 1.0);

  double target_shift() const { return target_shift_; }
  double target_scale() const { return target_scale_; }

  double forward(double t) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& times) const;

  /// Mean-square distance between the network output and the signal's
  /// samples (the Stage-1 objective).
  double mse(const Signal& target) const;
  /// Same objective plus its gradient with respect to all parameters.
  double mse_gradient(const Signal& target, Eigen::VectorXd& grad) const;

  /// Flat parameter vector, ordered: omega, phi, scale, then per hidden
  /// layer the (column-major) weight matrix and bias, then output weights
  /// and output bias.
  const Eigen::VectorXd& parameters() const { return params_; }
  void set_parameters(const Eigen::VectorXd& p);
  Eigen::Index parameter_count() const { return params_.size(); }

  const Architecture& architecture() const { return arch_; }
  double time_begin() const { return time_begin_; }
  double time_end() const { return time_end_; }

  /// JSON checkpoint (architecture + time domain + parameters); loading
  /// reproduces forward outputs exactly.
  std::string to_json() const;
  static SmootherNet from_json(const std::string& text);

 private:
  friend struct SmootherBackprop;

  double normalize_time(double t) const {
    return -1.0 + 2.0 * (t - time_begin_) / (time_end_ - time_begin_);
  }

  // Flat-layout offsets.
  Eigen::Index omega_offset() const { return 0; }
  Eigen::Index phi_offset() const { return arch_.cosine_units; }
  Eigen::Index scale_offset() const { return 2 * arch_.cosine_units; }
  Eigen::Index layer_weight_offset(int layer) const;
  Eigen::Index layer_bias_offset(int layer) const;
  Eigen::Index output_weight_offset() const;
  Eigen::Index output_bias_offset() const;
  int layer_input_dim(int layer) const {
    return layer == 0 ? arch_.cosine_units : arch_.hidden_units;
  }

  Architecture arch_;
  double time_begin_ = 0.0;
  double time_end_ = 1.0;
  double target_shift_ = 0.0;
  double target_scale_ = 1.0;
  Eigen::VectorXd params_;
};

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;

  void validate() const;
};

/// Adam moment estimates carried across training calls; reused moments keep
/// cumulative training warm instead of restarting the optimizer.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

/// Raised when the Stage-1 objective stops being finite.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(int epoch, double loss);
  int epoch;
  double loss;
};

/// Full-batch Adam on the mean-square objective. The net is updated in
/// place; the per-epoch objective values (evaluated before each update) are
/// returned. The overload with AdamState continues a previous run's
/// optimizer moments.
std::vector<double> train_stage1(SmootherNet& net, const Signal& signal,
                                 const TrainConfig& cfg);
std::vector<double> train_stage1(SmootherNet& net, const Signal& signal,
                                 const TrainConfig& cfg, AdamState& state);

/// Max relative error between the analytic parameter gradient and central
/// finite differences (step 1e-5), with denominator max(|g_i|, 1e-8).
double analytic_gradient_check(const SmootherNet& net, const Signal& signal);

}  // namespace hadesfit
