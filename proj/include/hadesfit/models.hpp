#pragma once

#include <map>
#include <string>
#include <vector>

#include "hadesfit/odecore.hpp"

namespace hadesfit {

/// Signal-driven Lotka-Volterra benchmark: the external drive multiplies the
/// prey birth term,
///   dy1/dt = p1*s*y1 - p3*y1*y2
///   dy2/dt = -p2*y2 + p4*y1*y2
/// with y(0) = (1, 1). Parameters (p1, p2, p3, p4) are all positive.
ModelSpec make_lotka_volterra();

/// Benchmark truth used throughout the studies: (2, 1/2, 1, 1).
Eigen::VectorXd lotka_volterra_reference_params();

/// Fixed constants of the light-driven circadian pacemaker; estimation only
/// targets (tau_c, gamma, G, k).
struct CircadianConstants {
  double alpha0 = 0.16;   ///< light conversion scale
  double b = 0.4;         ///< light modulation coefficient
  double i0 = 9500.0;     ///< reference illuminance (lux)
  double p = 0.6;         ///< light conversion exponent
  double kappa = 12.0 / M_PI;
  double f = 0.99669;     ///< period scaling factor
  double beta = 0.0075;   ///< processing decay rate (1/min)
};

/// Higher-order limit-cycle oscillator driven by light (in lux, clamped at
/// zero). States: (y1, y2, n) = oscillator pair + light processing level;
/// time in hours. Estimated parameters: (tau_c, gamma, G, k).
ModelSpec make_circadian(const CircadianConstants& constants = {});

/// Benchmark truth used throughout the studies:
/// tau_c = 20, gamma = 0.23, G = 20, k = 0.55.
Eigen::VectorXd circadian_reference_params();

/// Write-once name -> ModelSpec table. Registration runs the jacobian
/// self-test and rejects models whose analytic partials disagree with finite
/// differences, naming the offending entry.
class ModelRegistry {
 public:
  void register_model(const std::string& name, ModelSpec spec,
                      const JacobianCheckDomain& domain = {});
  const ModelSpec& resolve(const std::string& name) const;
  std::vector<std::string> names() const;

  /// Registry preloaded with the built-in models "lv" and "circadian".
  static const ModelRegistry& builtin();

 private:
  std::map<std::string, ModelSpec> models_;
};

}  // namespace hadesfit
