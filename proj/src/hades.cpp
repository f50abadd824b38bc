#include "hadesfit/hades.hpp"

#include <chrono>
#include <stdexcept>

#include "hadesfit/common.hpp"

namespace hadesfit {

void HadesConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (max_outer_iterations < 1)
    throw std::invalid_argument("max_outer_iterations must be >= 1");
  architecture.validate();
  stage1.validate();
}

std::string HadesTrace::to_csv(
    const std::vector<std::string>& param_names) const {
  std::string out = "iter,stage1_mse,loss,step_norm";
  const Eigen::Index dim = records.empty() ? 0 : records.front().p.size();
  for (Eigen::Index i = 0; i < dim; ++i) {
    out += ',';
    if (static_cast<std::size_t>(i) < param_names.size())
      out += param_names[static_cast<std::size_t>(i)];
    else
      out += "p_" + std::to_string(i + 1);
  }
  out += '\n';
  for (const HadesIterationRecord& rec : records) {
    out += std::to_string(rec.iteration);
    out += ',' + format_double(rec.stage1_mse);
    out += ',' + format_double(rec.loss);
    out += ',' + format_double(rec.step_norm);
    for (Eigen::Index i = 0; i < rec.p.size(); ++i)
      out += ',' + format_double(rec.p[i]);
    out += '\n';
  }
  return out;
}

HadesResult run_hades(const ModelSpec& model, const Signal& signal,
                      const Observations& obs, const Eigen::VectorXd& p0,
                      const HadesConfig& cfg, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  model.validate();
  signal.validate();
  obs.validate(model.state_dim);
  if (p0.size() != model.param_dim)
    throw std::invalid_argument("p0 has wrong dimension");

  SmootherNet net(cfg.architecture, signal.times.front(), signal.domain_end);
  {
    Rng rng(derive_seed(seed, "net_init"));
    net.initialize(rng, signal_mean(signal), signal_std(signal));
  }
  AdamState adam;

  HadesResult res;
  Eigen::VectorXd p_prev = p0;
  double loss_prev = kLossSentinel;
  Termination term = Termination::kMaxIterations;
  int outer = 0;

  for (outer = 1; outer <= cfg.max_outer_iterations; ++outer) {
    train_stage1(net, signal, cfg.stage1, adam);
    const double mse = net.mse(signal);

    const InputSource input = InputSource::smooth(net);
    const FitResult fit = fit_lm(model, input, obs, p_prev, cfg.stage2);
    if (fit.termination == Termination::kIntegrationFailure) {
      // The warm start cannot even be evaluated against the new smoothed
      // input; keep the last iterate that could.
      term = Termination::kIntegrationFailure;
      --outer;
      break;
    }

    const double step_norm = (fit.p_hat - p_prev).norm();
    res.trace.records.push_back(
        {outer, mse, fit.p_hat, fit.loss_final, step_norm});
    res.fit.loss_trace.push_back(fit.loss_final);
    p_prev = fit.p_hat;
    loss_prev = fit.loss_final;

    if (step_norm <= cfg.epsilon) {
      term = Termination::kConverged;
      break;
    }
  }
  if (outer > cfg.max_outer_iterations) outer = cfg.max_outer_iterations;

  res.fit.p_hat = p_prev;
  res.fit.loss_final = loss_prev;
  res.fit.n_iterations = outer;
  res.fit.termination = term;
  res.fit.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  res.net = std::move(net);
  return res;
}

}  // namespace hadesfit
