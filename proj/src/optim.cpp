#include "hadesfit/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>

#include <Eigen/Cholesky>

#include "hadesfit/common.hpp"

namespace hadesfit {

void Observations::validate(int state_dim) const {
  if (times.size() == 0) throw std::invalid_argument("observations are empty");
  if (!(times[0] >= 0.0))
    throw std::invalid_argument("observation times must be >= 0");
  for (Eigen::Index i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument(
          "observation times must be strictly increasing");
  }
  if (observed_components.empty())
    throw std::invalid_argument("no observed components");
  for (std::size_t i = 0; i < observed_components.size(); ++i) {
    const int c = observed_components[i];
    if (c < 0 || c >= state_dim)
      throw std::invalid_argument("observed component index out of range");
    for (std::size_t j = i + 1; j < observed_components.size(); ++j)
      if (observed_components[j] == c)
        throw std::invalid_argument("observed component listed twice");
  }
  if (values.rows() != times.size() ||
      values.cols() != static_cast<Eigen::Index>(observed_components.size()))
    throw std::invalid_argument("observation value matrix has wrong shape");
}

namespace {

/// Scaled residual bookkeeping shared by the loss and the optimizers.
/// Residuals carry a 1/sqrt(N) factor so that ||r||_2 equals the loss.
struct ResidualProblem {
  const ModelSpec& model;
  const InputSource& input;
  const Observations& obs;
  IntegratorOptions integrator;
  std::vector<double> t_eval;
  Eigen::Index n_rows;
  double inv_sqrt_n;

  ResidualProblem(const ModelSpec& model_arg, const InputSource& input_arg,
                  const Observations& obs_arg, const IntegratorOptions& opts)
      : model(model_arg), input(input_arg), obs(obs_arg), integrator(opts) {
    model.validate();
    obs.validate(model.state_dim);
    t_eval.assign(obs.times.data(), obs.times.data() + obs.times.size());
    n_rows = obs.values.size();
    inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n_rows));
  }

  bool residual(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
    Trajectory traj;
    try {
      traj = integrate(model, p, input, t_eval, integrator);
    } catch (const IntegrationError&) {
      return false;
    }
    const auto k = static_cast<Eigen::Index>(obs.observed_components.size());
    r.resize(n_rows);
    for (Eigen::Index j = 0; j < obs.times.size(); ++j) {
      for (Eigen::Index c = 0; c < k; ++c) {
        const int comp = obs.observed_components[static_cast<std::size_t>(c)];
        r[j * k + c] = (traj.states(j, comp) - obs.values(j, c)) * inv_sqrt_n;
      }
    }
    return true;
  }

  bool residual_jacobian(const Eigen::VectorXd& p, Eigen::VectorXd& r,
                         Eigen::MatrixXd& jac) const {
    Trajectory traj;
    try {
      traj = integrate_with_sensitivities(model, p, input, t_eval, integrator);
    } catch (const IntegrationError&) {
      return false;
    }
    const auto k = static_cast<Eigen::Index>(obs.observed_components.size());
    r.resize(n_rows);
    jac.resize(n_rows, model.param_dim);
    for (Eigen::Index j = 0; j < obs.times.size(); ++j) {
      const auto& z = traj.sensitivities[static_cast<std::size_t>(j)];
      for (Eigen::Index c = 0; c < k; ++c) {
        const int comp = obs.observed_components[static_cast<std::size_t>(c)];
        r[j * k + c] = (traj.states(j, comp) - obs.values(j, c)) * inv_sqrt_n;
        for (int m = 0; m < model.param_dim; ++m)
          jac(j * k + c, m) = z(comp, m) * inv_sqrt_n;
      }
    }
    return true;
  }
};

double elapsed_seconds(
    const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

}  // namespace

LossValue loss_checked(const ModelSpec& model, const Eigen::VectorXd& p,
                       const InputSource& input, const Observations& obs,
                       const IntegratorOptions& opts) {
  const ResidualProblem prob(model, input, obs, opts);
  Eigen::VectorXd r;
  if (!prob.residual(p, r)) return {kLossSentinel, true};
  return {r.norm(), false};
}

double loss(const ModelSpec& model, const Eigen::VectorXd& p,
            const InputSource& input, const Observations& obs,
            const IntegratorOptions& opts) {
  return loss_checked(model, p, input, obs, opts).value;
}

Eigen::VectorXd loss_gradient(const ModelSpec& model, const Eigen::VectorXd& p,
                              const InputSource& input, const Observations& obs,
                              const IntegratorOptions& opts) {
  const ResidualProblem prob(model, input, obs, opts);
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  if (!prob.residual_jacobian(p, r, jac))
    throw IntegrationError(0.0, "loss gradient requested at infeasible p");
  const double rnorm = r.norm();
  if (rnorm == 0.0) return Eigen::VectorXd::Zero(model.param_dim);
  return jac.transpose() * r / rnorm;
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kConverged:
      return "converged";
    case Termination::kMaxIterations:
      return "max_iterations";
    case Termination::kIntegrationFailure:
      return "integration_failure";
  }
  return "unknown";
}

std::string FitResult::to_json(std::uint64_t seed) const {
  std::string out = "{\n  \"p_hat\": [";
  for (Eigen::Index i = 0; i < p_hat.size(); ++i) {
    if (i) out += ", ";
    out += format_double(p_hat[i]);
  }
  out += "],\n  \"loss_final\": " + format_double(loss_final);
  out += ",\n  \"n_iterations\": " + std::to_string(n_iterations);
  out += ",\n  \"termination\": \"" + to_string(termination) + "\"";
  out += ",\n  \"seed\": " + std::to_string(seed);
  out += ",\n  \"wall_time_seconds\": " + format_double(wall_time_seconds);
  out += "\n}\n";
  return out;
}

// ===========================================================================
// Levenberg-Marquardt
// ===========================================================================

namespace {

Eigen::VectorXd clamp_positive(const ModelSpec& model, Eigen::VectorXd p,
                               bool enabled) {
  if (!enabled || model.param_positive.empty()) return p;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (model.param_positive[static_cast<std::size_t>(i)])
      p[i] = std::max(p[i], 1e-12);
  return p;
}

}  // namespace

FitResult fit_lm(const ModelSpec& model, const InputSource& input,
                 const Observations& obs, const Eigen::VectorXd& p0,
                 const LmOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const ResidualProblem prob(model, input, obs, opts.integrator);
  if (p0.size() != model.param_dim)
    throw std::invalid_argument("p0 has wrong dimension");

  FitResult res;
  Eigen::VectorXd p = clamp_positive(model, p0, opts.positivity_clamp);

  Eigen::VectorXd r;
  if (!prob.residual(p, r)) {
    res.p_hat = p;
    res.loss_final = kLossSentinel;
    res.termination = Termination::kIntegrationFailure;
    res.wall_time_seconds = elapsed_seconds(start);
    return res;
  }
  double current = r.norm();
  res.loss_trace.push_back(current);

  Termination term = Termination::kMaxIterations;
  double lambda = opts.lambda0;
  int completed = 0;
  Eigen::MatrixXd jac;
  // Squared Jacobian column norms, accumulated as a running maximum. Damping
  // with the historic maximum instead of the current diagonal keeps a
  // parameter on a short leash even where its local sensitivity collapses
  // (e.g. a rate whose species has temporarily died out), which is where
  // undamped steps would otherwise shoot off.
  Eigen::VectorXd scale2;

  if (current <= opts.loss_floor) term = Termination::kConverged;

  while (term != Termination::kConverged && completed < opts.max_iterations) {
    ++completed;
    if (!prob.residual_jacobian(p, r, jac)) {
      // The accepted iterate integrates (its loss was computed from a plain
      // run) but the augmented system does not; without a jacobian the
      // iteration cannot continue.
      if (completed == 1 && res.loss_trace.size() == 1)
        term = Termination::kIntegrationFailure;
      break;
    }
    const Eigen::VectorXd g = jac.transpose() * r;
    const double rnorm = r.norm();
    if (rnorm > 0.0 && g.norm() / rnorm <= opts.grad_tol) {
      term = Termination::kConverged;
      break;
    }

    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    scale2 = scale2.size() == 0 ? jtj.diagonal().eval()
                                : scale2.cwiseMax(jtj.diagonal()).eval();
    Eigen::VectorXd damping = scale2;
    const double dmax = std::max(damping.maxCoeff(), 1.0);
    for (Eigen::Index i = 0; i < damping.size(); ++i)
      damping[i] = std::max(damping[i], 1e-12 * dmax);

    bool stepped = false;
    while (true) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * damping;
      const Eigen::VectorXd delta = a.ldlt().solve(-g);
      if (delta.allFinite()) {
        const Eigen::VectorXd trial =
            clamp_positive(model, p + delta, opts.positivity_clamp);
        Eigen::VectorXd r_trial;
        if (prob.residual(trial, r_trial)) {
          const double candidate = r_trial.norm();
          if (candidate < current) {
            p = trial;
            current = candidate;
            res.loss_trace.push_back(current);
            lambda = std::max(lambda * opts.lambda_decrease, 1e-12);
            if (delta.norm() <= opts.step_tol || current <= opts.loss_floor)
              term = Termination::kConverged;
            stepped = true;
            break;
          }
        }
      }
      lambda *= opts.lambda_increase;
      if (lambda > opts.lambda_max) break;
    }
    if (!stepped) break;  // no descent direction left at this damping range
  }

  res.p_hat = p;
  res.loss_final = current;
  res.n_iterations = completed;
  res.termination = term;
  res.wall_time_seconds = elapsed_seconds(start);
  return res;
}

// ===========================================================================
// Nelder-Mead (dimension-adaptive coefficients)
// ===========================================================================

NelderMeadResult nelder_mead_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& x0, const NelderMeadOptions& opts) {
  const Eigen::Index n = x0.size();
  if (n < 1) throw std::invalid_argument("empty start point");
  const double nd = static_cast<double>(n);
  const double alpha = 1.0;
  const double beta = 1.0 + 2.0 / nd;   // expansion
  const double gamma = 0.75 - 1.0 / (2.0 * nd);  // contraction
  const double delta = 1.0 - 1.0 / nd;  // shrink

  NelderMeadResult res;
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    return objective(x);
  };

  std::vector<Eigen::VectorXd> xs(static_cast<std::size_t>(n) + 1);
  std::vector<double> fs(static_cast<std::size_t>(n) + 1);
  xs[0] = x0;
  fs[0] = eval(x0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x = x0;
    x[i] += x0[i] != 0.0 ? opts.initial_scale * std::abs(x0[i])
                         : opts.initial_scale * 0.005;
    xs[static_cast<std::size_t>(i) + 1] = std::move(x);
    fs[static_cast<std::size_t>(i) + 1] =
        eval(xs[static_cast<std::size_t>(i) + 1]);
  }

  std::vector<std::size_t> order(xs.size());
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    std::vector<Eigen::VectorXd> xs2(xs.size());
    std::vector<double> fs2(fs.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      xs2[i] = std::move(xs[order[i]]);
      fs2[i] = fs[order[i]];
    }
    xs = std::move(xs2);
    fs = std::move(fs2);
  };
  sort_simplex();

  bool converged = false;
  while (evals < opts.max_evaluations) {
    // Convergence: simplex collapsed in both coordinates and values.
    double max_dx = 0.0, max_df = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
      max_dx = std::max(max_dx, (xs[i] - xs[0]).cwiseAbs().maxCoeff());
      max_df = std::max(max_df, std::abs(fs[i] - fs[0]));
    }
    if (max_dx <= opts.xatol && max_df <= opts.fatol) {
      converged = true;
      break;
    }

    ++res.n_iterations;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) centroid += xs[i];
    centroid /= nd;

    const Eigen::VectorXd& worst = xs.back();
    const Eigen::VectorXd xr = centroid + alpha * (centroid - worst);
    const double fr = eval(xr);

    if (fr < fs[0]) {
      const Eigen::VectorXd xe = centroid + beta * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        xs.back() = xe;
        fs.back() = fe;
      } else {
        xs.back() = xr;
        fs.back() = fr;
      }
    } else if (fr < fs[fs.size() - 2]) {
      xs.back() = xr;
      fs.back() = fr;
    } else if (fr < fs.back()) {
      const Eigen::VectorXd xc = centroid + gamma * (xr - centroid);
      const double fc = eval(xc);
      if (fc <= fr) {
        xs.back() = xc;
        fs.back() = fc;
      } else {
        for (std::size_t i = 1; i < xs.size(); ++i) {
          xs[i] = xs[0] + delta * (xs[i] - xs[0]);
          fs[i] = eval(xs[i]);
        }
      }
    } else {
      const Eigen::VectorXd xc = centroid - gamma * (centroid - worst);
      const double fc = eval(xc);
      if (fc < fs.back()) {
        xs.back() = xc;
        fs.back() = fc;
      } else {
        for (std::size_t i = 1; i < xs.size(); ++i) {
          xs[i] = xs[0] + delta * (xs[i] - xs[0]);
          fs[i] = eval(xs[i]);
        }
      }
    }
    sort_simplex();
    res.best_trace.push_back(fs[0]);
  }

  res.x = xs[0];
  res.f = fs[0];
  res.n_evaluations = evals;
  res.converged = converged;
  return res;
}

FitResult fit_nelder_mead(const ModelSpec& model, const InputSource& input,
                          const Observations& obs, const Eigen::VectorXd& p0,
                          const NelderMeadOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const ResidualProblem prob(model, input, obs, opts.integrator);
  if (p0.size() != model.param_dim)
    throw std::invalid_argument("p0 has wrong dimension");
  Eigen::VectorXd r;
  auto objective = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd rr;
    return prob.residual(p, rr) ? rr.norm() : kLossSentinel;
  };
  const NelderMeadResult nm = nelder_mead_minimize(objective, p0, opts);

  FitResult res;
  res.p_hat = nm.x;
  res.loss_final = nm.f;
  res.loss_trace = nm.best_trace;
  res.n_iterations = nm.n_iterations;
  res.termination =
      nm.converged ? Termination::kConverged : Termination::kMaxIterations;
  res.wall_time_seconds = elapsed_seconds(start);
  return res;
}

// ===========================================================================
// Differential evolution (rand/1/bin)
// ===========================================================================

DifferentialEvolutionResult differential_evolution_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
    const DifferentialEvolutionOptions& opts) {
  const Eigen::Index dim = lower.size();
  if (dim < 1 || upper.size() != dim)
    throw std::invalid_argument("differential evolution bounds mismatch");
  for (Eigen::Index i = 0; i < dim; ++i)
    if (!(lower[i] < upper[i]))
      throw std::invalid_argument("differential evolution bounds must satisfy lower < upper");

  const std::size_t pop =
      std::max<std::size_t>(5, static_cast<std::size_t>(opts.population_multiplier) *
                                   static_cast<std::size_t>(dim));
  Rng rng(opts.seed);

  std::vector<Eigen::VectorXd> xs(pop, Eigen::VectorXd(dim));
  std::vector<double> fs(pop);
  for (std::size_t i = 0; i < pop; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j)
      xs[i][j] = rng.uniform(lower[j], upper[j]);
    fs[i] = objective(xs[i]);
  }

  DifferentialEvolutionResult res;
  auto best_index = [&] {
    return static_cast<std::size_t>(
        std::min_element(fs.begin(), fs.end()) - fs.begin());
  };

  Eigen::VectorXd mutant(dim), trial(dim);
  bool converged = false;
  int gen = 0;
  for (gen = 1; gen <= opts.max_generations; ++gen) {
    for (std::size_t i = 0; i < pop; ++i) {
      std::size_t r1, r2, r3;
      do r1 = rng.below(pop); while (r1 == i);
      do r2 = rng.below(pop); while (r2 == i || r2 == r1);
      do r3 = rng.below(pop); while (r3 == i || r3 == r1 || r3 == r2);
      mutant = xs[r1] + opts.weight * (xs[r2] - xs[r3]);
      for (Eigen::Index j = 0; j < dim; ++j)
        mutant[j] = std::clamp(mutant[j], lower[j], upper[j]);

      const Eigen::Index jrand = static_cast<Eigen::Index>(
          rng.below(static_cast<std::uint64_t>(dim)));
      trial = xs[i];
      for (Eigen::Index j = 0; j < dim; ++j)
        if (rng.uniform01() < opts.crossover || j == jrand)
          trial[j] = mutant[j];

      const double ft = objective(trial);
      if (ft <= fs[i]) {
        xs[i] = trial;
        fs[i] = ft;
      }
    }
    res.best_trace.push_back(fs[best_index()]);

    const double mean =
        std::accumulate(fs.begin(), fs.end(), 0.0) / static_cast<double>(pop);
    double var = 0.0;
    for (double f : fs) var += (f - mean) * (f - mean);
    const double stdev = std::sqrt(var / static_cast<double>(pop));
    if (stdev <= opts.tol * std::abs(mean)) {
      converged = true;
      break;
    }
  }

  const std::size_t b = best_index();
  res.x = xs[b];
  res.f = fs[b];
  res.n_generations = std::min(gen, opts.max_generations);
  res.converged = converged;
  return res;
}

FitResult fit_differential_evolution(const ModelSpec& model,
                                     const InputSource& input,
                                     const Observations& obs,
                                     const Eigen::VectorXd& lower,
                                     const Eigen::VectorXd& upper,
                                     const DifferentialEvolutionOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const ResidualProblem prob(model, input, obs, opts.integrator);
  if (lower.size() != model.param_dim)
    throw std::invalid_argument("bounds have wrong dimension");
  auto objective = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd rr;
    return prob.residual(p, rr) ? rr.norm() : kLossSentinel;
  };
  const DifferentialEvolutionResult de =
      differential_evolution_minimize(objective, lower, upper, opts);

  FitResult res;
  res.p_hat = de.x;
  res.loss_final = de.f;
  res.loss_trace = de.best_trace;
  res.n_iterations = de.n_generations;
  res.termination =
      de.converged ? Termination::kConverged : Termination::kMaxIterations;
  res.wall_time_seconds = elapsed_seconds(start);
  return res;
}

// ===========================================================================
// L-BFGS with finite-difference gradients
// ===========================================================================

LbfgsResult lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& x0, const LbfgsOptions& opts) {
  const Eigen::Index n = x0.size();
  if (n < 1) throw std::invalid_argument("empty start point");

  auto gradient = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(n);
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = opts.fd_step_rel * std::max(std::abs(x[i]), 1.0);
      probe[i] = x[i] + h;
      const double up = objective(probe);
      probe[i] = x[i] - h;
      const double down = objective(probe);
      probe[i] = x[i];
      g[i] = (up - down) / (2.0 * h);
    }
  };

  LbfgsResult res;
  Eigen::VectorXd x = x0;
  double f = objective(x);
  Eigen::VectorXd g(n);
  gradient(x, g);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  Eigen::VectorXd q(n), d(n), g_new(n), x_new(n);
  std::vector<double> alpha_buf;
  bool converged = false;
  int iter = 0;
  for (iter = 0; iter < opts.max_iterations; ++iter) {
    if (g.norm() <= opts.grad_tol) {
      converged = true;
      break;
    }

    // Two-loop recursion for d = -H * g.
    q = g;
    alpha_buf.assign(s_hist.size(), 0.0);
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha_buf[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha_buf[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha_buf[i] - beta) * s_hist[i];
    }
    d = -q;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {  // not a descent direction: restart from steepest
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -g;
      slope = g.dot(d);
    }

    // Backtracking Armijo line search.
    double step = 1.0;
    double f_new = f;
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      x_new = x + step * d;
      f_new = objective(x_new);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further progress along any tested step

    gradient(x_new, g_new);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = x_new;
    f = f_new;
    g = g_new;
    res.best_trace.push_back(f);
    if (s.norm() <= opts.step_tol) {
      converged = true;
      ++iter;
      break;
    }
  }

  res.x = x;
  res.f = f;
  res.n_iterations = iter;
  res.converged = converged;
  return res;
}

FitResult fit_lbfgs_fd(const ModelSpec& model, const InputSource& input,
                       const Observations& obs, const Eigen::VectorXd& p0,
                       const LbfgsOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const ResidualProblem prob(model, input, obs, opts.integrator);
  if (p0.size() != model.param_dim)
    throw std::invalid_argument("p0 has wrong dimension");
  auto objective = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd rr;
    return prob.residual(p, rr) ? rr.norm() : kLossSentinel;
  };
  const LbfgsResult lb = lbfgs_minimize(objective, p0, opts);

  FitResult res;
  res.p_hat = lb.x;
  res.loss_final = lb.f;
  res.loss_trace = lb.best_trace;
  res.n_iterations = lb.n_iterations;
  res.termination =
      lb.converged ? Termination::kConverged : Termination::kMaxIterations;
  res.wall_time_seconds = elapsed_seconds(start);
  return res;
}

double mape(const Eigen::VectorXd& p_hat, const Eigen::VectorXd& p_true) {
  if (p_hat.size() != p_true.size())
    throw std::invalid_argument("mape requires equally sized vectors");
  if (p_true.size() == 0) throw std::invalid_argument("mape of empty vectors");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p_true.size(); ++i) {
    if (p_true[i] == 0.0)
      throw std::domain_error("mape undefined for zero true component");
    acc += std::abs(p_hat[i] - p_true[i]) / std::abs(p_true[i]);
  }
  return 100.0 * acc / static_cast<double>(p_true.size());
}

}  // namespace hadesfit
