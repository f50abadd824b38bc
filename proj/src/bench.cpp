#include "hadesfit/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "hadesfit/common.hpp"

namespace hadesfit {

using nlohmann::json;

// ===========================================================================
// Optimizer identifiers
// ===========================================================================

OptimizerId optimizer_from_string(const std::string& name) {
  if (name == "hades") return OptimizerId::kHades;
  if (name == "lm") return OptimizerId::kLm;
  if (name == "nm") return OptimizerId::kNelderMead;
  if (name == "de") return OptimizerId::kDifferentialEvolution;
  if (name == "lbfgs") return OptimizerId::kLbfgs;
  throw ConfigError("unknown optimizer \"" + name +
                    "\"; expected one of hades, lm, nm, de, lbfgs");
}

std::string to_string(OptimizerId id) {
  switch (id) {
    case OptimizerId::kHades:
      return "hades";
    case OptimizerId::kLm:
      return "lm";
    case OptimizerId::kNelderMead:
      return "nm";
    case OptimizerId::kDifferentialEvolution:
      return "de";
    case OptimizerId::kLbfgs:
      return "lbfgs";
  }
  return "unknown";
}

// ===========================================================================
// Signal configuration
// ===========================================================================

void SignalConfig::validate() const {
  if (kind == "markov" || kind == "smooth_cosine" || kind == "constant") {
    if (!(horizon > 0.0))
      throw ConfigError("signal.horizon must be > 0 for kind \"" + kind + "\"");
  }
  if (kind == "smooth_cosine" && !(step > 0.0))
    throw ConfigError("signal.step must be > 0");
  if (kind == "csv" && path.empty())
    throw ConfigError("signal.path is required for kind \"csv\"");
  if (kind != "markov" && kind != "smooth_cosine" && kind != "constant" &&
      kind != "csv" && kind != "light_schedule")
    throw ConfigError("unknown signal.kind \"" + kind +
                      "\"; expected markov, smooth_cosine, constant, csv, or "
                      "light_schedule");
}

Signal build_signal(const SignalConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.kind == "markov") return sample_markov(cfg.markov, cfg.horizon, seed);
  if (cfg.kind == "smooth_cosine")
    return smooth_cosine_signal(cfg.horizon, cfg.step);
  if (cfg.kind == "constant") return constant_signal(cfg.value, cfg.horizon);
  if (cfg.kind == "csv") return read_signal_csv(cfg.path, cfg.csv_domain_end);
  return synthetic_light_schedule(cfg.light, seed);
}

// ===========================================================================
// JSON config parsing
// ===========================================================================

namespace {

const json* find_field(const json& j, const std::string& name) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) return nullptr;
  return &*it;
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number())
    throw ConfigError("field \"" + path + "\" must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer())
    throw ConfigError("field \"" + path + "\" must be an integer");
  return v.get<int>();
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)))
    throw ConfigError("field \"" + path + "\" must be a non-negative integer");
  return v.get<std::uint64_t>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean())
    throw ConfigError("field \"" + path + "\" must be a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string())
    throw ConfigError("field \"" + path + "\" must be a string");
  return v.get<std::string>();
}

Eigen::VectorXd as_vector(const json& v, const std::string& path) {
  if (!v.is_array())
    throw ConfigError("field \"" + path + "\" must be an array of numbers");
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Eigen::Index>(i)] =
        as_number(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

const json& require_field(const json& j, const std::string& name,
                          const std::string& scope = "") {
  const json* v = find_field(j, name);
  if (!v)
    throw ConfigError("missing required field \"" + scope + name + "\"");
  return *v;
}

double opt_number(const json& j, const std::string& name, double def,
                  const std::string& scope = "") {
  const json* v = find_field(j, name);
  return v ? as_number(*v, scope + name) : def;
}

int opt_int(const json& j, const std::string& name, int def,
            const std::string& scope = "") {
  const json* v = find_field(j, name);
  return v ? as_int(*v, scope + name) : def;
}

bool opt_bool(const json& j, const std::string& name, bool def,
              const std::string& scope = "") {
  const json* v = find_field(j, name);
  return v ? as_bool(*v, scope + name) : def;
}

std::string opt_string(const json& j, const std::string& name,
                       const std::string& def, const std::string& scope = "") {
  const json* v = find_field(j, name);
  return v ? as_string(*v, scope + name) : def;
}

SignalConfig parse_signal(const json& j) {
  if (!j.is_object()) throw ConfigError("field \"signal\" must be an object");
  SignalConfig cfg;
  cfg.kind = as_string(require_field(j, "kind", "signal."), "signal.kind");
  if (cfg.kind == "markov") {
    cfg.horizon =
        as_number(require_field(j, "horizon", "signal."), "signal.horizon");
    cfg.markov.step = opt_number(j, "step", cfg.markov.step, "signal.");
    if (const json* v = find_field(j, "states")) {
      const Eigen::VectorXd states = as_vector(*v, "signal.states");
      cfg.markov.states.assign(states.data(), states.data() + states.size());
    }
    if (const json* v = find_field(j, "transition")) {
      if (!v->is_array())
        throw ConfigError("field \"signal.transition\" must be a matrix");
      cfg.markov.transition.clear();
      for (std::size_t r = 0; r < v->size(); ++r) {
        const Eigen::VectorXd row = as_vector(
            (*v)[r], "signal.transition[" + std::to_string(r) + "]");
        cfg.markov.transition.emplace_back(row.data(), row.data() + row.size());
      }
    }
    cfg.markov.initial_state_index =
        opt_int(j, "initial_state_index", cfg.markov.initial_state_index,
                "signal.");
  } else if (cfg.kind == "smooth_cosine") {
    cfg.horizon =
        as_number(require_field(j, "horizon", "signal."), "signal.horizon");
    cfg.step = opt_number(j, "step", 0.01, "signal.");
  } else if (cfg.kind == "constant") {
    cfg.horizon =
        as_number(require_field(j, "horizon", "signal."), "signal.horizon");
    cfg.value = as_number(require_field(j, "value", "signal."), "signal.value");
  } else if (cfg.kind == "csv") {
    cfg.path = as_string(require_field(j, "path", "signal."), "signal.path");
    if (const json* v = find_field(j, "domain_end"))
      cfg.csv_domain_end = as_number(*v, "signal.domain_end");
  } else if (cfg.kind == "light_schedule") {
    cfg.light.days =
        as_int(require_field(j, "days", "signal."), "signal.days");
    const json& hours = require_field(j, "on_hours", "signal.");
    if (!hours.is_array())
      throw ConfigError("field \"signal.on_hours\" must be an array of pairs");
    cfg.light.on_hours.clear();
    for (std::size_t i = 0; i < hours.size(); ++i) {
      const Eigen::VectorXd pair = as_vector(
          hours[i], "signal.on_hours[" + std::to_string(i) + "]");
      if (pair.size() != 2)
        throw ConfigError("field \"signal.on_hours[" + std::to_string(i) +
                          "]\" must be a [start, end] pair");
      cfg.light.on_hours.emplace_back(pair[0], pair[1]);
    }
    cfg.light.lux_on = opt_number(j, "lux_on", cfg.light.lux_on, "signal.");
    cfg.light.lux_off = opt_number(j, "lux_off", cfg.light.lux_off, "signal.");
    cfg.light.jitter_hours =
        opt_number(j, "jitter_hours", cfg.light.jitter_hours, "signal.");
    cfg.light.grid_step =
        opt_number(j, "grid_step", cfg.light.grid_step, "signal.");
  }
  cfg.validate();
  return cfg;
}

IntegratorOptions parse_integrator(const json& j, IntegratorOptions base) {
  base.rtol = opt_number(j, "rtol", base.rtol, "integrator.");
  base.atol = opt_number(j, "atol", base.atol, "integrator.");
  base.max_step = opt_number(j, "max_step", base.max_step, "integrator.");
  base.max_steps = opt_int(j, "max_steps", static_cast<int>(base.max_steps),
                           "integrator.");
  return base;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  static const char* known[] = {
      "model",     "signal",   "p_true",  "n_samples", "noise_sigma",
      "observed_components",   "optimizer", "trials",  "init_box",
      "seed",      "output_dir", "force_p0", "threads", "integrator",
      "lm",        "nm",       "de",      "lbfgs",     "hades",
      "landscape", "gronwall", "notes"};
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError("unknown field \"" + item.key() + "\"");
  }

  ExperimentConfig cfg;
  cfg.model = as_string(require_field(j, "model"), "model");
  cfg.signal = parse_signal(require_field(j, "signal"));
  if (const json* v = find_field(j, "p_true"))
    cfg.p_true = as_vector(*v, "p_true");
  cfg.n_samples = opt_int(j, "n_samples", cfg.n_samples);
  cfg.noise_sigma = opt_number(j, "noise_sigma", cfg.noise_sigma);
  if (const json* v = find_field(j, "observed_components")) {
    if (!v->is_array())
      throw ConfigError("field \"observed_components\" must be an array");
    for (std::size_t i = 0; i < v->size(); ++i)
      cfg.observed_components.push_back(as_int(
          (*v)[i], "observed_components[" + std::to_string(i) + "]"));
  }
  cfg.optimizer = optimizer_from_string(opt_string(j, "optimizer", "lm"));
  cfg.trials = opt_int(j, "trials", cfg.trials);
  if (const json* v = find_field(j, "init_box")) {
    const Eigen::VectorXd box = as_vector(*v, "init_box");
    if (box.size() != 2)
      throw ConfigError("field \"init_box\" must be [lower, upper]");
    cfg.init_lo = box[0];
    cfg.init_hi = box[1];
  }
  if (const json* v = find_field(j, "seed")) cfg.seed = as_u64(*v, "seed");
  cfg.output_dir = opt_string(j, "output_dir", cfg.output_dir);
  if (const json* v = find_field(j, "force_p0"))
    cfg.force_p0 = as_vector(*v, "force_p0");
  cfg.threads = static_cast<unsigned>(opt_int(j, "threads", 0));

  if (const json* v = find_field(j, "integrator"))
    cfg.integrator = parse_integrator(*v, cfg.integrator);
  cfg.lm.integrator = cfg.integrator;
  cfg.nelder_mead.integrator = cfg.integrator;
  cfg.de.integrator = cfg.integrator;
  cfg.lbfgs.integrator = cfg.integrator;

  if (const json* v = find_field(j, "lm")) {
    cfg.lm.max_iterations =
        opt_int(*v, "max_iterations", cfg.lm.max_iterations, "lm.");
    cfg.lm.lambda0 = opt_number(*v, "lambda0", cfg.lm.lambda0, "lm.");
    cfg.lm.grad_tol = opt_number(*v, "grad_tol", cfg.lm.grad_tol, "lm.");
    cfg.lm.step_tol = opt_number(*v, "step_tol", cfg.lm.step_tol, "lm.");
    cfg.lm.loss_floor = opt_number(*v, "loss_floor", cfg.lm.loss_floor, "lm.");
    cfg.lm.positivity_clamp =
        opt_bool(*v, "positivity_clamp", cfg.lm.positivity_clamp, "lm.");
  }
  if (const json* v = find_field(j, "nm")) {
    cfg.nelder_mead.max_evaluations =
        opt_int(*v, "max_evaluations", cfg.nelder_mead.max_evaluations, "nm.");
    cfg.nelder_mead.xatol = opt_number(*v, "xatol", cfg.nelder_mead.xatol, "nm.");
    cfg.nelder_mead.fatol = opt_number(*v, "fatol", cfg.nelder_mead.fatol, "nm.");
    cfg.nelder_mead.initial_scale =
        opt_number(*v, "initial_scale", cfg.nelder_mead.initial_scale, "nm.");
  }
  if (const json* v = find_field(j, "de")) {
    cfg.de.max_generations =
        opt_int(*v, "max_generations", cfg.de.max_generations, "de.");
    cfg.de.population_multiplier = opt_int(
        *v, "population_multiplier", cfg.de.population_multiplier, "de.");
    cfg.de.weight = opt_number(*v, "weight", cfg.de.weight, "de.");
    cfg.de.crossover = opt_number(*v, "crossover", cfg.de.crossover, "de.");
    cfg.de.tol = opt_number(*v, "tol", cfg.de.tol, "de.");
  }
  if (const json* v = find_field(j, "lbfgs")) {
    cfg.lbfgs.max_iterations =
        opt_int(*v, "max_iterations", cfg.lbfgs.max_iterations, "lbfgs.");
    cfg.lbfgs.memory = opt_int(*v, "memory", cfg.lbfgs.memory, "lbfgs.");
    cfg.lbfgs.grad_tol = opt_number(*v, "grad_tol", cfg.lbfgs.grad_tol, "lbfgs.");
    cfg.lbfgs.step_tol = opt_number(*v, "step_tol", cfg.lbfgs.step_tol, "lbfgs.");
    cfg.lbfgs.fd_step_rel =
        opt_number(*v, "fd_step_rel", cfg.lbfgs.fd_step_rel, "lbfgs.");
    cfg.lbfgs.max_backtracks =
        opt_int(*v, "max_backtracks", cfg.lbfgs.max_backtracks, "lbfgs.");
  }
  cfg.hades.stage2 = cfg.lm;
  if (const json* v = find_field(j, "hades")) {
    cfg.hades.epsilon = opt_number(*v, "epsilon", cfg.hades.epsilon, "hades.");
    cfg.hades.max_outer_iterations = opt_int(
        *v, "max_outer_iterations", cfg.hades.max_outer_iterations, "hades.");
    cfg.hades.stage1.epochs =
        opt_int(*v, "epochs", cfg.hades.stage1.epochs, "hades.");
    cfg.hades.stage1.learning_rate = opt_number(
        *v, "learning_rate", cfg.hades.stage1.learning_rate, "hades.");
    cfg.hades.architecture.cosine_units = opt_int(
        *v, "cosine_units", cfg.hades.architecture.cosine_units, "hades.");
    cfg.hades.architecture.hidden_layers = opt_int(
        *v, "hidden_layers", cfg.hades.architecture.hidden_layers, "hades.");
    cfg.hades.architecture.hidden_units = opt_int(
        *v, "hidden_units", cfg.hades.architecture.hidden_units, "hades.");
  }
  return cfg;
}

void ExperimentConfig::validate() const {
  signal.validate();
  if (p_true.size() == 0) throw ConfigError("missing required field \"p_true\"");
  for (Eigen::Index i = 0; i < p_true.size(); ++i)
    if (!(p_true[i] > 0.0))
      throw ConfigError("p_true components must be positive");
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (!(init_lo > 0.0 && init_lo < init_hi))
    throw ConfigError("init_box must satisfy 0 < lower < upper");
  if (force_p0 && force_p0->size() != p_true.size())
    throw ConfigError("force_p0 must have the same dimension as p_true");
}

// ===========================================================================
// Observation generation
// ===========================================================================

Observations generate_observations(const ModelSpec& model,
                                   const Eigen::VectorXd& p_true,
                                   const Signal& signal, int n_samples,
                                   double noise_sigma,
                                   const std::vector<int>& components,
                                   std::uint64_t seed,
                                   const IntegratorOptions& opts) {
  model.validate();
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (p_true.size() != model.param_dim)
    throw ConfigError("p_true has wrong dimension for model");

  std::vector<int> comps = components;
  if (comps.empty())
    for (int c = 0; c < model.state_dim; ++c) comps.push_back(c);

  const double horizon = signal.domain_end;
  std::vector<double> t_eval(static_cast<std::size_t>(n_samples));
  for (int jdx = 1; jdx <= n_samples; ++jdx)
    t_eval[static_cast<std::size_t>(jdx - 1)] =
        horizon * jdx / static_cast<double>(n_samples);

  Trajectory traj;
  try {
    traj = integrate(model, p_true, InputSource::zero_order_hold(signal),
                     t_eval, opts);
  } catch (const IntegrationError& e) {
    throw ConfigError(std::string("cannot integrate at p_true: ") + e.what());
  }

  Observations obs;
  obs.observed_components = comps;
  obs.times = Eigen::Map<const Eigen::VectorXd>(
      t_eval.data(), static_cast<Eigen::Index>(t_eval.size()));
  obs.values.resize(n_samples, static_cast<Eigen::Index>(comps.size()));
  for (Eigen::Index jdx = 0; jdx < obs.times.size(); ++jdx)
    for (std::size_t c = 0; c < comps.size(); ++c)
      obs.values(jdx, static_cast<Eigen::Index>(c)) =
          traj.states(jdx, comps[c]);
  if (noise_sigma > 0.0) {
    Rng rng(seed);
    for (Eigen::Index jdx = 0; jdx < obs.values.rows(); ++jdx)
      for (Eigen::Index c = 0; c < obs.values.cols(); ++c)
        obs.values(jdx, c) += noise_sigma * rng.normal();
  }
  obs.validate(model.state_dim);
  return obs;
}

// ===========================================================================
// Studies
// ===========================================================================

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  q = std::clamp(q, 0.0, 1.0);
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

namespace {

TrialRow run_trial(const ExperimentConfig& cfg, const ModelSpec& model,
                   const std::shared_ptr<const Signal>& signal,
                   const Observations& obs, int index,
                   std::uint64_t trials_base, FitResult* out_fit) {
  TrialRow row;
  row.trial = index;
  row.seed = derive_seed(trials_base, static_cast<std::uint64_t>(index));

  Eigen::VectorXd p0(cfg.p_true.size());
  if (cfg.force_p0) {
    p0 = *cfg.force_p0;
  } else {
    Rng rng(row.seed);
    for (Eigen::Index i = 0; i < p0.size(); ++i)
      p0[i] = rng.log_uniform(cfg.init_lo * cfg.p_true[i],
                              cfg.init_hi * cfg.p_true[i]);
  }
  row.p0 = p0;

  const InputSource zoh = InputSource::zero_order_hold(signal);
  FitResult fit;
  try {
    switch (cfg.optimizer) {
      case OptimizerId::kLm:
        fit = fit_lm(model, zoh, obs, p0, cfg.lm);
        break;
      case OptimizerId::kNelderMead:
        fit = fit_nelder_mead(model, zoh, obs, p0, cfg.nelder_mead);
        break;
      case OptimizerId::kLbfgs:
        fit = fit_lbfgs_fd(model, zoh, obs, p0, cfg.lbfgs);
        break;
      case OptimizerId::kDifferentialEvolution: {
        DifferentialEvolutionOptions de = cfg.de;
        de.seed = derive_seed(row.seed, "de");
        const Eigen::VectorXd lower = cfg.init_lo * cfg.p_true;
        const Eigen::VectorXd upper = cfg.init_hi * cfg.p_true;
        fit = fit_differential_evolution(model, zoh, obs, lower, upper, de);
        break;
      }
      case OptimizerId::kHades: {
        HadesResult hd = run_hades(model, *signal, obs, p0, cfg.hades,
                                   derive_seed(row.seed, "hades"));
        row.hades_trace = std::move(hd.trace);
        fit = std::move(hd.fit);
        break;
      }
    }
  } catch (const std::exception&) {
    // A trial failure is data, not a study abort.
    fit.p_hat = p0;
    fit.loss_final = kLossSentinel;
    fit.termination = Termination::kIntegrationFailure;
  }

  row.p_hat = fit.p_hat;
  row.loss_final = fit.loss_final;
  row.n_iterations = fit.n_iterations;
  row.termination = fit.termination;
  row.wall_time_seconds = fit.wall_time_seconds;
  row.loss_true_signal =
      loss(model, row.p_hat, zoh, obs, cfg.integrator);
  row.mape = mape(row.p_hat, cfg.p_true);
  if (out_fit) *out_fit = std::move(fit);
  return row;
}

}  // namespace

StudyReport run_study(const ExperimentConfig& cfg) {
  cfg.validate();
  const ModelSpec& model = ModelRegistry::builtin().resolve(cfg.model);
  if (cfg.p_true.size() != model.param_dim)
    throw ConfigError("p_true has wrong dimension for model \"" + cfg.model +
                      "\"");

  const auto signal = std::make_shared<const Signal>(
      build_signal(cfg.signal, derive_seed(cfg.seed, "signal")));
  const Observations obs = generate_observations(
      model, cfg.p_true, *signal, cfg.n_samples, cfg.noise_sigma,
      cfg.observed_components, derive_seed(cfg.seed, "observations"),
      cfg.integrator);
  const std::uint64_t trials_base = derive_seed(cfg.seed, "trials");

  StudyReport rep;
  rep.p_true = cfg.p_true;
  rep.param_names = model.param_names;
  rep.model = cfg.model;
  rep.optimizer = cfg.optimizer;
  rep.rows.resize(static_cast<std::size_t>(cfg.trials));
  parallel_for(static_cast<std::size_t>(cfg.trials), cfg.threads,
               [&](std::size_t i) {
                 rep.rows[i] = run_trial(cfg, model, signal, obs,
                                         static_cast<int>(i), trials_base,
                                         nullptr);
               });

  double best = std::numeric_limits<double>::infinity();
  for (const TrialRow& row : rep.rows) best = std::min(best, row.loss_final);
  std::size_t n_converged = 0;
  std::vector<double> mapes;
  mapes.reserve(rep.rows.size());
  for (TrialRow& row : rep.rows) {
    row.converged_class = row.termination == Termination::kConverged &&
                          row.loss_final <= 10.0 * best;
    n_converged += row.converged_class ? 1 : 0;
    mapes.push_back(row.mape);
  }
  rep.mape_median = quantile(mapes, 0.5);
  rep.mape_q1 = quantile(mapes, 0.25);
  rep.mape_q3 = quantile(mapes, 0.75);
  rep.mape_mean = std::accumulate(mapes.begin(), mapes.end(), 0.0) /
                  static_cast<double>(mapes.size());
  rep.convergence_fraction =
      static_cast<double>(n_converged) / static_cast<double>(rep.rows.size());

  const Eigen::Index dim = cfg.p_true.size();
  rep.normalized_median.resize(dim);
  rep.normalized_q1.resize(dim);
  rep.normalized_q3.resize(dim);
  std::vector<double> column(rep.rows.size());
  for (Eigen::Index jdx = 0; jdx < dim; ++jdx) {
    for (std::size_t i = 0; i < rep.rows.size(); ++i)
      column[i] = rep.rows[i].p_hat[jdx] / cfg.p_true[jdx];
    rep.normalized_median[jdx] = quantile(column, 0.5);
    rep.normalized_q1[jdx] = quantile(column, 0.25);
    rep.normalized_q3[jdx] = quantile(column, 0.75);
  }
  return rep;
}

std::string StudyReport::report_csv() const {
  const Eigen::Index dim = p_true.size();
  std::string out = "trial,seed";
  for (Eigen::Index i = 0; i < dim; ++i) out += ",p0_" + std::to_string(i + 1);
  for (Eigen::Index i = 0; i < dim; ++i)
    out += ",p_hat_" + std::to_string(i + 1);
  out += ",loss_final,loss_true_signal,n_iterations,termination,mape,"
         "converged,wall_time_seconds\n";
  for (const TrialRow& row : rows) {
    out += std::to_string(row.trial);
    out += ',' + std::to_string(row.seed);
    for (Eigen::Index i = 0; i < dim; ++i)
      out += ',' + format_double(row.p0[i]);
    for (Eigen::Index i = 0; i < dim; ++i)
      out += ',' + format_double(row.p_hat[i]);
    out += ',' + format_double(row.loss_final);
    out += ',' + format_double(row.loss_true_signal);
    out += ',' + std::to_string(row.n_iterations);
    out += ',' + to_string(row.termination);
    out += ',' + format_double(row.mape);
    out += row.converged_class ? ",1" : ",0";
    out += ',' + format_double(row.wall_time_seconds);
    out += '\n';
  }
  return out;
}

namespace {

std::string json_vector(const Eigen::VectorXd& v) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_double(v[i]);
  }
  return out + "]";
}

}  // namespace

std::string StudyReport::summary_json() const {
  std::string out = "{\n";
  out += "  \"model\": \"" + model + "\",\n";
  out += "  \"optimizer\": \"" + to_string(optimizer) + "\",\n";
  out += "  \"trials\": " + std::to_string(rows.size()) + ",\n";
  out += "  \"p_true\": " + json_vector(p_true) + ",\n";
  out += "  \"mape\": {\"median\": " + format_double(mape_median) +
         ", \"mean\": " + format_double(mape_mean) +
         ", \"q1\": " + format_double(mape_q1) +
         ", \"q3\": " + format_double(mape_q3) + "},\n";
  out += "  \"convergence_fraction\": " + format_double(convergence_fraction) +
         ",\n";
  out += "  \"normalized_estimates\": {\"median\": " +
         json_vector(normalized_median) +
         ", \"q1\": " + json_vector(normalized_q1) +
         ", \"q3\": " + json_vector(normalized_q3) + "}\n";
  out += "}\n";
  return out;
}

// ===========================================================================
// Loss landscape
// ===========================================================================

Eigen::MatrixXd loss_landscape(const ModelSpec& model, const InputSource& input,
                               const Observations& obs,
                               const LandscapeAxis& axis1,
                               const LandscapeAxis& axis2,
                               const Eigen::VectorXd& p_fixed,
                               const IntegratorOptions& opts,
                               unsigned threads) {
  model.validate();
  if (p_fixed.size() != model.param_dim)
    throw std::invalid_argument("p_fixed has wrong dimension");
  for (const LandscapeAxis* axis : {&axis1, &axis2}) {
    if (axis->param_index < 0 || axis->param_index >= model.param_dim)
      throw std::invalid_argument("landscape axis parameter index out of range");
    if (axis->grid.size() == 0 || !axis->grid.allFinite())
      throw std::invalid_argument("landscape axis grid must be finite and non-empty");
  }
  if (axis1.param_index == axis2.param_index)
    throw std::invalid_argument("landscape axes must use distinct parameters");

  const Eigen::Index n1 = axis1.grid.size();
  const Eigen::Index n2 = axis2.grid.size();
  Eigen::MatrixXd grid(n1, n2);
  parallel_for(static_cast<std::size_t>(n1 * n2), threads,
               [&](std::size_t k) {
                 const Eigen::Index i = static_cast<Eigen::Index>(k) / n2;
                 const Eigen::Index jdx = static_cast<Eigen::Index>(k) % n2;
                 Eigen::VectorXd p = p_fixed;
                 p[axis1.param_index] = axis1.grid[i];
                 p[axis2.param_index] = axis2.grid[jdx];
                 grid(i, jdx) = loss_checked(model, p, input, obs, opts).value;
               });
  return grid;
}

std::string landscape_csv(const Eigen::MatrixXd& grid,
                          const LandscapeAxis& axis1,
                          const LandscapeAxis& axis2,
                          const std::vector<std::string>& param_names) {
  auto name = [&](int idx) {
    if (idx >= 0 && static_cast<std::size_t>(idx) < param_names.size())
      return param_names[static_cast<std::size_t>(idx)];
    return "p" + std::to_string(idx + 1);
  };
  std::string out = name(axis1.param_index) + "\\" + name(axis2.param_index);
  for (Eigen::Index jdx = 0; jdx < axis2.grid.size(); ++jdx)
    out += ',' + format_double(axis2.grid[jdx]);
  out += '\n';
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    out += format_double(axis1.grid[i]);
    for (Eigen::Index jdx = 0; jdx < grid.cols(); ++jdx)
      out += ',' + format_double(grid(i, jdx));
    out += '\n';
  }
  return out;
}

double mean_abs_second_difference(const Eigen::MatrixXd& grid) {
  if (grid.rows() < 3 && grid.cols() < 3)
    throw std::invalid_argument(
        "second differences need at least 3 points in one grid direction");
  double acc = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 1; i + 1 < grid.rows(); ++i)
    for (Eigen::Index jdx = 0; jdx < grid.cols(); ++jdx) {
      acc += std::abs(grid(i - 1, jdx) - 2.0 * grid(i, jdx) + grid(i + 1, jdx));
      ++count;
    }
  for (Eigen::Index i = 0; i < grid.rows(); ++i)
    for (Eigen::Index jdx = 1; jdx + 1 < grid.cols(); ++jdx) {
      acc += std::abs(grid(i, jdx - 1) - 2.0 * grid(i, jdx) + grid(i, jdx + 1));
      ++count;
    }
  return acc / static_cast<double>(count);
}

// ===========================================================================
// Perturbation (input-to-state) study
// ===========================================================================

std::vector<GronwallRow> gronwall_study(const ModelSpec& model,
                                        const Eigen::VectorXd& p,
                                        const Signal& signal,
                                        const std::vector<double>& scales,
                                        std::uint64_t seed,
                                        const IntegratorOptions& opts) {
  model.validate();
  signal.validate();
  for (double s : scales)
    if (!(s >= 0.0) || !std::isfinite(s))
      throw std::invalid_argument("perturbation scales must be finite and >= 0");

  // One fixed noise pattern reused at every amplitude, so rows differ only
  // by the scale.
  Rng rng(seed);
  std::vector<double> pattern(signal.values.size());
  for (double& v : pattern) v = rng.uniform(-1.0, 1.0);

  const double horizon = signal.domain_end;
  constexpr int kGridPoints = 2001;
  std::vector<double> t_eval(kGridPoints);
  for (int i = 0; i < kGridPoints; ++i)
    t_eval[static_cast<std::size_t>(i)] =
        horizon * i / static_cast<double>(kGridPoints - 1);

  const Trajectory nominal =
      integrate(model, p, InputSource::zero_order_hold(signal), t_eval, opts);

  std::vector<GronwallRow> table;
  table.reserve(scales.size());
  for (double eps : scales) {
    Signal perturbed = signal;
    for (std::size_t i = 0; i < perturbed.values.size(); ++i)
      perturbed.values[i] += eps * pattern[i];
    const Trajectory other = integrate(
        model, p, InputSource::zero_order_hold(perturbed), t_eval, opts);

    const auto input_sq = [&](double t) {
      const double d = signal.evaluate(t) - perturbed.evaluate(t);
      return d * d;
    };
    const auto state_sq = [&](double t) {
      const auto idx = static_cast<Eigen::Index>(
          std::lround(t / horizon * (kGridPoints - 1)));
      return (nominal.states.row(idx) - other.states.row(idx)).squaredNorm();
    };
    GronwallRow row;
    row.epsilon = eps;
    row.input_l2 = l2_norm_quadrature(input_sq, 0.0, horizon, kGridPoints);
    row.state_l2 = l2_norm_quadrature(state_sq, 0.0, horizon, kGridPoints);
    row.defined = row.input_l2 > 0.0;
    row.ratio = row.defined ? row.state_l2 / row.input_l2 : 0.0;
    table.push_back(row);
  }
  return table;
}

std::string gronwall_csv(const std::vector<GronwallRow>& table) {
  std::string out = "epsilon,input_l2,state_l2,ratio,defined\n";
  for (const GronwallRow& row : table) {
    out += format_double(row.epsilon);
    out += ',' + format_double(row.input_l2);
    out += ',' + format_double(row.state_l2);
    out += ',' + format_double(row.ratio);
    out += row.defined ? ",1\n" : ",0\n";
  }
  return out;
}

// ===========================================================================
// Command-line interface
// ===========================================================================

namespace {

namespace fs = std::filesystem;

struct CliContext {
  ExperimentConfig cfg;
  json raw;
  fs::path out;
};

CliContext load_context(const std::string& config_path) {
  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot read config file: " + config_path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  CliContext ctx;
  ctx.cfg = ExperimentConfig::from_json(buffer.str());
  ctx.raw = json::parse(buffer.str());
  ctx.out = ctx.cfg.output_dir;
  fs::create_directories(ctx.out);
  return ctx;
}

LandscapeAxis parse_axis(const json& j, const std::string& scope) {
  LandscapeAxis axis;
  axis.param_index = as_int(require_field(j, "param", scope), scope + "param");
  if (const json* v = find_field(j, "grid")) {
    axis.grid = as_vector(*v, scope + "grid");
    return axis;
  }
  const double lo = as_number(require_field(j, "min", scope), scope + "min");
  const double hi = as_number(require_field(j, "max", scope), scope + "max");
  const int count = as_int(require_field(j, "count", scope), scope + "count");
  if (count < 2) throw ConfigError("field \"" + scope + "count\" must be >= 2");
  axis.grid.resize(count);
  for (int i = 0; i < count; ++i)
    axis.grid[i] = lo + (hi - lo) * i / static_cast<double>(count - 1);
  return axis;
}

int run_subcommand(const std::string& name, const std::string& config_path) {
  CliContext ctx = load_context(config_path);
  const ExperimentConfig& cfg = ctx.cfg;

  if (name == "gen-signal") {
    const Signal s = build_signal(cfg.signal, derive_seed(cfg.seed, "signal"));
    const fs::path path = ctx.out / "signal.csv";
    write_signal_csv(s, path.string());
    std::cout << "gen-signal: wrote " << path.string() << " ("
              << s.times.size() << " samples, horizon "
              << format_double(s.domain_end) << ")\n";
    return 0;
  }

  const ModelSpec& model = ModelRegistry::builtin().resolve(cfg.model);

  if (name == "smooth") {
    const Signal s = build_signal(cfg.signal, derive_seed(cfg.seed, "signal"));
    SmootherNet net(cfg.hades.architecture, s.times.front(), s.domain_end);
    Rng rng(derive_seed(cfg.seed, "net_init"));
    net.initialize(rng, signal_mean(s), signal_std(s));
    train_stage1(net, s, cfg.hades.stage1);
    const fs::path net_path = ctx.out / "net.json";
    write_text_file(net_path.string(), net.to_json());
    Signal smoothed = s;
    for (std::size_t i = 0; i < s.times.size(); ++i)
      smoothed.values[i] = net.forward(s.times[i]);
    write_signal_csv(smoothed, (ctx.out / "smoothed.csv").string());
    std::cout << "smooth: stage-1 mse " << format_double(net.mse(s))
              << " after " << cfg.hades.stage1.epochs << " epochs -> "
              << net_path.string() << "\n";
    return 0;
  }

  cfg.validate();
  if (cfg.p_true.size() != model.param_dim)
    throw ConfigError("p_true has wrong dimension for model \"" + cfg.model +
                      "\"");
  const auto signal = std::make_shared<const Signal>(
      build_signal(cfg.signal, derive_seed(cfg.seed, "signal")));

  if (name == "gen-obs") {
    const Observations obs = generate_observations(
        model, cfg.p_true, *signal, cfg.n_samples, cfg.noise_sigma,
        cfg.observed_components, derive_seed(cfg.seed, "observations"),
        cfg.integrator);
    std::string csv = "time";
    for (int c : obs.observed_components) csv += ",y" + std::to_string(c + 1);
    csv += '\n';
    for (Eigen::Index i = 0; i < obs.times.size(); ++i) {
      csv += format_double(obs.times[i]);
      for (Eigen::Index c = 0; c < obs.values.cols(); ++c)
        csv += ',' + format_double(obs.values(i, c));
      csv += '\n';
    }
    const fs::path path = ctx.out / "observations.csv";
    write_text_file(path.string(), csv);
    std::cout << "gen-obs: wrote " << path.string() << " ("
              << obs.times.size() << " rows, "
              << obs.observed_components.size() << " components)\n";
    return 0;
  }

  if (name == "fit") {
    const Observations obs = generate_observations(
        model, cfg.p_true, *signal, cfg.n_samples, cfg.noise_sigma,
        cfg.observed_components, derive_seed(cfg.seed, "observations"),
        cfg.integrator);
    FitResult fit;
    const TrialRow row = run_trial(cfg, model, signal, obs, 0,
                                   derive_seed(cfg.seed, "trials"), &fit);
    const fs::path fit_path = ctx.out / "fit_result.json";
    write_text_file(fit_path.string(), fit.to_json(row.seed));
    std::string trace;
    if (row.hades_trace) {
      trace = row.hades_trace->to_csv(model.param_names);
    } else {
      trace = "iter,loss\n";
      for (std::size_t i = 0; i < fit.loss_trace.size(); ++i)
        trace += std::to_string(i) + ',' + format_double(fit.loss_trace[i]) +
                 '\n';
    }
    write_text_file((ctx.out / "trace.csv").string(), trace);
    std::cout << "fit: " << to_string(row.termination) << ", loss "
              << format_double(row.loss_final) << ", mape "
              << format_double(row.mape) << "% -> " << fit_path.string()
              << "\n";
    return 0;
  }

  if (name == "study") {
    const StudyReport rep = run_study(cfg);
    const fs::path report_path = ctx.out / "report.csv";
    write_text_file(report_path.string(), rep.report_csv());
    write_text_file((ctx.out / "summary.json").string(), rep.summary_json());
    for (const TrialRow& row : rep.rows)
      if (row.hades_trace) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "trace_%03d.csv", row.trial);
        write_text_file((ctx.out / buf).string(),
                        row.hades_trace->to_csv(rep.param_names));
      }
    std::cout << "study: " << rep.rows.size() << " trials, median mape "
              << format_double(rep.mape_median) << "%, converged fraction "
              << format_double(rep.convergence_fraction) << " -> "
              << report_path.string() << "\n";
    return 0;
  }

  if (name == "landscape") {
    const json* lj = find_field(ctx.raw, "landscape");
    if (!lj) throw ConfigError("missing required field \"landscape\"");
    const LandscapeAxis axis1 =
        parse_axis(require_field(*lj, "axis1", "landscape."), "landscape.axis1.");
    const LandscapeAxis axis2 =
        parse_axis(require_field(*lj, "axis2", "landscape."), "landscape.axis2.");
    const Observations obs = generate_observations(
        model, cfg.p_true, *signal, cfg.n_samples, cfg.noise_sigma,
        cfg.observed_components, derive_seed(cfg.seed, "observations"),
        cfg.integrator);
    InputSource input = InputSource::zero_order_hold(signal);
    if (const json* v = find_field(*lj, "net_checkpoint")) {
      std::ifstream nin(as_string(*v, "landscape.net_checkpoint"));
      if (!nin)
        throw ConfigError("cannot read net checkpoint: " +
                          as_string(*v, "landscape.net_checkpoint"));
      std::stringstream nbuf;
      nbuf << nin.rdbuf();
      input = InputSource::smooth(SmootherNet::from_json(nbuf.str()));
    }
    const Eigen::MatrixXd grid =
        loss_landscape(model, input, obs, axis1, axis2, cfg.p_true,
                       cfg.integrator, cfg.threads);
    const fs::path path = ctx.out / "landscape.csv";
    write_text_file(path.string(),
                    landscape_csv(grid, axis1, axis2, model.param_names));
    std::cout << "landscape: " << grid.rows() << "x" << grid.cols()
              << " grid, mean |second difference| "
              << format_double(mean_abs_second_difference(grid)) << " -> "
              << path.string() << "\n";
    return 0;
  }

  // gronwall
  const json* gj = find_field(ctx.raw, "gronwall");
  if (!gj) throw ConfigError("missing required field \"gronwall\"");
  const Eigen::VectorXd scales_vec =
      as_vector(require_field(*gj, "scales", "gronwall."), "gronwall.scales");
  const std::vector<double> scales(scales_vec.data(),
                                   scales_vec.data() + scales_vec.size());
  const int draws = opt_int(*gj, "param_draws", 0, "gronwall.");
  if (draws < 0)
    throw ConfigError("field \"gronwall.param_draws\" must be >= 0");
  const std::uint64_t noise_seed = derive_seed(cfg.seed, "gronwall_noise");

  std::string csv = "draw,epsilon,input_l2,state_l2,ratio,defined\n";
  double ratio_min = std::numeric_limits<double>::infinity();
  double ratio_max = 0.0;
  Rng prng(derive_seed(cfg.seed, "gronwall_p"));
  for (int d = 0; d <= draws; ++d) {
    Eigen::VectorXd p = cfg.p_true;
    if (d > 0)
      for (Eigen::Index i = 0; i < p.size(); ++i)
        p[i] = prng.log_uniform(cfg.init_lo * cfg.p_true[i],
                                cfg.init_hi * cfg.p_true[i]);
    const std::vector<GronwallRow> table =
        gronwall_study(model, p, *signal, scales, noise_seed, cfg.integrator);
    for (const GronwallRow& row : table) {
      csv += std::to_string(d);
      csv += ',' + format_double(row.epsilon);
      csv += ',' + format_double(row.input_l2);
      csv += ',' + format_double(row.state_l2);
      csv += ',' + format_double(row.ratio);
      csv += row.defined ? ",1\n" : ",0\n";
      if (row.defined) {
        ratio_min = std::min(ratio_min, row.ratio);
        ratio_max = std::max(ratio_max, row.ratio);
      }
    }
  }
  const fs::path path = ctx.out / "gronwall.csv";
  write_text_file(path.string(), csv);
  std::cout << "gronwall: " << (draws + 1) << " parameter draws x "
            << scales.size() << " scales, ratio range ["
            << format_double(ratio_min) << ", " << format_double(ratio_max)
            << "] -> " << path.string() << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Parameter estimation for ODE systems driven by sampled "
               "external signals"};
  app.require_subcommand(1);

  static const struct {
    const char* name;
    const char* desc;
  } kSubcommands[] = {
      {"gen-signal", "Generate the configured input signal as signal.csv"},
      {"gen-obs", "Generate noiseless or noisy observations as observations.csv"},
      {"fit", "Run one fit; writes fit_result.json and trace.csv"},
      {"study", "Run seeded multi-trial study; writes report.csv and summary.json"},
      {"landscape", "Evaluate the loss on a 2-parameter grid; writes landscape.csv"},
      {"gronwall", "Input-perturbation boundedness study; writes gronwall.csv"},
      {"smooth", "Train the Stage-1 smoother alone; writes net.json and smoothed.csv"},
  };
  std::string config_path;
  for (const auto& sub : kSubcommands) {
    CLI::App* s = app.add_subcommand(sub.name, sub.desc);
    s->add_option("--config", config_path, "Path to the JSON config")
        ->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run_subcommand(name, config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace hadesfit
