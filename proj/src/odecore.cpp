#include "hadesfit/odecore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hadesfit/common.hpp"

namespace hadesfit {

// ===========================================================================
// ModelSpec / InputSource / errors
// ===========================================================================

void ModelSpec::validate() const {
  if (state_dim < 1 || param_dim < 1)
    throw std::invalid_argument("model dimensions must be >= 1");
  if (!rhs || !rhs_jac_y || !rhs_jac_p)
    throw std::invalid_argument("model must provide rhs and both jacobians");
  if (initial_state.size() != state_dim)
    throw std::invalid_argument("model initial state has wrong dimension");
  if (!param_names.empty() &&
      param_names.size() != static_cast<std::size_t>(param_dim))
    throw std::invalid_argument("model parameter name list has wrong length");
  if (!param_positive.empty() &&
      param_positive.size() != static_cast<std::size_t>(param_dim))
    throw std::invalid_argument("model positivity list has wrong length");
}

InputSource InputSource::zero_order_hold(Signal signal) {
  signal.validate();
  return zero_order_hold(std::make_shared<const Signal>(std::move(signal)));
}

InputSource InputSource::zero_order_hold(std::shared_ptr<const Signal> signal) {
  if (!signal) throw std::invalid_argument("null signal");
  signal->validate();
  InputSource src;
  src.signal_ = std::move(signal);
  return src;
}

InputSource InputSource::smooth(SmootherNet net) {
  return smooth(std::make_shared<const SmootherNet>(std::move(net)));
}

InputSource InputSource::smooth(std::shared_ptr<const SmootherNet> net) {
  if (!net) throw std::invalid_argument("null network");
  InputSource src;
  src.net_ = std::move(net);
  return src;
}

double InputSource::value(double t) const {
  if (signal_) {
    // Guard the exact upper boundary against representation drift from
    // stepping arithmetic; interior times are never clamped in practice.
    return signal_->evaluate(std::min(t, signal_->domain_end));
  }
  return net_->forward(t);
}

std::vector<double> InputSource::switch_times(double t0, double t1) const {
  if (signal_) return signal_->switch_times(t0, t1);
  return {};
}

std::optional<double> InputSource::domain_end() const {
  if (signal_) return signal_->domain_end;
  return std::nullopt;
}

IntegrationError::IntegrationError(double t, const std::string& reason)
    : std::runtime_error(
          [&] {
            std::ostringstream msg;
            msg << "integration failed at t=" << t << ": " << reason;
            return msg.str();
          }()),
      failure_time(t) {}

// ===========================================================================
// Adaptive Runge-Kutta 5(4) core (Dormand-Prince pair, FSAL, dense output)
// ===========================================================================

namespace {

// Butcher tableau.
constexpr double kC2 = 1.0 / 5, kC3 = 3.0 / 10, kC4 = 4.0 / 5, kC5 = 8.0 / 9;
constexpr double kA21 = 1.0 / 5;
constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187,
                 kA53 = 64448.0 / 6561, kA54 = -212.0 / 729;
constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33,
                 kA63 = 46732.0 / 5247, kA64 = 49.0 / 176,
                 kA65 = -5103.0 / 18656;
constexpr double kA71 = 35.0 / 384, kA73 = 500.0 / 1113, kA74 = 125.0 / 192,
                 kA75 = -2187.0 / 6784, kA76 = 11.0 / 84;
// Difference between the 5th- and 4th-order weights (error estimator).
constexpr double kE1 = 71.0 / 57600, kE3 = -71.0 / 16695, kE4 = 71.0 / 1920,
                 kE5 = -17253.0 / 339200, kE6 = 22.0 / 525, kE7 = -1.0 / 40;
// Quartic dense-output polynomial coefficients per stage:
// y(t + theta*h) = y + h * sum_s k_s * sum_j P[s][j] * theta^(j+1).
constexpr double kP[7][4] = {
    {1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0,
     -12715105075.0 / 11282082432.0},
    {0.0, 0.0, 0.0, 0.0},
    {0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0,
     87487479700.0 / 32700410799.0},
    {0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0,
     -10690763975.0 / 1880347072.0},
    {0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0,
     701980252875.0 / 199316789632.0},
    {0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0,
     -1453857185.0 / 822651844.0},
    {0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0,
     69997945.0 / 29380423.0}};

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;

// rhs with the input value supplied explicitly: (t, y, s, dy).
using RhsWithInput = std::function<void(double, const Eigen::VectorXd&, double,
                                        Eigen::VectorXd&)>;

double scaled_rms(const Eigen::VectorXd& v, const Eigen::VectorXd& scale) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double q = v[i] / scale[i];
    acc += q * q;
  }
  return std::sqrt(acc / static_cast<double>(v.size()));
}

/// First-step heuristic: match the local error of an explicit Euler probe to
/// the tolerance, then cap conservatively.
double initial_step(const std::function<void(double, const Eigen::VectorXd&,
                                             Eigen::VectorXd&)>& rhs,
                    double t0, const Eigen::VectorXd& y0,
                    const Eigen::VectorXd& f0, double seg_len,
                    const IntegratorOptions& opts) {
  Eigen::VectorXd scale =
      (opts.atol + opts.rtol * y0.array().abs()).matrix();
  const double d0 = scaled_rms(y0, scale);
  const double d1 = scaled_rms(f0, scale);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, seg_len);

  Eigen::VectorXd y1 = y0 + h0 * f0;
  Eigen::VectorXd f1(y0.size());
  rhs(t0 + h0, y1, f1);
  const double d2 = scaled_rms(f1 - f0, scale) / h0;

  double h1;
  if (d1 <= 1e-15 && d2 <= 1e-15) {
    h1 = std::max(1e-6, h0 * 1e-3);
  } else {
    h1 = std::pow(0.01 / std::max(d1, d2), 0.2);
  }
  return std::min({100.0 * h0, h1, seg_len, opts.max_step});
}

/// Integrate dy/dt = rhs(t, y, s(t)) from t_begin to the last entry of
/// `boundaries`, restarting at every boundary. For sampled inputs the input
/// value is frozen per segment (it is constant there by construction); for
/// smooth inputs it is evaluated at every stage time. States at `t_eval` are
/// written to `out` via the 4th-order dense interpolant.
void integrate_core(const RhsWithInput& rhs, const InputSource& input,
                    Eigen::VectorXd& y, double t_begin,
                    const std::vector<double>& boundaries,
                    const std::vector<double>& t_eval,
                    const IntegratorOptions& opts, Eigen::MatrixXd& out) {
  const Eigen::Index dim = y.size();
  Eigen::VectorXd k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim),
      k7(dim), ytmp(dim), ynew(dim), yerr(dim);

  const bool sampled = input.is_sampled();
  double s_seg = 0.0;
  auto eval_rhs = [&](double t, const Eigen::VectorXd& yv, Eigen::VectorXd& dyv) {
    rhs(t, yv, sampled ? s_seg : input.value(t), dyv);
  };

  std::size_t eval_idx = 0;
  while (eval_idx < t_eval.size() && t_eval[eval_idx] <= t_begin) {
    out.row(eval_idx) = y.transpose();
    ++eval_idx;
  }

  std::size_t steps = 0;
  double h = 0.0;
  bool have_h = false;
  double a = t_begin;
  for (double b : boundaries) {
    if (!(b > a)) continue;
    if (sampled) s_seg = input.value(a);  // held value over [a, b)
    eval_rhs(a, y, k1);
    if (!have_h) {
      h = initial_step(eval_rhs, a, y, k1, b - a, opts);
      have_h = true;
    }
    h = std::min({h, b - a, opts.max_step});

    double t = a;
    bool rejected_last = false;
    while (t < b) {
      if (++steps > opts.max_steps)
        throw IntegrationError(t, "step budget exceeded");
      bool hit_end = false;
      if (h >= b - t) {
        h = b - t;
        hit_end = true;
      }

      ytmp = y + h * (kA21 * k1);
      eval_rhs(t + kC2 * h, ytmp, k2);
      ytmp = y + h * (kA31 * k1 + kA32 * k2);
      eval_rhs(t + kC3 * h, ytmp, k3);
      ytmp = y + h * (kA41 * k1 + kA42 * k2 + kA43 * k3);
      eval_rhs(t + kC4 * h, ytmp, k4);
      ytmp = y + h * (kA51 * k1 + kA52 * k2 + kA53 * k3 + kA54 * k4);
      eval_rhs(t + kC5 * h, ytmp, k5);
      ytmp = y + h * (kA61 * k1 + kA62 * k2 + kA63 * k3 + kA64 * k4 + kA65 * k5);
      eval_rhs(t + h, ytmp, k6);
      ynew = y + h * (kA71 * k1 + kA73 * k3 + kA74 * k4 + kA75 * k5 + kA76 * k6);
      eval_rhs(t + h, ynew, k7);
      yerr = h * (kE1 * k1 + kE3 * k3 + kE4 * k4 + kE5 * k5 + kE6 * k6 + kE7 * k7);

      double err = 0.0;
      bool finite = true;
      for (Eigen::Index i = 0; i < dim; ++i) {
        if (!std::isfinite(ynew[i])) {
          finite = false;
          break;
        }
        if (std::abs(ynew[i]) > opts.state_bound)
          throw IntegrationError(t, "state bound exceeded");
        const double sc =
            opts.atol + opts.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
        const double q = yerr[i] / sc;
        err += q * q;
      }
      err = std::sqrt(err / static_cast<double>(dim));
      if (!std::isfinite(err)) finite = false;

      if (finite && err <= 1.0) {
        const double t_new = hit_end ? b : t + h;
        while (eval_idx < t_eval.size() && t_eval[eval_idx] <= t_new) {
          const double theta =
              std::clamp((t_eval[eval_idx] - t) / h, 0.0, 1.0);
          const double th2 = theta * theta;
          const double th3 = th2 * theta;
          const double th4 = th3 * theta;
          auto weight = [&](int s) {
            return kP[s][0] * theta + kP[s][1] * th2 + kP[s][2] * th3 +
                   kP[s][3] * th4;
          };
          out.row(eval_idx) =
              (y + h * (weight(0) * k1 + weight(2) * k3 + weight(3) * k4 +
                        weight(4) * k5 + weight(5) * k6 + weight(6) * k7))
                  .transpose();
          ++eval_idx;
        }
        t = t_new;
        y.swap(ynew);
        k1.swap(k7);  // first-same-as-last within a smooth segment
        double factor = err == 0.0 ? kMaxFactor
                                   : std::min(kMaxFactor,
                                              kSafety * std::pow(err, -0.2));
        factor = std::max(factor, kMinFactor);
        if (rejected_last) factor = std::min(factor, 1.0);
        rejected_last = false;
        h = std::min(h * factor, opts.max_step);
      } else {
        const double factor =
            finite ? std::max(kMinFactor, kSafety * std::pow(err, -0.2)) : 0.5;
        h *= factor;
        rejected_last = true;
        const double h_floor = std::max(
            1e-14, 16.0 * std::numeric_limits<double>::epsilon() * std::abs(t));
        if (h < h_floor)
          throw IntegrationError(
              t, finite ? "step size underflow" : "non-finite state");
      }
    }
    a = b;
  }

  // Any remaining requests can only sit at the final time up to roundoff.
  while (eval_idx < t_eval.size()) {
    if (t_eval[eval_idx] > boundaries.back() + 1e-12)
      throw std::logic_error("evaluation time beyond integration span");
    out.row(eval_idx) = y.transpose();
    ++eval_idx;
  }
}

void validate_t_eval(const std::vector<double>& t_eval,
                     const InputSource& input) {
  if (t_eval.empty())
    throw std::invalid_argument("evaluation time list must not be empty");
  if (!(t_eval.front() >= 0.0))
    throw std::invalid_argument("evaluation times must start at t >= 0");
  for (std::size_t i = 1; i < t_eval.size(); ++i) {
    if (!(t_eval[i] > t_eval[i - 1]))
      throw std::invalid_argument(
          "evaluation times must be strictly increasing");
  }
  if (!std::isfinite(t_eval.back()))
    throw std::invalid_argument("evaluation times must be finite");
  if (const auto end = input.domain_end()) {
    if (t_eval.back() > *end) {
      std::ostringstream msg;
      msg << "evaluation time " << t_eval.back()
          << " exceeds the input domain end " << *end;
      throw std::invalid_argument(msg.str());
    }
  }
}

std::vector<double> segment_boundaries(const InputSource& input, double t_end) {
  std::vector<double> boundaries = input.switch_times(0.0, t_end);
  boundaries.push_back(t_end);
  return boundaries;
}

}  // namespace

// ===========================================================================
// Public integration entry points
// ===========================================================================

Trajectory integrate(const ModelSpec& model, const Eigen::VectorXd& p,
                     const InputSource& input,
                     const std::vector<double>& t_eval,
                     const IntegratorOptions& opts) {
  model.validate();
  if (p.size() != model.param_dim)
    throw std::invalid_argument("parameter vector has wrong dimension");
  validate_t_eval(t_eval, input);

  const Eigen::Index n = static_cast<Eigen::Index>(t_eval.size());
  Trajectory traj;
  traj.times = Eigen::Map<const Eigen::VectorXd>(t_eval.data(), n);
  traj.states.resize(n, model.state_dim);

  Eigen::VectorXd y = model.initial_state;
  auto rhs = [&model, &p](double t, const Eigen::VectorXd& yv, double s,
                          Eigen::VectorXd& dyv) {
    model.rhs(t, yv, p, s, dyv);
  };
  integrate_core(rhs, input, y, 0.0, segment_boundaries(input, t_eval.back()),
                 t_eval, opts, traj.states);
  return traj;
}

Trajectory integrate_with_sensitivities(const ModelSpec& model,
                                        const Eigen::VectorXd& p,
                                        const InputSource& input,
                                        const std::vector<double>& t_eval,
                                        const IntegratorOptions& opts) {
  model.validate();
  if (p.size() != model.param_dim)
    throw std::invalid_argument("parameter vector has wrong dimension");
  validate_t_eval(t_eval, input);

  const int dy = model.state_dim;
  const int dp = model.param_dim;
  const Eigen::Index dim = static_cast<Eigen::Index>(dy) * (1 + dp);
  const Eigen::Index n = static_cast<Eigen::Index>(t_eval.size());

  Eigen::VectorXd yaug = Eigen::VectorXd::Zero(dim);
  yaug.head(dy) = model.initial_state;
  Eigen::MatrixXd out(n, dim);

  Eigen::MatrixXd jy(dy, dy), jp(dy, dp);
  auto rhs = [&](double t, const Eigen::VectorXd& ya, double s,
                 Eigen::VectorXd& dya) {
    Eigen::Map<const Eigen::VectorXd> yv(ya.data(), dy);
    Eigen::Map<const Eigen::MatrixXd> z(ya.data() + dy, dy, dp);
    Eigen::Map<Eigen::VectorXd> dyv(dya.data(), dy);
    Eigen::Map<Eigen::MatrixXd> dz(dya.data() + dy, dy, dp);
    model.rhs(t, yv, p, s, dyv);
    model.rhs_jac_y(t, yv, p, s, jy);
    model.rhs_jac_p(t, yv, p, s, jp);
    dz.noalias() = jy * z;
    dz += jp;
  };
  integrate_core(rhs, input, yaug, 0.0,
                 segment_boundaries(input, t_eval.back()), t_eval, opts, out);

  Trajectory traj;
  traj.times = Eigen::Map<const Eigen::VectorXd>(t_eval.data(), n);
  traj.states = out.leftCols(dy);
  traj.sensitivities.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::MatrixXd z(dy, dp);
    for (int k = 0; k < dp; ++k)
      for (int j = 0; j < dy; ++j) z(j, k) = out(i, dy + k * dy + j);
    traj.sensitivities[static_cast<std::size_t>(i)] = std::move(z);
  }
  return traj;
}

// ===========================================================================
// Jacobian self-test
// ===========================================================================

JacobianCheckResult check_jacobians(const ModelSpec& model,
                                    const JacobianCheckDomain& domain,
                                    int n_points, std::uint64_t seed) {
  model.validate();
  if (n_points < 1) throw std::invalid_argument("n_points must be >= 1");

  const int dy = model.state_dim;
  const int dp = model.param_dim;
  auto box = [&](const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int dim,
                 const char* what) {
    std::pair<Eigen::VectorXd, Eigen::VectorXd> b;
    if (lo.size() == 0 && hi.size() == 0) {
      b.first = Eigen::VectorXd::Constant(dim, 0.2);
      b.second = Eigen::VectorXd::Constant(dim, 2.0);
    } else if (lo.size() == dim && hi.size() == dim) {
      b = {lo, hi};
    } else {
      throw std::invalid_argument(std::string("jacobian check domain for ") +
                                  what + " has wrong dimension");
    }
    return b;
  };
  const auto [y_lo, y_hi] = box(domain.y_min, domain.y_max, dy, "y");
  const auto [p_lo, p_hi] = box(domain.p_min, domain.p_max, dp, "p");

  Rng rng(seed);
  JacobianCheckResult res;
  Eigen::VectorXd y(dy), p(dp), up(dy), down(dy), probe;
  Eigen::MatrixXd jac_y(dy, dy), jac_p(dy, dp);

  auto record = [&](double analytic, double fd, const char* which, int row,
                    int col, int point) {
    const double rel = std::abs(analytic - fd) /
                       std::max({std::abs(analytic), std::abs(fd), 1.0});
    if (rel > res.max_relative_error) {
      res.max_relative_error = rel;
      std::ostringstream label;
      label << which << "(" << row << "," << col << ") at point #" << point;
      res.worst_entry = label.str();
    }
  };

  for (int pt = 0; pt < n_points; ++pt) {
    const double t = rng.uniform(domain.t_min, domain.t_max);
    const double s = domain.s_min == domain.s_max
                         ? domain.s_min
                         : rng.uniform(domain.s_min, domain.s_max);
    for (int i = 0; i < dy; ++i) y[i] = rng.uniform(y_lo[i], y_hi[i]);
    for (int i = 0; i < dp; ++i) p[i] = rng.uniform(p_lo[i], p_hi[i]);

    model.rhs_jac_y(t, y, p, s, jac_y);
    probe = y;
    for (int k = 0; k < dy; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(y[k]));
      probe[k] = y[k] + h;
      model.rhs(t, probe, p, s, up);
      probe[k] = y[k] - h;
      model.rhs(t, probe, p, s, down);
      probe[k] = y[k];
      for (int i = 0; i < dy; ++i)
        record(jac_y(i, k), (up[i] - down[i]) / (2.0 * h), "dF/dy", i, k, pt);
    }

    model.rhs_jac_p(t, y, p, s, jac_p);
    probe = p;
    for (int k = 0; k < dp; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(p[k]));
      probe[k] = p[k] + h;
      model.rhs(t, y, probe, s, up);
      probe[k] = p[k] - h;
      model.rhs(t, y, probe, s, down);
      probe[k] = p[k];
      for (int i = 0; i < dy; ++i)
        record(jac_p(i, k), (up[i] - down[i]) / (2.0 * h), "dF/dp", i, k, pt);
    }
  }
  return res;
}

// ===========================================================================
// Trajectory export / quadrature
// ===========================================================================

std::string Trajectory::to_csv() const {
  const Eigen::Index n = times.size();
  const Eigen::Index dy = states.cols();
  const Eigen::Index dp = has_sensitivities() ? sensitivities.front().cols() : 0;

  std::string out = "t";
  for (Eigen::Index i = 0; i < dy; ++i) out += ",y" + std::to_string(i + 1);
  for (Eigen::Index j = 0; j < dp; ++j)
    for (Eigen::Index i = 0; i < dy; ++i)
      out += ",z_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
  out += '\n';

  for (Eigen::Index r = 0; r < n; ++r) {
    out += format_double(times[r]);
    for (Eigen::Index i = 0; i < dy; ++i) {
      out += ',';
      out += format_double(states(r, i));
    }
    if (has_sensitivities()) {
      const auto& z = sensitivities[static_cast<std::size_t>(r)];
      for (Eigen::Index j = 0; j < dp; ++j)
        for (Eigen::Index i = 0; i < dy; ++i) {
          out += ',';
          out += format_double(z(i, j));
        }
    }
    out += '\n';
  }
  return out;
}

double l2_norm_quadrature(const std::function<double(double)>& squared_value,
                          double a, double b, int grid_points) {
  if (!(b > a)) throw std::invalid_argument("quadrature needs b > a");
  if (grid_points < 3 || grid_points % 2 == 0)
    throw std::invalid_argument("quadrature grid must have an odd size >= 3");
  const double h = (b - a) / static_cast<double>(grid_points - 1);
  double acc = squared_value(a) + squared_value(b);
  for (int i = 1; i < grid_points - 1; ++i) {
    const double w = (i % 2 == 1) ? 4.0 : 2.0;
    acc += w * squared_value(a + h * static_cast<double>(i));
  }
  return std::sqrt(std::max(0.0, acc * h / 3.0));
}

}  // namespace hadesfit
