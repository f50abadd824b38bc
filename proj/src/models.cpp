#include "hadesfit/models.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hadesfit {

ModelSpec make_lotka_volterra() {
  ModelSpec m;
  m.state_dim = 2;
  m.param_dim = 4;
  m.initial_state = Eigen::Vector2d(1.0, 1.0);
  m.param_names = {"p1", "p2", "p3", "p4"};
  m.param_positive = {true, true, true, true};

  m.rhs = [](double, Eigen::Ref<const Eigen::VectorXd> y,
             Eigen::Ref<const Eigen::VectorXd> p, double s,
             Eigen::Ref<Eigen::VectorXd> dy) {
    dy[0] = p[0] * s * y[0] - p[2] * y[0] * y[1];
    dy[1] = -p[1] * y[1] + p[3] * y[0] * y[1];
  };
  m.rhs_jac_y = [](double, Eigen::Ref<const Eigen::VectorXd> y,
                   Eigen::Ref<const Eigen::VectorXd> p, double s,
                   Eigen::Ref<Eigen::MatrixXd> jac) {
    jac(0, 0) = p[0] * s - p[2] * y[1];
    jac(0, 1) = -p[2] * y[0];
    jac(1, 0) = p[3] * y[1];
    jac(1, 1) = -p[1] + p[3] * y[0];
  };
  m.rhs_jac_p = [](double, Eigen::Ref<const Eigen::VectorXd> y,
                   Eigen::Ref<const Eigen::VectorXd>, double s,
                   Eigen::Ref<Eigen::MatrixXd> jac) {
    jac.setZero();
    jac(0, 0) = s * y[0];
    jac(0, 2) = -y[0] * y[1];
    jac(1, 1) = -y[1];
    jac(1, 3) = y[0] * y[1];
  };
  return m;
}

Eigen::VectorXd lotka_volterra_reference_params() {
  Eigen::VectorXd p(4);
  p << 2.0, 0.5, 1.0, 1.0;
  return p;
}

ModelSpec make_circadian(const CircadianConstants& constants) {
  ModelSpec m;
  m.state_dim = 3;
  m.param_dim = 4;
  m.initial_state = Eigen::Vector3d(1.0, 1.0, 0.5);
  m.param_names = {"tau_c", "gamma", "G", "k"};
  m.param_positive = {true, true, true, true};

  const CircadianConstants c = constants;

  // States: y = (y1, y2, n); parameters: p = (tau_c, gamma, G, k).
  // alpha = alpha0 * (s/i0)^p_exp               (light conversion)
  // B     = G * alpha * (1-n)(1-b*y1)(1-b*y2)   (effective drive)
  // dy1   = (1/kappa) * (y2 + B)
  // dy2   = (1/kappa) * (gamma*(y2 - (4/3)y2^3) - y1*(q + k*B)),
  //         q = (24/(f*tau_c))^2
  // dn    = 60 * (alpha*(1-n) - beta*n)
  struct Terms {
    double alpha, bdrive, q, cinv;
  };
  auto eval_terms = [c](Eigen::Ref<const Eigen::VectorXd> y,
                        Eigen::Ref<const Eigen::VectorXd> p, double s) {
    Terms t;
    const double sv = s > 0.0 ? s : 0.0;  // light cannot be negative
    t.alpha = c.alpha0 * std::pow(sv / c.i0, c.p);
    t.bdrive = p[2] * t.alpha * (1.0 - y[2]) * (1.0 - c.b * y[0]) *
               (1.0 - c.b * y[1]);
    const double w = 24.0 / (c.f * p[0]);
    t.q = w * w;
    t.cinv = 1.0 / c.kappa;
    return t;
  };

  m.rhs = [c, eval_terms](double, Eigen::Ref<const Eigen::VectorXd> y,
                          Eigen::Ref<const Eigen::VectorXd> p, double s,
                          Eigen::Ref<Eigen::VectorXd> dy) {
    const Terms t = eval_terms(y, p, s);
    dy[0] = t.cinv * (y[1] + t.bdrive);
    dy[1] = t.cinv * (p[1] * (y[1] - (4.0 / 3.0) * y[1] * y[1] * y[1]) -
                      y[0] * (t.q + p[3] * t.bdrive));
    dy[2] = 60.0 * (t.alpha * (1.0 - y[2]) - c.beta * y[2]);
  };

  m.rhs_jac_y = [c, eval_terms](double, Eigen::Ref<const Eigen::VectorXd> y,
                                Eigen::Ref<const Eigen::VectorXd> p, double s,
                                Eigen::Ref<Eigen::MatrixXd> jac) {
    const Terms t = eval_terms(y, p, s);
    const double galpha = p[2] * t.alpha;
    const double db_dy1 = -c.b * galpha * (1.0 - y[2]) * (1.0 - c.b * y[1]);
    const double db_dy2 = -c.b * galpha * (1.0 - y[2]) * (1.0 - c.b * y[0]);
    const double db_dn = -galpha * (1.0 - c.b * y[0]) * (1.0 - c.b * y[1]);

    jac(0, 0) = t.cinv * db_dy1;
    jac(0, 1) = t.cinv * (1.0 + db_dy2);
    jac(0, 2) = t.cinv * db_dn;

    jac(1, 0) = t.cinv * (-(t.q + p[3] * t.bdrive) - y[0] * p[3] * db_dy1);
    jac(1, 1) = t.cinv * (p[1] * (1.0 - 4.0 * y[1] * y[1]) -
                          y[0] * p[3] * db_dy2);
    jac(1, 2) = t.cinv * (-y[0] * p[3] * db_dn);

    jac(2, 0) = 0.0;
    jac(2, 1) = 0.0;
    jac(2, 2) = -60.0 * (t.alpha + c.beta);
  };

  m.rhs_jac_p = [c, eval_terms](double, Eigen::Ref<const Eigen::VectorXd> y,
                                Eigen::Ref<const Eigen::VectorXd> p, double s,
                                Eigen::Ref<Eigen::MatrixXd> jac) {
    const Terms t = eval_terms(y, p, s);
    const double db_dg =
        t.alpha * (1.0 - y[2]) * (1.0 - c.b * y[0]) * (1.0 - c.b * y[1]);

    jac.setZero();
    jac(0, 2) = t.cinv * db_dg;
    // dq/dtau_c = -2q/tau_c
    jac(1, 0) = t.cinv * (y[0] * 2.0 * t.q / p[0]);
    jac(1, 1) = t.cinv * (y[1] - (4.0 / 3.0) * y[1] * y[1] * y[1]);
    jac(1, 2) = t.cinv * (-y[0] * p[3] * db_dg);
    jac(1, 3) = t.cinv * (-y[0] * t.bdrive);
    // dn/dt does not depend on any estimated parameter: row stays zero.
  };
  return m;
}

Eigen::VectorXd circadian_reference_params() {
  Eigen::VectorXd p(4);
  p << 20.0, 0.23, 20.0, 0.55;
  return p;
}

void ModelRegistry::register_model(const std::string& name, ModelSpec spec,
                                   const JacobianCheckDomain& domain) {
  if (models_.count(name))
    throw std::invalid_argument("model '" + name + "' is already registered");
  spec.validate();
  const auto check = check_jacobians(spec, domain, 25, 0xC0FFEE);
  if (!check.passed()) {
    std::ostringstream msg;
    msg << "model '" << name
        << "' rejected: analytic jacobian mismatch at " << check.worst_entry
        << " (relative error " << check.max_relative_error << ")";
    throw std::invalid_argument(msg.str());
  }
  models_.emplace(name, std::move(spec));
}

const ModelSpec& ModelRegistry::resolve(const std::string& name) const {
  const auto it = models_.find(name);
  if (it == models_.end()) {
    std::string known;
    for (const auto& [n, spec] : models_) {
      if (!known.empty()) known += ", ";
      known += n;
    }
    throw std::out_of_range("unknown model '" + name +
                            "'; registered models: " + known);
  }
  return it->second;
}

std::vector<std::string> ModelRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(models_.size());
  for (const auto& [n, spec] : models_) out.push_back(n);
  return out;
}

const ModelRegistry& ModelRegistry::builtin() {
  static const ModelRegistry registry = [] {
    ModelRegistry r;
    r.register_model("lv", make_lotka_volterra());

    JacobianCheckDomain circadian_domain;
    circadian_domain.t_min = 0.0;
    circadian_domain.t_max = 48.0;
    circadian_domain.y_min = Eigen::Vector3d(-1.5, -1.5, 0.05);
    circadian_domain.y_max = Eigen::Vector3d(1.5, 1.5, 0.95);
    circadian_domain.p_min = (Eigen::VectorXd(4) << 15.0, 0.05, 5.0, 0.1).finished();
    circadian_domain.p_max = (Eigen::VectorXd(4) << 30.0, 0.6, 40.0, 1.2).finished();
    circadian_domain.s_min = 0.0;
    circadian_domain.s_max = 2000.0;
    r.register_model("circadian", make_circadian(), circadian_domain);
    return r;
  }();
  return registry;
}

}  // namespace hadesfit
