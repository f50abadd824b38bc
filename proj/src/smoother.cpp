#include "hadesfit/smoother.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace hadesfit {

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

double elu_derivative(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

void SmootherNet::Architecture::validate() const {
  if (cosine_units < 1 || hidden_layers < 1 || hidden_units < 1)
    throw std::invalid_argument("network architecture dimensions must be >= 1");
}

SmootherNet::SmootherNet(Architecture arch, double time_begin, double time_end)
    : arch_(arch), time_begin_(time_begin), time_end_(time_end) {
  arch_.validate();
  if (!(time_end_ > time_begin_))
    throw std::invalid_argument("network time domain must have positive length");
  params_ = Eigen::VectorXd::Zero(output_bias_offset() + 1);
}

Eigen::Index SmootherNet::layer_weight_offset(int layer) const {
  Eigen::Index off = 3 * arch_.cosine_units;
  for (int k = 0; k < layer; ++k)
    off += arch_.hidden_units * (layer_input_dim(k) + 1);
  return off;
}

Eigen::Index SmootherNet::layer_bias_offset(int layer) const {
  return layer_weight_offset(layer) +
         arch_.hidden_units * layer_input_dim(layer);
}

Eigen::Index SmootherNet::output_weight_offset() const {
  return layer_weight_offset(arch_.hidden_layers);
}

Eigen::Index SmootherNet::output_bias_offset() const {
  return output_weight_offset() + arch_.hidden_units;
}

void SmootherNet::initialize(Rng& rng, double target_mean,
                             double target_scale) {
  const int c = arch_.cosine_units;
  const int h = arch_.hidden_units;
  params_.setZero();
  target_shift_ = target_mean;
  target_scale_ = target_scale > 0.0 ? target_scale : 1.0;

  // Frequencies log-spaced over [pi, 16*pi] in normalized time, i.e. from
  // one oscillation per domain up to sixteen.
  for (int l = 0; l < c; ++l) {
    const double frac = c > 1 ? static_cast<double>(l) / (c - 1) : 0.0;
    params_[omega_offset() + l] = M_PI * std::pow(16.0, frac);
  }
  for (int l = 0; l < c; ++l)
    params_[phi_offset() + l] = rng.uniform(0.0, 2.0 * M_PI);
  for (int l = 0; l < c; ++l) params_[scale_offset() + l] = 1.0;

  for (int k = 0; k < arch_.hidden_layers; ++k) {
    const int in = layer_input_dim(k);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    const Eigen::Index w_off = layer_weight_offset(k);
    for (int i = 0; i < h * in; ++i)
      params_[w_off + i] = rng.uniform(-bound, bound);
    // biases stay zero
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (int i = 0; i < h; ++i)
    params_[output_weight_offset() + i] = rng.uniform(-bound, bound);
  // The output bias stays zero: the conditioning shift already places the
  // initial prediction at the target mean.
}

void SmootherNet::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != params_.size())
    throw std::invalid_argument("parameter vector has wrong length");
  params_ = p;
}

double SmootherNet::forward(double t) const {
  thread_local Eigen::VectorXd h_buf;
  thread_local Eigen::VectorXd a_buf;

  const int c = arch_.cosine_units;
  const int h = arch_.hidden_units;
  const double u = normalize_time(t);

  h_buf.resize(std::max(c, h));
  a_buf.resize(h);

  const double* prm = params_.data();
  for (int l = 0; l < c; ++l) {
    h_buf[l] = prm[scale_offset() + l] *
               std::cos(prm[omega_offset() + l] * u + prm[phi_offset() + l]);
  }
  int in = c;
  for (int k = 0; k < arch_.hidden_layers; ++k) {
    Eigen::Map<const Eigen::MatrixXd> w(prm + layer_weight_offset(k), h, in);
    Eigen::Map<const Eigen::VectorXd> b(prm + layer_bias_offset(k), h);
    a_buf.noalias() = w * h_buf.head(in);
    a_buf += b;
    for (int i = 0; i < h; ++i) h_buf[i] = elu(a_buf[i]);
    in = h;
  }
  Eigen::Map<const Eigen::VectorXd> w_out(prm + output_weight_offset(), h);
  const double raw = w_out.dot(h_buf.head(h)) + prm[output_bias_offset()];
  return target_shift_ + target_scale_ * raw;
}

Eigen::VectorXd SmootherNet::forward(const Eigen::VectorXd& times) const {
  Eigen::VectorXd out(times.size());
  for (Eigen::Index i = 0; i < times.size(); ++i) out[i] = forward(times[i]);
  return out;
}

// ===========================================================================
// Batch forward/backward used by training and the gradient check
// ===========================================================================

namespace {

struct BatchCache {
  Eigen::VectorXd u;          // normalized sample times
  Eigen::RowVectorXd target;  // signal samples
  Eigen::MatrixXd arg;        // cosine arguments, C x M
  Eigen::MatrixXd cosv;       // cos(arg)
  Eigen::MatrixXd h0;         // cosine bank output
  std::vector<Eigen::MatrixXd> a;  // pre-activations per layer
  std::vector<Eigen::MatrixXd> h;  // activations per layer
  Eigen::RowVectorXd out;          // raw network output (before conditioning)
  Eigen::RowVectorXd res;          // conditioned prediction minus target
  // backward scratch
  Eigen::MatrixXd delta;
  Eigen::MatrixXd delta_prev;
};

}  // namespace

struct SmootherBackprop {
  static void prepare(const SmootherNet& net, const Signal& sig,
                      BatchCache& c) {
    const Eigen::Index m = static_cast<Eigen::Index>(sig.times.size());
    c.u.resize(m);
    c.target.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      c.u[i] = net.normalize_time(sig.times[static_cast<std::size_t>(i)]);
      c.target[i] = sig.values[static_cast<std::size_t>(i)];
    }
  }

  static double forward(const SmootherNet& net, BatchCache& c) {
    const auto& p = net.params_;
    const int cu = net.arch_.cosine_units;
    const int hu = net.arch_.hidden_units;
    const int nl = net.arch_.hidden_layers;
    const Eigen::Index m = c.u.size();

    Eigen::Map<const Eigen::VectorXd> omega(p.data() + net.omega_offset(), cu);
    Eigen::Map<const Eigen::VectorXd> phi(p.data() + net.phi_offset(), cu);
    Eigen::Map<const Eigen::VectorXd> scale(p.data() + net.scale_offset(), cu);

    c.arg.noalias() = omega * c.u.transpose();
    c.arg.colwise() += phi;
    c.cosv = c.arg.array().cos().matrix();
    c.h0 = scale.asDiagonal() * c.cosv;

    c.a.resize(static_cast<std::size_t>(nl));
    c.h.resize(static_cast<std::size_t>(nl));
    const Eigen::MatrixXd* prev = &c.h0;
    for (int k = 0; k < nl; ++k) {
      const int in = net.layer_input_dim(k);
      Eigen::Map<const Eigen::MatrixXd> w(p.data() + net.layer_weight_offset(k),
                                          hu, in);
      Eigen::Map<const Eigen::VectorXd> b(p.data() + net.layer_bias_offset(k),
                                          hu);
      auto& ak = c.a[static_cast<std::size_t>(k)];
      auto& hk = c.h[static_cast<std::size_t>(k)];
      ak.noalias() = w * (*prev);
      ak.colwise() += b;
      // elu(x) = max(x, 0) + expm1(min(x, 0)), overflow-free elementwise
      hk = (ak.array().max(0.0) + (ak.array().min(0.0).exp() - 1.0)).matrix();
      prev = &hk;
    }

    Eigen::Map<const Eigen::VectorXd> w_out(
        p.data() + net.output_weight_offset(), hu);
    c.out.noalias() = w_out.transpose() * (*prev);
    c.out.array() += p[net.output_bias_offset()];

    // Loss is kept in the target's original units.
    c.res = net.target_scale_ * c.out;
    c.res.array() += net.target_shift_;
    c.res -= c.target;
    return c.res.squaredNorm() / static_cast<double>(m);
  }

  static double loss_and_grad(const SmootherNet& net, BatchCache& c,
                              Eigen::VectorXd& grad) {
    const double loss = forward(net, c);

    const auto& p = net.params_;
    const int cu = net.arch_.cosine_units;
    const int hu = net.arch_.hidden_units;
    const int nl = net.arch_.hidden_layers;
    const Eigen::Index m = c.u.size();

    grad.setZero(p.size());

    // d(loss)/d(raw out); the conditioning scale enters via the chain rule.
    const Eigen::RowVectorXd dout =
        c.res * (2.0 * net.target_scale_ / static_cast<double>(m));

    grad[net.output_bias_offset()] = dout.sum();
    const Eigen::MatrixXd& h_last = nl > 0
                                        ? c.h[static_cast<std::size_t>(nl - 1)]
                                        : c.h0;
    Eigen::Map<Eigen::VectorXd>(grad.data() + net.output_weight_offset(), hu)
        .noalias() = h_last * dout.transpose();

    Eigen::Map<const Eigen::VectorXd> w_out(
        p.data() + net.output_weight_offset(), hu);
    c.delta.noalias() = w_out * dout;  // gradient flowing into h[last]

    for (int k = nl - 1; k >= 0; --k) {
      const int in = net.layer_input_dim(k);
      const auto& ak = c.a[static_cast<std::size_t>(k)];
      // elu'(x) = exp(min(x, 0)): 1 on the linear branch, exp(x) below 0.
      c.delta.array() *= ak.array().min(0.0).exp();

      const Eigen::MatrixXd& below =
          k > 0 ? c.h[static_cast<std::size_t>(k - 1)] : c.h0;
      Eigen::Map<Eigen::MatrixXd>(grad.data() + net.layer_weight_offset(k), hu,
                                  in)
          .noalias() = c.delta * below.transpose();
      Eigen::Map<Eigen::VectorXd>(grad.data() + net.layer_bias_offset(k), hu) =
          c.delta.rowwise().sum();

      Eigen::Map<const Eigen::MatrixXd> w(p.data() + net.layer_weight_offset(k),
                                          hu, in);
      c.delta_prev.noalias() = w.transpose() * c.delta;
      c.delta.swap(c.delta_prev);
    }

    // Cosine bank: h0 = scale .* cos(omega*u + phi), c.delta is dL/dh0.
    Eigen::Map<const Eigen::VectorXd> scale(p.data() + net.scale_offset(), cu);
    Eigen::Map<Eigen::VectorXd>(grad.data() + net.scale_offset(), cu) =
        (c.delta.array() * c.cosv.array()).rowwise().sum().matrix();
    // dL/darg = -delta .* scale .* sin(arg)
    const Eigen::MatrixXd darg =
        (-(c.delta.array().colwise() * scale.array()) * c.arg.array().sin())
            .matrix();
    Eigen::Map<Eigen::VectorXd>(grad.data() + net.phi_offset(), cu) =
        darg.rowwise().sum();
    Eigen::Map<Eigen::VectorXd>(grad.data() + net.omega_offset(), cu)
        .noalias() = darg * c.u;

    return loss;
  }
};

double SmootherNet::mse(const Signal& target) const {
  target.validate();
  BatchCache cache;
  SmootherBackprop::prepare(*this, target, cache);
  return SmootherBackprop::forward(*this, cache);
}

double SmootherNet::mse_gradient(const Signal& target,
                                 Eigen::VectorXd& grad) const {
  target.validate();
  BatchCache cache;
  SmootherBackprop::prepare(*this, target, cache);
  return SmootherBackprop::loss_and_grad(*this, cache, grad);
}

// ===========================================================================
// Training
// ===========================================================================

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("training epochs must be >= 1");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("learning rate must be > 0");
}

TrainingError::TrainingError(int epoch_arg, double loss_arg)
    : std::runtime_error(
          [&] {
            std::ostringstream msg;
            msg << "stage-1 training diverged at epoch " << epoch_arg
                << " (objective=" << loss_arg << ")";
            return msg.str();
          }()),
      epoch(epoch_arg),
      loss(loss_arg) {}

std::vector<double> train_stage1(SmootherNet& net, const Signal& signal,
                                 const TrainConfig& cfg) {
  AdamState state;
  return train_stage1(net, signal, cfg, state);
}

std::vector<double> train_stage1(SmootherNet& net, const Signal& signal,
                                 const TrainConfig& cfg, AdamState& state) {
  cfg.validate();
  signal.validate();

  const Eigen::Index n = net.parameter_count();
  if (state.m.size() != n || state.v.size() != n) {
    state.m = Eigen::VectorXd::Zero(n);
    state.v = Eigen::VectorXd::Zero(n);
    state.step = 0;
  }

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  BatchCache cache;
  SmootherBackprop::prepare(net, signal, cache);

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg.epochs));
  Eigen::VectorXd grad(n);
  Eigen::VectorXd params = net.parameters();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = SmootherBackprop::loss_and_grad(net, cache, grad);
    if (!std::isfinite(loss)) throw TrainingError(epoch, loss);
    trace.push_back(loss);

    state.step += 1;
    state.m = kBeta1 * state.m + (1.0 - kBeta1) * grad;
    state.v = (kBeta2 * state.v.array() + (1.0 - kBeta2) * grad.array().square())
                  .matrix();
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
    params.array() -= cfg.learning_rate * (state.m.array() / c1) /
                      ((state.v.array() / c2).sqrt() + kEps);
    net.set_parameters(params);
  }
  return trace;
}

double analytic_gradient_check(const SmootherNet& net, const Signal& signal) {
  Eigen::VectorXd grad;
  net.mse_gradient(signal, grad);

  SmootherNet probe = net;
  Eigen::VectorXd params = net.parameters();
  constexpr double kStep = 1e-5;

  double worst = 0.0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + kStep;
    probe.set_parameters(params);
    const double up = probe.mse(signal);
    params[i] = saved - kStep;
    probe.set_parameters(params);
    const double down = probe.mse(signal);
    params[i] = saved;
    const double fd = (up - down) / (2.0 * kStep);
    const double rel =
        std::abs(grad[i] - fd) / std::max(std::abs(grad[i]), 1e-8);
    worst = std::max(worst, rel);
  }
  return worst;
}

// ===========================================================================
// Checkpointing
// ===========================================================================

std::string SmootherNet::to_json() const {
  nlohmann::json j;
  j["architecture"] = {{"cosine_units", arch_.cosine_units},
                       {"hidden_layers", arch_.hidden_layers},
                       {"hidden_units", arch_.hidden_units}};
  j["time_domain"] = {time_begin_, time_end_};
  j["target_conditioning"] = {{"shift", target_shift_},
                              {"scale", target_scale_}};

  const int c = arch_.cosine_units;
  const int h = arch_.hidden_units;
  auto segment = [&](Eigen::Index off, int len) {
    std::vector<double> v(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) v[static_cast<std::size_t>(i)] = params_[off + i];
    return v;
  };
  nlohmann::json prm;
  prm["omega"] = segment(omega_offset(), c);
  prm["phi"] = segment(phi_offset(), c);
  prm["scale"] = segment(scale_offset(), c);
  prm["hidden"] = nlohmann::json::array();
  for (int k = 0; k < arch_.hidden_layers; ++k) {
    const int in = layer_input_dim(k);
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + layer_weight_offset(k),
                                        h, in);
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < h; ++r) {
      std::vector<double> row(static_cast<std::size_t>(in));
      for (int cidx = 0; cidx < in; ++cidx)
        row[static_cast<std::size_t>(cidx)] = w(r, cidx);
      rows.push_back(row);
    }
    prm["hidden"].push_back(
        {{"weights", rows}, {"bias", segment(layer_bias_offset(k), h)}});
  }
  prm["output"] = {{"weights", segment(output_weight_offset(), h)},
                   {"bias", params_[output_bias_offset()]}};
  j["parameters"] = std::move(prm);
  return j.dump(2);
}

SmootherNet SmootherNet::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  Architecture arch;
  arch.cosine_units = j.at("architecture").at("cosine_units").get<int>();
  arch.hidden_layers = j.at("architecture").at("hidden_layers").get<int>();
  arch.hidden_units = j.at("architecture").at("hidden_units").get<int>();
  const auto domain = j.at("time_domain");
  if (!domain.is_array() || domain.size() != 2)
    throw std::invalid_argument("checkpoint time_domain must have 2 entries");

  SmootherNet net(arch, domain[0].get<double>(), domain[1].get<double>());
  if (j.contains("target_conditioning")) {
    const auto& cond = j.at("target_conditioning");
    net.target_shift_ = cond.at("shift").get<double>();
    net.target_scale_ = cond.at("scale").get<double>();
  }
  Eigen::VectorXd params = Eigen::VectorXd::Zero(net.parameter_count());

  const auto& prm = j.at("parameters");
  auto fill = [&](const nlohmann::json& arr, Eigen::Index off, int len,
                  const char* name) {
    if (!arr.is_array() || static_cast<int>(arr.size()) != len)
      throw std::invalid_argument(std::string("checkpoint field '") + name +
                                  "' has wrong length");
    for (int i = 0; i < len; ++i) params[off + i] = arr[static_cast<std::size_t>(i)].get<double>();
  };
  fill(prm.at("omega"), net.omega_offset(), arch.cosine_units, "omega");
  fill(prm.at("phi"), net.phi_offset(), arch.cosine_units, "phi");
  fill(prm.at("scale"), net.scale_offset(), arch.cosine_units, "scale");

  const auto& hidden = prm.at("hidden");
  if (!hidden.is_array() || static_cast<int>(hidden.size()) != arch.hidden_layers)
    throw std::invalid_argument("checkpoint has wrong hidden layer count");
  for (int k = 0; k < arch.hidden_layers; ++k) {
    const int in = net.layer_input_dim(k);
    const auto& layer = hidden[static_cast<std::size_t>(k)];
    const auto& rows = layer.at("weights");
    if (!rows.is_array() || static_cast<int>(rows.size()) != arch.hidden_units)
      throw std::invalid_argument("checkpoint weight matrix has wrong shape");
    Eigen::Map<Eigen::MatrixXd> w(params.data() + net.layer_weight_offset(k),
                                  arch.hidden_units, in);
    for (int r = 0; r < arch.hidden_units; ++r) {
      const auto& row = rows[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<int>(row.size()) != in)
        throw std::invalid_argument("checkpoint weight matrix has wrong shape");
      for (int cidx = 0; cidx < in; ++cidx)
        w(r, cidx) = row[static_cast<std::size_t>(cidx)].get<double>();
    }
    fill(layer.at("bias"), net.layer_bias_offset(k), arch.hidden_units, "bias");
  }
  fill(prm.at("output").at("weights"), net.output_weight_offset(),
       arch.hidden_units, "output weights");
  params[net.output_bias_offset()] = prm.at("output").at("bias").get<double>();

  net.set_parameters(params);
  return net;
}

}  // namespace hadesfit
