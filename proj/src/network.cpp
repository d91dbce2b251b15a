#include "lfi/estimator.hpp"

#include "lfi/io.hpp"
#include "lfi/rng.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace lfi {

using nlohmann::json;

namespace {

// tanh through the vectorized exp; Eigen's double tanh is scalar.
void tanh_in_place(Mat& m) { m.array() = 1.0 - 2.0 / ((2.0 * m.array()).exp() + 1.0); }

void check_finite_logits(const Eigen::RowVectorXd& z) {
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (!std::isfinite(z[i]))
      throw NonFiniteError(fmt::format("non-finite network output at sample {}", i));
}

}  // namespace

std::vector<int> default_layer_sizes(int observable_dim) {
  return {observable_dim + 2, 100, 100, 100, 100, 100, 1};
}

SurrogateNetwork::SurrogateNetwork(std::vector<int> layer_sizes, double clamp)
    : sizes_(std::move(layer_sizes)), clamp_(clamp) {
  if (sizes_.size() < 2 || sizes_.front() < 3 || sizes_.back() != 1 ||
      std::any_of(sizes_.begin(), sizes_.end(), [](int n) { return n < 1; }))
    throw InvalidConfig("layer sizes must be [d+2, hidden..., 1] with d >= 1");
  if (!(clamp_ > 0.0 && clamp_ < 0.5)) throw InvalidConfig("clamp must lie in (0, 0.5)");
  layout();
}

void SurrogateNetwork::layout() {
  offsets_.clear();
  Eigen::Index off = 0;
  for (int l = 0; l < affine_count(); ++l) {
    offsets_.push_back(off);
    off += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Vec::Zero(off);
}

SurrogateNetwork SurrogateNetwork::initialized(std::vector<int> layer_sizes, std::uint64_t seed,
                                               double clamp) {
  SurrogateNetwork net(std::move(layer_sizes), clamp);
  Engine rng(seed, Stream::init);
  for (int l = 0; l < net.affine_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
    auto w = net.weight(l);
    auto b = net.bias(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = bound * (2.0 * rng.uniform() - 1.0);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = bound * (2.0 * rng.uniform() - 1.0);
  }
  return net;
}

double SurrogateNetwork::logit_limit() const { return std::log((1.0 - clamp_) / clamp_); }

void SurrogateNetwork::set_parameters(const Vec& p) {
  if (p.size() != params_.size()) throw InvalidConfig("parameter vector has the wrong length");
  params_ = p;
}

Eigen::Map<const Mat> SurrogateNetwork::weight(int l) const {
  return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}
Eigen::Map<Mat> SurrogateNetwork::weight(int l) {
  return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}
Eigen::Map<const Vec> SurrogateNetwork::bias(int l) const {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l],
          sizes_[l + 1]};
}
Eigen::Map<Vec> SurrogateNetwork::bias(int l) {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l],
          sizes_[l + 1]};
}

Mat SurrogateNetwork::make_inputs(const Mat& xs, const ParameterPoint& theta0) const {
  if (xs.rows() != observable_dim())
    throw InvalidConfig(fmt::format("network expects {} observables, got {}", observable_dim(),
                                    xs.rows()));
  Mat in(input_dim(), xs.cols());
  in.topRows(xs.rows()) = xs;
  in.row(xs.rows()).setConstant(theta0.a);
  in.row(xs.rows() + 1).setConstant(theta0.b);
  return in;
}

Mat SurrogateNetwork::make_inputs(std::span<const AugmentedSample> batch) const {
  const int d = observable_dim();
  Mat in(input_dim(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    if (s.x.size() != d)
      throw InvalidConfig(fmt::format("sample {} has {} observables, network expects {}", i,
                                      s.x.size(), d));
    const auto c = static_cast<Eigen::Index>(i);
    in.col(c).head(d) = s.x;
    in(d, c) = s.theta0.a;
    in(d + 1, c) = s.theta0.b;
  }
  return in;
}

ForwardPass SurrogateNetwork::forward_pass(const Mat& inputs, bool with_tangents) const {
  if (inputs.rows() != input_dim())
    throw InvalidConfig(fmt::format("network expects {} inputs, got {}", input_dim(), inputs.rows()));
  const int L = affine_count();
  const int d = observable_dim();
  const Eigen::Index n = inputs.cols();

  ForwardPass fp;
  fp.has_tangents = with_tangents;
  fp.act.resize(L);
  fp.act[0] = inputs;
  if (with_tangents) {
    fp.pre_tan.resize(L);
    fp.tan.resize(L);
  }

  for (int l = 0; l < L; ++l) {
    const auto W = weight(l);
    Mat u = W * fp.act[l];
    u.colwise() += bias(l);

    std::array<Mat, 2> du;
    if (with_tangents) {
      for (int j = 0; j < 2; ++j) {
        if (l == 0)
          du[j] = W.col(d + j).replicate(1, n);  // d inputs / d theta_j = unit vector
        else
          du[j].noalias() = W * fp.tan[l][j];
      }
    }

    if (l + 1 < L) {
      tanh_in_place(u);
      if (with_tangents) {
        const Mat deriv = 1.0 - u.array().square();
        for (int j = 0; j < 2; ++j) {
          fp.tan[l + 1][j] = deriv.cwiseProduct(du[j]);
          fp.pre_tan[l][j] = std::move(du[j]);
        }
      }
      fp.act[l + 1] = std::move(u);
    } else {
      fp.logit = u.row(0);
      if (with_tangents)
        for (int j = 0; j < 2; ++j) fp.dlogit[j] = du[j].row(0);
    }
  }
  return fp;
}

Vec SurrogateNetwork::backward(const ForwardPass& fp, const Eigen::RowVectorXd& d_logit,
                               const std::array<Eigen::RowVectorXd, 2>* d_theta_grad) const {
  if (d_theta_grad && !fp.has_tangents)
    throw InvalidConfig("backward: theta-gradient adjoints need a forward pass with tangents");
  const int L = affine_count();
  const int d = observable_dim();
  Vec grad = Vec::Zero(params_.size());

  Mat ubar = d_logit;
  std::array<Mat, 2> dubar;
  if (d_theta_grad)
    for (int j = 0; j < 2; ++j) dubar[j] = (*d_theta_grad)[j];

  for (int l = L - 1; l >= 0; --l) {
    const auto W = weight(l);
    Eigen::Map<Mat> dW(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
    Eigen::Map<Vec> db(grad.data() + offsets_[l] + W.size(), sizes_[l + 1]);

    dW.noalias() = ubar * fp.act[l].transpose();
    if (d_theta_grad) {
      for (int j = 0; j < 2; ++j) {
        if (l == 0)
          dW.col(d + j) += dubar[j].rowwise().sum();
        else
          dW.noalias() += dubar[j] * fp.tan[l][j].transpose();
      }
    }
    db = ubar.rowwise().sum();
    if (l == 0) break;

    // act[l] = tanh(u_{l-1}); tan[l] = (1 - act^2) * pre_tan[l-1]
    const auto& a = fp.act[l];
    const Mat deriv = 1.0 - a.array().square();
    Mat abar = W.transpose() * ubar;
    if (d_theta_grad) {
      for (int j = 0; j < 2; ++j) {
        const Mat tbar = W.transpose() * dubar[j];
        abar.array() -= 2.0 * tbar.array() * a.array() * fp.pre_tan[l - 1][j].array();
        dubar[j] = deriv.cwiseProduct(tbar);
      }
    }
    ubar = deriv.cwiseProduct(abar);
  }
  return grad;
}

double SurrogateNetwork::forward(const Vec& x, const ParameterPoint& theta0) const {
  const ForwardPass fp = forward_pass(make_inputs(x, theta0), false);
  check_finite_logits(fp.logit);
  return std::clamp(logistic(fp.logit[0]), clamp_, 1.0 - clamp_);
}

DualEvaluation SurrogateNetwork::dual(const Vec& x, const ParameterPoint& theta0,
                                      bool with_weight_adjoints) const {
  const ForwardPass fp = forward_pass(make_inputs(x, theta0), true);
  check_finite_logits(fp.logit);
  DualEvaluation out;
  out.logit = fp.logit[0];
  out.dlogit_dtheta = Vec2(fp.dlogit[0][0], fp.dlogit[1][0]);
  const double s = logistic(out.logit);
  const double ds = s * (1.0 - s);
  out.s_hat = std::clamp(s, clamp_, 1.0 - clamp_);
  out.ds_dtheta = ds * out.dlogit_dtheta;

  if (with_weight_adjoints) {
    const Eigen::RowVectorXd one = Eigen::RowVectorXd::Ones(1);
    const Eigen::RowVectorXd zero = Eigen::RowVectorXd::Zero(1);
    const Vec dz = backward(fp, one, nullptr);
    out.s_hat_adjoint = ds * dz;
    Eigen::Matrix<double, Eigen::Dynamic, 2> jac(dz.size(), 2);
    for (int j = 0; j < 2; ++j) {
      std::array<Eigen::RowVectorXd, 2> seed{zero, zero};
      seed[j] = one;
      const Vec dg = backward(fp, zero, &seed);
      jac.col(j) = ds * (1.0 - 2.0 * s) * out.dlogit_dtheta[j] * dz + ds * dg;
    }
    out.ds_dtheta_adjoint = std::move(jac);
  }
  return out;
}

Vec2 SurrogateNetwork::estimator_score(const Vec& x, const ParameterPoint& theta0) const {
  return -dual(x, theta0).dlogit_dtheta;
}

Vec SurrogateNetwork::log_ratio(const Mat& xs, const ParameterPoint& theta0) const {
  const ForwardPass fp = forward_pass(make_inputs(xs, theta0), false);
  check_finite_logits(fp.logit);
  const double lim = logit_limit();
  return -fp.logit.transpose().array().max(-lim).min(lim);
}

// --- losses ------------------------------------------------------------------------

LossGradient loss_gradients(const SurrogateNetwork& net, std::span<const AugmentedSample> batch,
                            const LossConfig& config) {
  if (batch.empty()) throw InvalidConfig("loss_gradients: empty batch");
  config.validate();
  const bool score = score_bearing(config.kind);
  const ForwardPass fp = net.forward_pass(net.make_inputs(batch), score);
  check_finite_logits(fp.logit);
  if (score)
    for (const auto& g : fp.dlogit) check_finite_logits(g);

  const LossAdjoints adj =
      loss_adjoints(batch, fp.logit, score ? &fp.dlogit : nullptr, config, net.clamp());
  if (!std::isfinite(adj.loss)) throw NonFiniteError("non-finite loss value");

  LossGradient out;
  out.loss = adj.loss;
  out.ratio_clamps = adj.ratio_clamps;
  out.output_clamps = adj.output_clamps;
  out.gradient = net.backward(fp, adj.d_logit, score ? &adj.d_theta_grad : nullptr);
  if (!out.gradient.allFinite()) {
    // Locate the first offending sample for the diagnostic.
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const LossGradient one = loss_gradients(net, batch.subspan(i, 1), config);
      if (!one.gradient.allFinite())
        throw NonFiniteError(fmt::format("non-finite gradient at sample {}", i));
    }
    throw NonFiniteError("non-finite gradient");
  }
  return out;
}

double evaluate_loss(const SurrogateNetwork& net, std::span<const AugmentedSample> batch,
                     const LossConfig& config, std::size_t* ratio_clamps) {
  if (batch.empty()) throw InvalidConfig("evaluate_loss: empty batch");
  const bool score = score_bearing(config.kind);
  const ForwardPass fp = net.forward_pass(net.make_inputs(batch), score);
  check_finite_logits(fp.logit);
  const LossAdjoints adj =
      loss_adjoints(batch, fp.logit, score ? &fp.dlogit : nullptr, config, net.clamp());
  if (ratio_clamps) *ratio_clamps += adj.ratio_clamps;
  return adj.loss;
}

// --- model files -------------------------------------------------------------------

std::string model_to_json(const Model& model) {
  const SurrogateNetwork& net = model.net;
  nlohmann::ordered_json j;
  j["layer_sizes"] = net.layer_sizes();
  json weights = json::array();
  json biases = json::array();
  for (int l = 0; l < net.affine_count(); ++l) {
    const auto W = net.weight(l);
    json rows = json::array();
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(W.cols()));
      for (Eigen::Index c = 0; c < W.cols(); ++c) row[static_cast<std::size_t>(c)] = W(r, c);
      rows.push_back(row);
    }
    weights.push_back(rows);
    const auto b = net.bias(l);
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  j["weights"] = weights;
  j["biases"] = biases;
  j["activation"] = "tanh";
  j["output"] = "logistic";
  j["clamp"] = net.clamp();
  const ModelMetadata& m = model.meta;
  j["training"] = {{"loss", m.loss},
                   {"alpha", m.alpha},
                   {"hybrid_lambda", m.hybrid_lambda},
                   {"seed", m.seed},
                   {"dataset_hash", m.dataset_hash},
                   {"simulator_hash", m.simulator_hash},
                   {"theta1_ref", {m.theta1_ref.a, m.theta1_ref.b}},
                   {"epochs_run", m.epochs_run},
                   {"best_epoch", m.best_epoch},
                   {"best_validation_loss", m.best_validation_loss}};
  return j.dump(1);
}

Model model_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("activation").get<std::string>() != "tanh")
      throw ParseError("model: only tanh activations are supported");
    Model model;
    model.net = SurrogateNetwork(j.at("layer_sizes").get<std::vector<int>>(),
                                 j.at("clamp").get<double>());
    SurrogateNetwork& net = model.net;
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (static_cast<int>(weights.size()) != net.affine_count() ||
        static_cast<int>(biases.size()) != net.affine_count())
      throw ParseError("model: layer count does not match layer_sizes");
    for (int l = 0; l < net.affine_count(); ++l) {
      auto W = net.weight(l);
      const auto& rows = weights[static_cast<std::size_t>(l)];
      if (static_cast<Eigen::Index>(rows.size()) != W.rows())
        throw ParseError(fmt::format("model: weight matrix {} has the wrong shape", l));
      for (Eigen::Index r = 0; r < W.rows(); ++r) {
        const auto row = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != W.cols())
          throw ParseError(fmt::format("model: weight matrix {} has the wrong shape", l));
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = row[static_cast<std::size_t>(c)];
      }
      const auto b = biases[static_cast<std::size_t>(l)].get<std::vector<double>>();
      auto bias = net.bias(l);
      if (static_cast<Eigen::Index>(b.size()) != bias.size())
        throw ParseError(fmt::format("model: bias {} has the wrong length", l));
      bias = Eigen::Map<const Vec>(b.data(), bias.size());
    }
    const auto& t = j.at("training");
    ModelMetadata& m = model.meta;
    m.loss = t.at("loss").get<std::string>();
    m.alpha = t.at("alpha").get<double>();
    m.hybrid_lambda = t.at("hybrid_lambda").get<double>();
    m.seed = t.at("seed").get<std::uint64_t>();
    m.dataset_hash = t.at("dataset_hash").get<std::string>();
    m.simulator_hash = t.at("simulator_hash").get<std::string>();
    const auto ref = t.at("theta1_ref").get<std::array<double, 2>>();
    m.theta1_ref = {ref[0], ref[1]};
    m.epochs_run = t.at("epochs_run").get<int>();
    m.best_epoch = t.at("best_epoch").get<int>();
    m.best_validation_loss = t.at("best_validation_loss").get<double>();
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

void save_model(const Model& model, const std::filesystem::path& path) {
  write_file_atomic(path, model_to_json(model) + "\n");
}

Model load_model(const std::filesystem::path& path) { return model_from_json(read_file(path)); }

}  // namespace lfi
