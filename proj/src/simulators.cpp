#include "lfi/simulators.hpp"

#include "lfi/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <numbers>

namespace lfi {

using nlohmann::json;

namespace {

double logit_of(const std::array<double, 3>& w, const ParameterPoint& theta) {
  return w[0] + w[1] * theta.a + w[2] * theta.b;
}

double log_sum_exp(const Vec& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

Vec log_weights(const MixtureSpec& spec, const ParameterPoint& theta) {
  Vec logits(spec.components());
  for (int k = 0; k < spec.components(); ++k) logits[k] = logit_of(spec.weight_logits[k], theta);
  return logits.array() - log_sum_exp(logits);
}

double log_normal_isotropic(const Vec& x, const Vec& mean, double sigma) {
  const double d = static_cast<double>(x.size());
  const double m2 = (x - mean).squaredNorm() / (sigma * sigma);
  return -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma) - 0.5 * m2;
}

void check_component(const MixtureSpec& spec, int z) {
  if (z < 0 || z >= spec.components())
    throw InvalidParameter("latent component index out of range");
}

void check_dim(const MixtureSpec& spec, const Vec& x) {
  if (x.size() != spec.dim()) throw InvalidConfig("observation dimension does not match spec");
}

}  // namespace

void MixtureSpec::validate() const {
  const int k = components();
  if (k < 1) throw InvalidConfig("mixture needs at least one component");
  if (static_cast<int>(base_means.size()) != k || static_cast<int>(mean_responses.size()) != k)
    throw InvalidConfig("weight_logits, base_means and mean_responses must have K entries");
  const int d = dim();
  if (d < 1) throw InvalidConfig("observation dimension must be positive");
  for (int i = 0; i < k; ++i) {
    if (base_means[i].size() != d || mean_responses[i].rows() != d)
      throw InvalidConfig("component shapes disagree with observation dimension");
    if (!base_means[i].allFinite() || !mean_responses[i].allFinite() ||
        !std::all_of(weight_logits[i].begin(), weight_logits[i].end(),
                     [](double v) { return std::isfinite(v); }))
      throw InvalidConfig("mixture coefficients must be finite");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidConfig("sigma must be positive");
}

MixtureSpec MixtureSpec::default_spec() {
  MixtureSpec s;
  s.weight_logits = {{0.0, 1.0, 0.0}, {0.0, 0.0, 0.0}};
  s.base_means = {Vec2(1.0, 0.0), Vec2(-1.0, 0.0)};
  s.mean_responses = {Eigen::Matrix2d::Identity(), -Eigen::Matrix2d::Identity()};
  s.sigma = 1.0;
  return s;
}

Vec mixture_weights(const MixtureSpec& spec, const ParameterPoint& theta) {
  return log_weights(spec, theta).array().exp();
}

Vec component_mean(const MixtureSpec& spec, int k, const ParameterPoint& theta) {
  check_component(spec, k);
  return spec.base_means[k] + spec.mean_responses[k] * theta.vec();
}

double log_joint_likelihood(const MixtureSpec& spec, const Vec& x, int z,
                            const ParameterPoint& theta) {
  check_component(spec, z);
  check_dim(spec, x);
  return log_weights(spec, theta)[z] +
         log_normal_isotropic(x, component_mean(spec, z, theta), spec.sigma);
}

double joint_log_ratio(const MixtureSpec& spec, const Vec& x, int z, const ParameterPoint& theta0,
                       const ParameterPoint& theta1) {
  if (theta0 == theta1) {
    check_component(spec, z);
    return 0.0;
  }
  return log_joint_likelihood(spec, x, z, theta0) - log_joint_likelihood(spec, x, z, theta1);
}

Vec2 joint_score(const MixtureSpec& spec, const Vec& x, int z, const ParameterPoint& theta0) {
  check_component(spec, z);
  check_dim(spec, x);
  const Vec pi = mixture_weights(spec, theta0);
  // d log pi_z / d theta = w_z - sum_k pi_k w_k  (slope part of the logits)
  Vec2 score(spec.weight_logits[z][1], spec.weight_logits[z][2]);
  for (int k = 0; k < spec.components(); ++k)
    score -= pi[k] * Vec2(spec.weight_logits[k][1], spec.weight_logits[k][2]);
  const Vec resid = x - component_mean(spec, z, theta0);
  score += spec.mean_responses[z].transpose() * resid / (spec.sigma * spec.sigma);
  return score;
}

double true_log_likelihood(const MixtureSpec& spec, const Vec& x, const ParameterPoint& theta) {
  check_dim(spec, x);
  Vec terms = log_weights(spec, theta);
  for (int k = 0; k < spec.components(); ++k)
    terms[k] += log_normal_isotropic(x, component_mean(spec, k, theta), spec.sigma);
  return log_sum_exp(terms);
}

double true_log_ratio(const MixtureSpec& spec, const Vec& x, const ParameterPoint& theta0,
                      const ParameterPoint& theta1) {
  if (theta0 == theta1) return 0.0;
  return true_log_likelihood(spec, x, theta0) - true_log_likelihood(spec, x, theta1);
}

std::vector<JointSample> sample_joint(const MixtureSpec& spec, const ParameterPoint& theta,
                                      std::size_t n, std::uint64_t seed) {
  return Simulator(spec).sample_joint(theta, n, seed);
}

// --- Simulator -----------------------------------------------------------------

Simulator::Simulator(MixtureSpec spec, std::optional<Smearing> smearing)
    : spec_(std::move(spec)), smearing_(smearing) {
  spec_.validate();
  if (smearing_ && (!(smearing_->a >= 0.0) || !(smearing_->s >= 0.0) ||
                    !std::isfinite(smearing_->a) || !std::isfinite(smearing_->s)))
    throw InvalidConfig("smearing strengths must be finite and non-negative");
}

JointSample Simulator::sample_one(const ParameterPoint& theta, Engine& rng) const {
  require_finite(theta, "sample");
  const Vec pi = mixture_weights(spec_, theta);
  const double u = rng.uniform();
  int k = 0;
  double cum = pi[0];
  while (k + 1 < spec_.components() && u >= cum) cum += pi[++k];

  JointSample out;
  out.z.component = k;
  out.x = component_mean(spec_, k, theta);
  for (int i = 0; i < out.x.size(); ++i) out.x[i] += spec_.sigma * rng.normal();

  if (smearing_) {
    Vec smeared = out.x.array() + smearing_->a * out.x.array().tanh();
    // No draws when s = 0 so a (0, 0) wrapper reproduces the raw stream.
    if (smearing_->s > 0.0)
      for (int i = 0; i < smeared.size(); ++i) smeared[i] += smearing_->s * rng.normal();
    out.z.pre_smear_x = std::move(out.x);
    out.x = std::move(smeared);
  }
  return out;
}

std::vector<JointSample> Simulator::sample_joint(const ParameterPoint& theta, std::size_t n,
                                                 std::uint64_t seed) const {
  require_finite(theta, "sample_joint");
  if (n < 1) throw InvalidConfig("sample_joint: n must be at least 1");
  Engine rng(seed, Stream::sample);
  std::vector<JointSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_one(theta, rng));
  return out;
}

Mat Simulator::sample_observations(const ParameterPoint& theta, std::size_t n, Engine& rng) const {
  Mat xs(spec_.dim(), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) xs.col(static_cast<Eigen::Index>(i)) = sample_one(theta, rng).x;
  return xs;
}

double Simulator::joint_log_ratio(const JointSample& s, const ParameterPoint& theta0,
                                  const ParameterPoint& theta1) const {
  const Vec& x = s.z.pre_smear_x ? *s.z.pre_smear_x : s.x;
  return lfi::joint_log_ratio(spec_, x, s.z.component, theta0, theta1);
}

Vec2 Simulator::joint_score(const JointSample& s, const ParameterPoint& theta0) const {
  const Vec& x = s.z.pre_smear_x ? *s.z.pre_smear_x : s.x;
  return lfi::joint_score(spec_, x, s.z.component, theta0);
}

void Simulator::require_truth() const {
  if (!has_tractable_truth())
    throw CapabilityUnavailable("the marginal likelihood of a smeared simulator is intractable");
}

double Simulator::true_log_likelihood(const Vec& x, const ParameterPoint& theta) const {
  require_truth();
  return lfi::true_log_likelihood(spec_, x, theta);
}

double Simulator::true_log_ratio(const Vec& x, const ParameterPoint& theta0,
                                 const ParameterPoint& theta1) const {
  require_truth();
  return lfi::true_log_ratio(spec_, x, theta0, theta1);
}

Vec Simulator::true_log_likelihood(const Mat& xs, const ParameterPoint& theta) const {
  require_truth();
  if (xs.rows() != spec_.dim()) throw InvalidConfig("observation dimension does not match spec");
  const int K = spec_.components();
  const Vec logw = log_weights(spec_, theta);
  const double s2 = spec_.sigma * spec_.sigma;
  const double norm = -0.5 * spec_.dim() * std::log(2.0 * std::numbers::pi * s2);
  Mat terms(K, xs.cols());
  for (int k = 0; k < K; ++k) {
    const Vec mu = component_mean(spec_, k, theta);
    terms.row(k) = ((xs.colwise() - mu).colwise().squaredNorm().array() * (-0.5 / s2) +
                    (logw[k] + norm))
                       .matrix();
  }
  const Eigen::RowVectorXd m = terms.colwise().maxCoeff();
  return (m.array() + (terms.rowwise() - m).array().exp().colwise().sum().log()).transpose();
}

Simulator wrap_with_smearing(const MixtureSpec& spec, double a, double s) {
  return Simulator(spec, Smearing{a, s});
}

// --- JSON ------------------------------------------------------------------------

std::string simulator_to_json(const Simulator& sim) {
  const MixtureSpec& s = sim.spec();
  nlohmann::ordered_json j;
  j["K"] = s.components();
  j["weight_logits"] = s.weight_logits;
  json means = json::array();
  for (const auto& c : s.base_means) means.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  j["base_means"] = means;
  json responses = json::array();
  for (const auto& m : s.mean_responses) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) rows.push_back({m(r, 0), m(r, 1)});
    responses.push_back(rows);
  }
  j["mean_responses"] = responses;
  j["sigma"] = s.sigma;
  if (sim.smearing())
    j["smearing"] = {{"a", sim.smearing()->a}, {"s", sim.smearing()->s}};
  else
    j["smearing"] = nullptr;
  return j.dump(2);
}

Simulator simulator_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MixtureSpec s;
    const int K = j.at("K").get<int>();
    s.weight_logits = j.at("weight_logits").get<std::vector<std::array<double, 3>>>();
    for (const auto& c : j.at("base_means")) {
      const auto v = c.get<std::vector<double>>();
      s.base_means.push_back(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    for (const auto& m : j.at("mean_responses")) {
      Eigen::Matrix<double, Eigen::Dynamic, 2> M(static_cast<Eigen::Index>(m.size()), 2);
      for (std::size_t r = 0; r < m.size(); ++r) {
        const auto row = m[r].get<std::array<double, 2>>();
        M(static_cast<Eigen::Index>(r), 0) = row[0];
        M(static_cast<Eigen::Index>(r), 1) = row[1];
      }
      s.mean_responses.push_back(M);
    }
    s.sigma = j.at("sigma").get<double>();
    if (K != s.components()) throw InvalidConfig("K does not match the number of weight_logits");
    std::optional<Smearing> smear;
    if (j.contains("smearing") && !j.at("smearing").is_null())
      smear = Smearing{j.at("smearing").at("a").get<double>(), j.at("smearing").at("s").get<double>()};
    return Simulator(std::move(s), smear);
  } catch (const json::exception& e) {
    throw ParseError(std::string("simulator spec: ") + e.what());
  }
}

Simulator load_simulator(const std::filesystem::path& path) {
  return simulator_from_json(read_file(path));
}

void save_simulator(const Simulator& sim, const std::filesystem::path& path) {
  write_file_atomic(path, simulator_to_json(sim) + "\n");
}

std::string simulator_hash(const Simulator& sim) {
  return sha256_hex(simulator_to_json(sim)).substr(0, 16);
}

}  // namespace lfi
