#include "lfi/losses.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace lfi {

namespace {

void check_sizes(std::size_t batch, std::size_t values, const char* what) {
  if (batch == 0) throw InvalidConfig(fmt::format("{}: empty batch", what));
  if (batch != values) throw InvalidConfig(fmt::format("{}: batch and outputs differ in size", what));
}

double cross_entropy(double target, double s_hat) {
  return -(target * std::log(s_hat) + (1.0 - target) * std::log(1.0 - s_hat));
}

double clamped_joint_ratio(double log_r, std::size_t& clamps) {
  if (log_r > kRatioClampLog || log_r < -kRatioClampLog) {
    ++clamps;
    log_r = std::clamp(log_r, -kRatioClampLog, kRatioClampLog);
  }
  return std::exp(log_r);
}

double rolr_term(int y, double r_joint, double r_hat) {
  if (y == 1) return (r_joint - r_hat) * (r_joint - r_hat);
  const double d = 1.0 / r_joint - 1.0 / r_hat;
  return d * d;
}

}  // namespace

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::carl: return "carl";
    case LossKind::alice: return "alice";
    case LossKind::rolr: return "rolr";
    case LossKind::cascal: return "cascal";
    case LossKind::rascal: return "rascal";
    case LossKind::alices: return "alices";
  }
  return "?";
}

LossKind parse_loss(std::string_view name) {
  for (LossKind k : {LossKind::carl, LossKind::alice, LossKind::rolr, LossKind::cascal,
                     LossKind::rascal, LossKind::alices})
    if (loss_name(k) == name) return k;
  throw InvalidConfig(fmt::format("unknown loss '{}'", name));
}

bool score_bearing(LossKind kind) {
  return kind == LossKind::cascal || kind == LossKind::rascal || kind == LossKind::alices;
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidConfig("alpha must be non-negative");
  if (!(hybrid_lambda >= 0.0 && hybrid_lambda <= 1.0))
    throw InvalidConfig("hybrid_lambda must lie in [0, 1]");
}

bool LossConfig::needs_joint_ratio() const {
  switch (kind) {
    case LossKind::rolr:
    case LossKind::rascal: return true;
    case LossKind::alice:
    case LossKind::alices: return hybrid_lambda > 0.0;
    default: return false;
  }
}

void check_requirements(std::span<const AugmentedSample> batch, const LossConfig& config) {
  const bool ratio = config.needs_joint_ratio();
  const bool score = config.needs_joint_score();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (ratio && !batch[i].log_r_joint)
      throw MissingAugmentation(fmt::format("loss '{}' needs log_r_joint, missing at sample {}",
                                            loss_name(config.kind), i));
    if (score && !batch[i].t_joint)
      throw MissingAugmentation(fmt::format("loss '{}' needs t_joint, missing at sample {}",
                                            loss_name(config.kind), i));
  }
}

double ordered_sum(std::vector<double> terms) {
  if (terms.empty()) return 0.0;
  std::sort(terms.begin(), terms.end());
  while (terms.size() > 1) {
    const std::size_t half = terms.size() / 2;
    for (std::size_t i = 0; i < half; ++i) terms[i] = terms[2 * i] + terms[2 * i + 1];
    if (terms.size() % 2) {
      terms[half] = terms.back();
      terms.resize(half + 1);
    } else {
      terms.resize(half);
    }
  }
  return terms.front();
}

double joint_classifier_target(double log_r_joint) { return logistic(-log_r_joint); }

double carl_loss(std::span<const AugmentedSample> batch, std::span<const double> s_hat) {
  check_sizes(batch.size(), s_hat.size(), "carl_loss");
  std::vector<double> terms(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) terms[i] = cross_entropy(batch[i].y, s_hat[i]);
  return ordered_sum(std::move(terms)) / static_cast<double>(batch.size());
}

double alice_loss(std::span<const AugmentedSample> batch, std::span<const double> s_hat,
                  double hybrid_lambda) {
  check_sizes(batch.size(), s_hat.size(), "alice_loss");
  if (hybrid_lambda == 0.0) return carl_loss(batch, s_hat);
  std::vector<double> terms(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i].log_r_joint)
      throw MissingAugmentation(fmt::format("alice_loss: sample {} has no log_r_joint", i));
    terms[i] = cross_entropy(joint_classifier_target(*batch[i].log_r_joint), s_hat[i]);
  }
  const double alice = ordered_sum(std::move(terms)) / static_cast<double>(batch.size());
  if (hybrid_lambda == 1.0) return alice;
  return hybrid_lambda * alice + (1.0 - hybrid_lambda) * carl_loss(batch, s_hat);
}

double rolr_loss(std::span<const AugmentedSample> batch, std::span<const double> r_hat,
                 std::size_t* ratio_clamps) {
  check_sizes(batch.size(), r_hat.size(), "rolr_loss");
  std::size_t clamps = 0;
  std::vector<double> terms(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i].log_r_joint)
      throw MissingAugmentation(fmt::format("rolr_loss: sample {} has no log_r_joint", i));
    if (!(r_hat[i] > 0.0)) throw InvalidParameter("rolr_loss: r_hat must be positive");
    const double r = clamped_joint_ratio(*batch[i].log_r_joint, clamps);
    terms[i] = rolr_term(batch[i].y, r, r_hat[i]);
  }
  if (ratio_clamps) *ratio_clamps += clamps;
  return ordered_sum(std::move(terms)) / static_cast<double>(batch.size());
}

double score_term(std::span<const AugmentedSample> batch, std::span<const Vec2> t_hat) {
  check_sizes(batch.size(), t_hat.size(), "score_term");
  std::vector<double> terms(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i].t_joint)
      throw MissingAugmentation(fmt::format("score_term: sample {} has no t_joint", i));
    terms[i] = batch[i].y == 1 ? 0.0 : (*batch[i].t_joint - t_hat[i]).squaredNorm();
  }
  return ordered_sum(std::move(terms)) / static_cast<double>(batch.size());
}

double combined_loss(std::span<const AugmentedSample> batch, const SurrogateOutputs& out,
                     const LossConfig& config, std::size_t* ratio_clamps) {
  config.validate();
  auto ratio_part = [&] {
    std::vector<double> r_hat(out.s_hat.size());
    for (std::size_t i = 0; i < r_hat.size(); ++i) r_hat[i] = ratio_from_classifier(out.s_hat[i]);
    return rolr_loss(batch, r_hat, ratio_clamps);
  };
  auto with_score = [&](double base) {
    if (out.t_hat.empty())
      throw MissingAugmentation("score-bearing loss evaluated without estimator scores");
    return base + config.alpha * score_term(batch, out.t_hat);
  };
  switch (config.kind) {
    case LossKind::carl: return carl_loss(batch, out.s_hat);
    case LossKind::alice: return alice_loss(batch, out.s_hat, config.hybrid_lambda);
    case LossKind::rolr: return ratio_part();
    case LossKind::cascal: return with_score(carl_loss(batch, out.s_hat));
    case LossKind::rascal: return with_score(ratio_part());
    case LossKind::alices: return with_score(alice_loss(batch, out.s_hat, config.hybrid_lambda));
  }
  throw InvalidConfig("unknown loss kind");
}

LossAdjoints loss_adjoints(std::span<const AugmentedSample> batch, const Eigen::RowVectorXd& logits,
                           const std::array<Eigen::RowVectorXd, 2>* theta_grad,
                           const LossConfig& config, double clamp) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  check_sizes(batch.size(), static_cast<std::size_t>(logits.size()), "loss_adjoints");
  check_requirements(batch, config);
  const bool score = score_bearing(config.kind);
  if (score && !theta_grad) throw InvalidConfig("score-bearing loss needs logit theta-gradients");

  SurrogateOutputs out;
  out.s_hat.resize(batch.size());
  std::vector<char> interior(batch.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = logistic(logits[i]);
    interior[i] = s > clamp && s < 1.0 - clamp;
    out.s_hat[i] = std::clamp(s, clamp, 1.0 - clamp);
  }
  LossAdjoints adj;
  adj.output_clamps = static_cast<std::size_t>(std::count(interior.begin(), interior.end(), 0));
  if (score) {
    out.t_hat.resize(batch.size());
    for (Eigen::Index i = 0; i < n; ++i) out.t_hat[i] = -Vec2((*theta_grad)[0][i], (*theta_grad)[1][i]);
  }

  adj.loss = combined_loss(batch, out, config, &adj.ratio_clamps);
  adj.d_logit = Eigen::RowVectorXd::Zero(n);
  const double inv_n = 1.0 / static_cast<double>(n);

  const bool ratio_regression = config.kind == LossKind::rolr || config.kind == LossKind::rascal;
  const bool improved_xe = config.kind == LossKind::alice || config.kind == LossKind::alices;
  std::size_t unused = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!interior[i]) continue;
    const AugmentedSample& smp = batch[i];
    const double s = out.s_hat[i];
    if (ratio_regression) {
      const double r_hat = (1.0 - s) / s;  // dr_hat/dz = -r_hat
      const double r = clamped_joint_ratio(*smp.log_r_joint, unused);
      if (smp.y == 1)
        adj.d_logit[i] = -2.0 * (r - r_hat) * (-r_hat) * inv_n;
      else
        adj.d_logit[i] = 2.0 * (1.0 / r_hat - 1.0 / r) * (1.0 / r_hat) * inv_n;
    } else {
      double target = smp.y;
      if (improved_xe && config.hybrid_lambda > 0.0)
        target = config.hybrid_lambda * joint_classifier_target(*smp.log_r_joint) +
                 (1.0 - config.hybrid_lambda) * smp.y;
      adj.d_logit[i] = (s - target) * inv_n;
    }
  }

  if (score) {
    for (auto& g : adj.d_theta_grad) g = Eigen::RowVectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (batch[i].y == 1) continue;
      // d/dg alpha |t + g|^2 = 2 alpha (t - t_hat)
      const Vec2 diff = *batch[i].t_joint - out.t_hat[i];
      adj.d_theta_grad[0][i] = 2.0 * config.alpha * diff[0] * inv_n;
      adj.d_theta_grad[1][i] = 2.0 * config.alpha * diff[1] * inv_n;
    }
  }
  return adj;
}

}  // namespace lfi
