#include "lfi/ratio_estimators.hpp"

namespace lfi {

Vec RatioEstimator::log_ratio_between(const Mat& xs, const ParameterPoint& theta_a,
                                      const ParameterPoint& theta_b) const {
  if (theta_a == theta_b) return Vec::Zero(xs.cols());
  return log_ratio(xs, theta_a) - log_ratio(xs, theta_b);
}

TruthEstimator::TruthEstimator(Simulator sim, ParameterPoint theta1_ref)
    : sim_(std::move(sim)), theta1_ref_(theta1_ref) {
  if (!sim_.has_tractable_truth())
    throw CapabilityUnavailable("truth estimator needs a simulator with a tractable likelihood");
}

Vec TruthEstimator::log_ratio(const Mat& xs, const ParameterPoint& theta) const {
  return log_ratio_between(xs, theta, theta1_ref_);
}

Vec TruthEstimator::log_ratio_between(const Mat& xs, const ParameterPoint& theta_a,
                                      const ParameterPoint& theta_b) const {
  if (theta_a == theta_b) return Vec::Zero(xs.cols());
  return sim_.true_log_likelihood(xs, theta_a) - sim_.true_log_likelihood(xs, theta_b);
}

NetworkEstimator::NetworkEstimator(SurrogateNetwork net, std::string name)
    : net_(std::move(net)), name_(std::move(name)) {}

Vec NetworkEstimator::log_ratio(const Mat& xs, const ParameterPoint& theta) const {
  return net_.log_ratio(xs, theta);
}

}  // namespace lfi
