#pragma once

#include "lfi/common.hpp"
#include "lfi/estimator.hpp"
#include "lfi/simulators.hpp"

#include <string>

namespace lfi {

/// Anything that can produce log r(x | theta, theta1_ref) for a block of
/// observations (one per column). Evaluation and limit setting only talk to
/// this interface, so the exact ratio, trained networks and baselines are
/// interchangeable.
class RatioEstimator {
 public:
  virtual ~RatioEstimator() = default;

  virtual std::string name() const = 0;
  virtual Vec log_ratio(const Mat& xs, const ParameterPoint& theta) const = 0;

  /// log r(x | theta_a, theta_b) = log r(x | theta_a, ref) - log r(x | theta_b, ref).
  /// Exactly zero when theta_a == theta_b.
  virtual Vec log_ratio_between(const Mat& xs, const ParameterPoint& theta_a,
                                const ParameterPoint& theta_b) const;
};

/// Exact ratio of the mixture marginals. Requires a simulator with tractable truth.
class TruthEstimator final : public RatioEstimator {
 public:
  TruthEstimator(Simulator sim, ParameterPoint theta1_ref = {});

  std::string name() const override { return "truth"; }
  Vec log_ratio(const Mat& xs, const ParameterPoint& theta) const override;
  Vec log_ratio_between(const Mat& xs, const ParameterPoint& theta_a,
                        const ParameterPoint& theta_b) const override;

 private:
  Simulator sim_;
  ParameterPoint theta1_ref_;
};

/// s_hat == 0.5 everywhere, i.e. r_hat == 1: the uninformed baseline.
class ConstantEstimator final : public RatioEstimator {
 public:
  std::string name() const override { return "constant"; }
  Vec log_ratio(const Mat& xs, const ParameterPoint&) const override {
    return Vec::Zero(xs.cols());
  }
};

class NetworkEstimator final : public RatioEstimator {
 public:
  NetworkEstimator(SurrogateNetwork net, std::string name);

  std::string name() const override { return name_; }
  Vec log_ratio(const Mat& xs, const ParameterPoint& theta) const override;
  const SurrogateNetwork& network() const { return net_; }

 private:
  SurrogateNetwork net_;
  std::string name_;
};

}  // namespace lfi
