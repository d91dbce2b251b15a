#pragma once

#include "lfi/common.hpp"
#include "lfi/ratio_estimators.hpp"
#include "lfi/simulators.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lfi {

/// Evaluation measure for the expected MSE: x ~ p(x | reference) at every
/// node of a uniform theta grid, squared error of log r(x | theta, theta1_ref).
struct EvalConfig {
  Grid grid{ParameterBox{}, 11, 11};
  ParameterPoint reference{};   // theta* generating the evaluation x
  ParameterPoint theta1_ref{};  // denominator hypothesis
  int n_eval = 1000;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

struct GridPointMse {
  ParameterPoint theta;
  double mse = 0.0;
  double se = 0.0;
};

struct MseResult {
  double mse = 0.0;
  double se = 0.0;  // delete-one jackknife over all (theta, x) pairs
  std::vector<GridPointMse> points;
};

/// Delete-one jackknife standard error of the sample mean.
double jackknife_se(std::span<const double> values);

/// The evaluation observations for grid node `index` (d x n_eval). Every
/// estimator evaluated under the same config sees exactly these.
Mat evaluation_sample(const Simulator& sim, const EvalConfig& config, std::size_t index);

/// Throws CapabilityUnavailable on a smeared simulator.
MseResult expected_mse(const RatioEstimator& estimator, const Simulator& sim,
                       const EvalConfig& config);

/// CSV with header theta_a,theta_b,mse,mse_se; the last row ("all,all,...")
/// is the grid average.
std::string mse_to_csv(const MseResult& result);

/// Ratio of one-dimensional histograms of a single observable, built per grid
/// node from fresh samples at theta and at theta1_ref, with add-one smoothing.
/// Off-grid thetas use the nearest node.
class HistogramEstimator final : public RatioEstimator {
 public:
  struct Options {
    int observable = 0;
    int bins = 20;
    std::size_t n_per_point = 10000;
    double lo = -4.0;  // inner bin edges span [lo, hi]; the outer bins are open
    double hi = 4.0;
  };

  HistogramEstimator(const Simulator& sim, const Options& options, const Grid& grid,
                     ParameterPoint theta1_ref, std::uint64_t seed);

  std::string name() const override { return "histogram"; }
  Vec log_ratio(const Mat& xs, const ParameterPoint& theta) const override;
  int bin_of(double v) const;

 private:
  Options opt_;
  Grid grid_;
  std::vector<Vec> log_ratio_table_;  // per grid node, per bin
};

HistogramEstimator histogram_baseline(const Simulator& sim,
                                      const HistogramEstimator::Options& options,
                                      const EvalConfig& config);

}  // namespace lfi
