#pragma once

#include "lfi/common.hpp"
#include "lfi/ratio_estimators.hpp"
#include "lfi/simulators.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lfi {

struct ObservedSet {
  Mat x;  // d x n_obs
  ParameterPoint theta_true;
  std::uint64_t seed = 0;
  std::uint64_t repetition = 0;

  std::size_t size() const { return static_cast<std::size_t>(x.cols()); }
};

/// n_obs events from p(x | theta_true), stream (seed, observed, repetition).
ObservedSet draw_observed(const Simulator& sim, const ParameterPoint& theta_true,
                          std::size_t n_obs, std::uint64_t seed, std::uint64_t repetition = 0);

/// q(theta) = -2 sum_i log r_hat(x_i | theta, theta_ref). Exactly 0 at theta_ref.
double test_statistic(const RatioEstimator& estimator, const Mat& xs, const ParameterPoint& theta,
                      const ParameterPoint& theta_ref = {});

/// q(theta) at every grid node.
std::vector<double> statistic_scan(const RatioEstimator& estimator, const Mat& xs,
                                   const Grid& grid, const ParameterPoint& theta_ref = {});

/// Upper tail of the chi-square distribution with two degrees of freedom.
double chi2_2dof_survival(double q);

struct PValueMap {
  Grid grid;
  std::vector<double> q;  // per node, row-major like Grid
  std::vector<double> p;
  std::string method;     // "asymptotic" or "neyman"
  std::string estimator;
};

/// q_prof(theta) = q(theta) - min over the grid, p from the chi-square tail.
PValueMap asymptotic_map(const RatioEstimator& estimator, const ObservedSet& observed,
                         const Grid& grid, const ParameterPoint& theta_ref = {});

/// Test statistic used by the toy calibration.
///  reference: q(theta) against the fixed theta_ref.
///  profile:   q(theta) - min over the grid, recomputed for every toy. Needs
///             the estimator on the whole grid per toy, so it is far more
///             expensive; it is the statistic whose p-value at theta_ref is
///             not trivially 1.
enum class NeymanStatistic { reference, profile };

struct NeymanConfig {
  int n_toys = 1000;
  std::uint64_t seed = 1;
  NeymanStatistic statistic = NeymanStatistic::reference;
  ParameterPoint theta_ref{};
  int threads = 1;

  void validate() const;
};

/// (1 + #{toys with q_toy >= q_obs}) / (n_toys + 1)
double neyman_p_value(const std::vector<double>& toy_statistics, double observed_statistic);

/// Statistics of n_toys pseudo-experiments of n_obs events drawn at theta.
/// Toys are keyed by (seed, theta), so every estimator sees the same toys.
std::vector<double> toy_statistics(const RatioEstimator& estimator, const Simulator& sim,
                                   const ParameterPoint& theta, std::size_t n_obs,
                                   const Grid& grid, const NeymanConfig& config);

/// Observed-set statistic of the configured kind at grid node `index`.
double observed_statistic(const RatioEstimator& estimator, const Mat& xs, const Grid& grid,
                          std::size_t index, const NeymanConfig& config);

PValueMap neyman_map(const RatioEstimator& estimator, const Simulator& sim,
                     const ObservedSet& observed, const Grid& grid, const NeymanConfig& config);

std::string pvalue_map_to_csv(const PValueMap& map);
/// Reconstructs the grid from the coordinates; both axes must share one range.
std::vector<PValueMap> pvalue_maps_from_csv(const std::string& text);

// --- contours ----------------------------------------------------------------------

struct Polyline {
  std::vector<ParameterPoint> points;
  bool closed = false;
};

struct Contour {
  double level = 0.0;
  std::vector<Polyline> lines;
};

/// Marching-squares iso-lines of p at each level. Levels outside the range
/// of the map give an empty contour.
std::vector<Contour> extract_contours(const PValueMap& map, const std::vector<double>& levels);

/// Area of {theta : p(theta) > level} under bilinear interpolation of the
/// map, integrated with `subsamples` x `subsamples` points per grid cell.
double allowed_area(const PValueMap& map, double level, int subsamples = 16);

/// estimator,method,level,line,point,theta_a,theta_b
std::string contours_to_csv(const PValueMap& map, const std::vector<Contour>& contours);

}  // namespace lfi
