#include "lfi/evaluation.hpp"

#include "lfi/io.hpp"
#include "lfi/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace lfi {

void EvalConfig::validate() const {
  if (grid.na < 1 || grid.nb < 1) throw InvalidConfig("evaluation grid is empty");
  if (n_eval < 100) throw InvalidConfig("n_eval must be at least 100");
  if (!grid.box.contains(reference) || !grid.box.contains(theta1_ref))
    throw InvalidParameter("evaluation reference points must lie in the box");
}

double jackknife_se(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (double v : values) total += v;
  const double nm1 = static_cast<double>(n - 1);
  // leave-one-out means and their average
  double mean_loo = 0.0;
  for (double v : values) mean_loo += (total - v) / nm1;
  mean_loo /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) {
    const double d = (total - v) / nm1 - mean_loo;
    ss += d * d;
  }
  return std::sqrt(nm1 / static_cast<double>(n) * ss);
}

Mat evaluation_sample(const Simulator& sim, const EvalConfig& config, std::size_t index) {
  Engine rng(config.seed, Stream::evaluation, index);
  return sim.sample_observations(config.reference, static_cast<std::size_t>(config.n_eval), rng);
}

MseResult expected_mse(const RatioEstimator& estimator, const Simulator& sim,
                       const EvalConfig& config) {
  config.validate();
  const TruthEstimator truth(sim, config.theta1_ref);
  const std::size_t nodes = config.grid.size();
  const auto n = static_cast<std::size_t>(config.n_eval);

  std::vector<double> errors(nodes * n);
  MseResult out;
  out.points.resize(nodes);
  parallel_for(nodes, config.threads, [&](std::size_t g) {
    const ParameterPoint theta = config.grid.at(g);
    const Mat xs = evaluation_sample(sim, config, g);
    const Vec exact = truth.log_ratio(xs, theta);
    const Vec approx = estimator.log_ratio(xs, theta);
    const std::span<double> slot(errors.data() + g * n, n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = approx[static_cast<Eigen::Index>(i)] - exact[static_cast<Eigen::Index>(i)];
      slot[i] = diff * diff;
      sum += slot[i];
    }
    out.points[g] = {theta, sum / static_cast<double>(n), jackknife_se(slot)};
  });

  double total = 0.0;
  for (double e : errors) total += e;
  out.mse = total / static_cast<double>(errors.size());
  out.se = jackknife_se(errors);
  return out;
}

std::string mse_to_csv(const MseResult& result) {
  std::string out = "theta_a,theta_b,mse,mse_se\n";
  for (const auto& p : result.points)
    out += fmt::format("{},{},{},{}\n", format_double(p.theta.a), format_double(p.theta.b),
                       format_double(p.mse), format_double(p.se));
  out += fmt::format("all,all,{},{}\n", format_double(result.mse), format_double(result.se));
  return out;
}

// --- histogram baseline ------------------------------------------------------------

HistogramEstimator::HistogramEstimator(const Simulator& sim, const Options& options,
                                       const Grid& grid, ParameterPoint theta1_ref,
                                       std::uint64_t seed)
    : opt_(options), grid_(grid) {
  if (opt_.bins < 1) throw InvalidConfig("histogram needs at least one bin");
  if (opt_.observable < 0 || opt_.observable >= sim.observable_dim())
    throw InvalidConfig("histogram observable index out of range");
  if (!(opt_.hi > opt_.lo)) throw InvalidConfig("histogram range is empty");
  if (opt_.n_per_point < 1) throw InvalidConfig("histogram needs samples");

  // Streams are keyed by the parameter value, so the node equal to theta1_ref
  // reproduces the reference histogram exactly.
  auto counts_at = [&](const ParameterPoint& theta) {
    Engine rng(seed, Stream::histogram, point_key(theta));
    const Mat xs = sim.sample_observations(theta, opt_.n_per_point, rng);
    Vec c = Vec::Zero(opt_.bins);
    for (Eigen::Index i = 0; i < xs.cols(); ++i) c[bin_of(xs(opt_.observable, i))] += 1.0;
    return c;
  };
  const Vec reference = (counts_at(theta1_ref).array() + 1.0).log();
  log_ratio_table_.reserve(grid_.size());
  for (std::size_t g = 0; g < grid_.size(); ++g)
    log_ratio_table_.push_back((counts_at(grid_.at(g)).array() + 1.0).log().matrix() - reference);
}

int HistogramEstimator::bin_of(double v) const {
  const double width = (opt_.hi - opt_.lo) / opt_.bins;
  const double k = std::floor((v - opt_.lo) / width);
  if (!(k > 0.0)) return 0;
  return k >= opt_.bins - 1 ? opt_.bins - 1 : static_cast<int>(k);
}

Vec HistogramEstimator::log_ratio(const Mat& xs, const ParameterPoint& theta) const {
  const Vec& table = log_ratio_table_[grid_.nearest(theta)];
  Vec out(xs.cols());
  for (Eigen::Index i = 0; i < xs.cols(); ++i) out[i] = table[bin_of(xs(opt_.observable, i))];
  return out;
}

HistogramEstimator histogram_baseline(const Simulator& sim,
                                      const HistogramEstimator::Options& options,
                                      const EvalConfig& config) {
  return HistogramEstimator(sim, options, config.grid, config.theta1_ref, config.seed);
}

}  // namespace lfi
