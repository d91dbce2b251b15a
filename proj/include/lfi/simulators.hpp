#pragma once

#include "lfi/common.hpp"
#include "lfi/rng.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lfi {

/// Gaussian mixture whose weights and means depend on theta:
///
///   pi(theta)   = softmax_k( w_k0 + w_k1 theta_a + w_k2 theta_b )
///   mu_k(theta) = c_k + M_k theta
///   x | z=k     ~ Normal(mu_k(theta), sigma^2 I)
///
/// Every quantity the inference methods need (joint ratio, joint score and
/// the marginal likelihood) is available in closed form.
struct MixtureSpec {
  std::vector<std::array<double, 3>> weight_logits;  // [bias, d/dtheta_a, d/dtheta_b]
  std::vector<Vec> base_means;                       // c_k, length d
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 2>> mean_responses;  // M_k, d x 2
  double sigma = 1.0;

  int components() const { return static_cast<int>(weight_logits.size()); }
  int dim() const { return base_means.empty() ? 0 : static_cast<int>(base_means.front().size()); }

  /// Throws InvalidConfig on inconsistent shapes, non-finite entries or sigma <= 0.
  void validate() const;

  /// K = 2, d = 2, pi_0 = logistic(theta_a), c = (+-1, 0), M = +-I, sigma = 1.
  static MixtureSpec default_spec();
};

struct Smearing {
  double a = 0.0;  // warp strength: x -> x + a tanh(x)
  double s = 0.0;  // additive noise scale
};

/// Latent state of one simulated record.
struct LatentRecord {
  int component = 0;
  std::optional<Vec> pre_smear_x;  // set only by a smearing simulator
};

struct JointSample {
  Vec x;
  LatentRecord z;
};

// --- closed-form mixture quantities -----------------------------------------

Vec mixture_weights(const MixtureSpec& spec, const ParameterPoint& theta);
Vec component_mean(const MixtureSpec& spec, int k, const ParameterPoint& theta);

/// log pi_z(theta) + log Normal(x; mu_z(theta), sigma^2 I)
double log_joint_likelihood(const MixtureSpec& spec, const Vec& x, int z, const ParameterPoint& theta);

/// log p(x,z|theta0) - log p(x,z|theta1)
double joint_log_ratio(const MixtureSpec& spec, const Vec& x, int z, const ParameterPoint& theta0,
                       const ParameterPoint& theta1);

/// grad_theta log p(x,z|theta) at theta0.
Vec2 joint_score(const MixtureSpec& spec, const Vec& x, int z, const ParameterPoint& theta0);

/// log sum_k pi_k(theta) Normal(x; mu_k(theta), sigma^2 I)
double true_log_likelihood(const MixtureSpec& spec, const Vec& x, const ParameterPoint& theta);

double true_log_ratio(const MixtureSpec& spec, const Vec& x, const ParameterPoint& theta0,
                      const ParameterPoint& theta1);

/// Draw n records with a stream fixed by seed; bit-identical for identical inputs.
std::vector<JointSample> sample_joint(const MixtureSpec& spec, const ParameterPoint& theta,
                                      std::size_t n, std::uint64_t seed);

// --- simulator -----------------------------------------------------------------

/// A mixture, optionally wrapped in a smearing stage
///   x' = x + a tanh(x) + s eps,   eps ~ Normal(0, I).
/// The smearing kernel does not depend on theta, so joint ratio and joint
/// score are evaluated on the pre-smear record and stay exact; only the
/// marginal likelihood becomes unavailable.
class Simulator {
 public:
  explicit Simulator(MixtureSpec spec, std::optional<Smearing> smearing = std::nullopt);

  const MixtureSpec& spec() const { return spec_; }
  const std::optional<Smearing>& smearing() const { return smearing_; }
  int observable_dim() const { return spec_.dim(); }
  bool has_tractable_truth() const { return !smearing_.has_value(); }

  JointSample sample_one(const ParameterPoint& theta, Engine& rng) const;
  std::vector<JointSample> sample_joint(const ParameterPoint& theta, std::size_t n,
                                        std::uint64_t seed) const;
  /// Observations only, one per column (d x n).
  Mat sample_observations(const ParameterPoint& theta, std::size_t n, Engine& rng) const;

  double joint_log_ratio(const JointSample& s, const ParameterPoint& theta0,
                         const ParameterPoint& theta1) const;
  Vec2 joint_score(const JointSample& s, const ParameterPoint& theta0) const;

  /// Throw CapabilityUnavailable on a smeared simulator.
  double true_log_likelihood(const Vec& x, const ParameterPoint& theta) const;
  double true_log_ratio(const Vec& x, const ParameterPoint& theta0,
                        const ParameterPoint& theta1) const;
  /// Column-wise log p(x|theta) for a d x n block.
  Vec true_log_likelihood(const Mat& xs, const ParameterPoint& theta) const;

 private:
  void require_truth() const;

  MixtureSpec spec_;
  std::optional<Smearing> smearing_;
};

Simulator wrap_with_smearing(const MixtureSpec& spec, double a, double s);

std::string simulator_to_json(const Simulator& sim);
Simulator simulator_from_json(const std::string& text);
Simulator load_simulator(const std::filesystem::path& path);
void save_simulator(const Simulator& sim, const std::filesystem::path& path);

/// Short content hash of the canonical JSON form; stored in dataset metadata.
std::string simulator_hash(const Simulator& sim);

}  // namespace lfi
