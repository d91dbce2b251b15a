#pragma once

#include "lfi/common.hpp"
#include "lfi/dataset.hpp"

#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace lfi {

enum class LossKind { carl, alice, rolr, cascal, rascal, alices };

std::string_view loss_name(LossKind kind);
/// Accepts exactly the lowercase names: carl, alice, rolr, cascal, rascal, alices.
LossKind parse_loss(std::string_view name);

/// CASCAL, RASCAL and ALICES carry the alpha-weighted score term.
bool score_bearing(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::alices;
  double alpha = 5.0;
  /// Weight of the ratio-based cross entropy against the label-based one in
  /// ALICE/ALICES: lambda * alice + (1 - lambda) * carl.
  double hybrid_lambda = 1.0;

  void validate() const;
  bool needs_joint_ratio() const;
  bool needs_joint_score() const { return score_bearing(kind); }
};

/// Joint ratios are clipped to exp(+-kRatioClampLog) inside ROLR/RASCAL.
inline constexpr double kRatioClampLog = 30.0;

/// Throws MissingAugmentation if a sample lacks a field the loss consumes.
void check_requirements(std::span<const AugmentedSample> batch, const LossConfig& config);

/// Sum of the terms in sorted order using pairwise reduction; the result
/// does not depend on the order the terms were supplied in.
double ordered_sum(std::vector<double> terms);

/// Target probability s(x,z) = 1 / (r(x,z) + 1) from a stored log joint ratio.
double joint_classifier_target(double log_r_joint);

// Each loss averages over the batch. s_hat values must already be clamped
// into (0, 1).

double carl_loss(std::span<const AugmentedSample> batch, std::span<const double> s_hat);

double alice_loss(std::span<const AugmentedSample> batch, std::span<const double> s_hat,
                  double hybrid_lambda = 1.0);

double rolr_loss(std::span<const AugmentedSample> batch, std::span<const double> r_hat,
                 std::size_t* ratio_clamps = nullptr);

/// (1/N) sum_i (1 - y_i) |t_joint_i - t_hat_i|^2
double score_term(std::span<const AugmentedSample> batch, std::span<const Vec2> t_hat);

struct SurrogateOutputs {
  std::vector<double> s_hat;
  std::vector<Vec2> t_hat;  // may be empty for losses without a score term
};

double combined_loss(std::span<const AugmentedSample> batch, const SurrogateOutputs& out,
                     const LossConfig& config, std::size_t* ratio_clamps = nullptr);

/// Loss value and its derivatives with respect to the network logit z_i and
/// the logit's theta0-gradient g_i (t_hat_i = -g_i).
struct LossAdjoints {
  double loss = 0.0;
  Eigen::RowVectorXd d_logit;
  std::array<Eigen::RowVectorXd, 2> d_theta_grad;
  std::size_t ratio_clamps = 0;
  std::size_t output_clamps = 0;  // samples whose s_hat hit the clamp
};

/// theta_grad may be null for losses without a score term.
LossAdjoints loss_adjoints(std::span<const AugmentedSample> batch, const Eigen::RowVectorXd& logits,
                           const std::array<Eigen::RowVectorXd, 2>* theta_grad,
                           const LossConfig& config, double clamp);

}  // namespace lfi
