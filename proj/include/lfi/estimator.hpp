#pragma once

#include "lfi/common.hpp"
#include "lfi/dataset.hpp"
#include "lfi/losses.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lfi {

/// Lower/upper guard on s_hat before any logarithm.
inline constexpr double kDefaultClamp = 1e-7;

/// d + 2 inputs (observables then theta0), five tanh layers of 100, one output.
std::vector<int> default_layer_sizes(int observable_dim);

/// Classifier output and its theta0-gradient for one input.
struct DualEvaluation {
  double s_hat = 0.5;
  Vec2 ds_dtheta = Vec2::Zero();
  double logit = 0.0;
  Vec2 dlogit_dtheta = Vec2::Zero();
  /// Filled on request: d s_hat / d w (P) and d (ds/dtheta_j) / d w (P x 2).
  std::optional<Vec> s_hat_adjoint;
  std::optional<Eigen::Matrix<double, Eigen::Dynamic, 2>> ds_dtheta_adjoint;
};

/// Activations of one batched forward pass, kept for the reverse sweep.
/// Columns are samples. With tangents enabled, the pass also carries the
/// derivatives of every hidden layer with respect to the two theta0 inputs.
struct ForwardPass {
  std::vector<Mat> act;                    // act[0] = inputs, act[l] = hidden layer l
  std::vector<std::array<Mat, 2>> pre_tan;  // d(pre-activation of affine map l)/d theta_j
  std::vector<std::array<Mat, 2>> tan;      // d act[l] / d theta_j (index 0 unused)
  Eigen::RowVectorXd logit;
  std::array<Eigen::RowVectorXd, 2> dlogit;  // g_j = d logit / d theta_j
  bool has_tangents = false;
};

/// Fully connected surrogate s_hat(x, theta0) = logistic(f(x, theta0)), f an
/// MLP with tanh hidden layers and a linear output. All parameters live in one
/// flat vector: for each affine map, the weight matrix (column-major) followed
/// by the bias.
class SurrogateNetwork {
 public:
  SurrogateNetwork() = default;
  /// All-zero parameters.
  explicit SurrogateNetwork(std::vector<int> layer_sizes, double clamp = kDefaultClamp);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static SurrogateNetwork initialized(std::vector<int> layer_sizes, std::uint64_t seed,
                                      double clamp = kDefaultClamp);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int observable_dim() const { return sizes_.front() - 2; }
  int affine_count() const { return static_cast<int>(sizes_.size()) - 1; }
  double clamp() const { return clamp_; }
  /// Largest |logit| representable after clamping: log((1 - eps) / eps).
  double logit_limit() const;

  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }
  const Vec& parameters() const { return params_; }
  void set_parameters(const Vec& p);

  Eigen::Map<const Mat> weight(int l) const;
  Eigen::Map<Mat> weight(int l);
  Eigen::Map<const Vec> bias(int l) const;
  Eigen::Map<Vec> bias(int l);

  /// Stack observables (d x n) with a shared theta0 into network inputs.
  Mat make_inputs(const Mat& xs, const ParameterPoint& theta0) const;
  Mat make_inputs(std::span<const AugmentedSample> batch) const;

  ForwardPass forward_pass(const Mat& inputs, bool with_tangents) const;
  /// Reverse sweep: gradient of sum_i (d_logit_i z_i + sum_j d_grad_j,i g_j,i)
  /// with respect to all parameters. d_theta_grad requires a pass with tangents.
  Vec backward(const ForwardPass& pass, const Eigen::RowVectorXd& d_logit,
               const std::array<Eigen::RowVectorXd, 2>* d_theta_grad) const;

  /// Clamped classifier output in [eps, 1 - eps].
  double forward(const Vec& x, const ParameterPoint& theta0) const;
  DualEvaluation dual(const Vec& x, const ParameterPoint& theta0,
                      bool with_weight_adjoints = false) const;
  /// t_hat = grad_theta0 log((1 - s_hat) / s_hat) = -d logit / d theta0.
  Vec2 estimator_score(const Vec& x, const ParameterPoint& theta0) const;
  /// log r_hat(x | theta0, theta1_ref) per column, from the clamped output.
  Vec log_ratio(const Mat& xs, const ParameterPoint& theta0) const;

 private:
  void layout();

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;  // start of W_l; b_l follows it
  Vec params_;
  double clamp_ = kDefaultClamp;
};

struct LossGradient {
  double loss = 0.0;
  Vec gradient;
  std::size_t ratio_clamps = 0;
  std::size_t output_clamps = 0;
};

/// Exact gradient of the configured loss over the batch with respect to every
/// network parameter. Score-bearing losses differentiate through t_hat by
/// running the theta0 tangents forward and sweeping both in reverse.
LossGradient loss_gradients(const SurrogateNetwork& net, std::span<const AugmentedSample> batch,
                            const LossConfig& config);

/// Loss value only (no reverse sweep).
double evaluate_loss(const SurrogateNetwork& net, std::span<const AugmentedSample> batch,
                     const LossConfig& config, std::size_t* ratio_clamps = nullptr);

// --- model files -------------------------------------------------------------------

struct ModelMetadata {
  std::string loss;
  double alpha = 0.0;
  double hybrid_lambda = 1.0;
  std::uint64_t seed = 0;
  std::string dataset_hash;
  std::string simulator_hash;
  ParameterPoint theta1_ref;
  int epochs_run = 0;
  int best_epoch = -1;
  double best_validation_loss = 0.0;

  friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

struct Model {
  SurrogateNetwork net;
  ModelMetadata meta;
};

std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace lfi
