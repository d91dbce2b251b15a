#pragma once

#include "lfi/dataset.hpp"
#include "lfi/estimator.hpp"
#include "lfi/evaluation.hpp"
#include "lfi/losses.hpp"
#include "lfi/simulators.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lfi {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  LossConfig loss;
  int epochs = 50;
  int batch_size = 128;
  double learning_rate = 1e-3;
  /// Learning rate is multiplied by lr_decay_factor from epoch
  /// floor(lr_decay_at * epochs) onwards.
  double lr_decay_factor = 0.1;
  double lr_decay_at = 0.8;
  AdamSettings optimizer;
  std::uint64_t seed = 1;
  double validation_fraction = 0.2;
  int early_stop_patience = 10;

  void validate() const;
  double learning_rate_at(int epoch) const;
};

std::string train_config_to_json(const TrainConfig& config);
/// Fields absent from the JSON keep the values in `base`. Unknown keys are rejected.
TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base = {});

struct TrainReport {
  std::vector<double> train_loss;       // per epoch, mean over batches
  std::vector<double> validation_loss;  // per epoch
  double initial_validation_loss = 0.0;
  int best_epoch = -1;  // -1: the initial weights were never beaten
  double best_validation_loss = 0.0;
  bool early_stopped = false;
  double wall_clock_s = 0.0;
  std::size_t ratio_clamps = 0;   // joint ratios clipped inside ROLR/RASCAL
  std::size_t output_clamps = 0;  // training outputs that hit the s_hat clamp
};

struct TrainResult {
  SurrogateNetwork net;
  TrainReport report;
};

/// Loss of the whole dataset, evaluated in fixed chunks.
double dataset_loss(const SurrogateNetwork& net, std::span<const AugmentedSample> samples,
                    const LossConfig& config, std::size_t* ratio_clamps = nullptr);

/// Adam on shuffled mini-batches; returns the weights with the lowest
/// validation loss seen (the initial weights count as epoch -1).
TrainResult train(SurrogateNetwork net, const AugmentedDataset& data, const TrainConfig& config);

// --- sample-size sweeps ------------------------------------------------------------

struct SweepConfig {
  std::vector<std::size_t> sizes;
  std::vector<LossKind> losses;
  std::vector<std::uint64_t> seeds;
  TrainConfig base;
  EvalConfig eval;
  std::vector<int> layer_sizes;  // empty: default_layer_sizes
  int threads = 1;

  void validate(std::size_t available) const;
};

struct SweepRow {
  std::size_t n_train = 0;
  LossKind loss = LossKind::carl;
  std::uint64_t seed = 0;
  double expected_mse = 0.0;
  double mse_se = 0.0;
  double wall_clock_s = 0.0;
};

/// One trained model per (size, loss, seed); rows come out in that nesting
/// order whatever the thread count. Each cell trains on the first n records.
std::vector<SweepRow> sweep(const AugmentedDataset& data, const Simulator& sim,
                            const SweepConfig& config);

struct SweepMedian {
  std::size_t n_train = 0;
  LossKind loss = LossKind::carl;
  double median_mse = 0.0;
  std::size_t seeds = 0;
};

std::vector<SweepMedian> sweep_medians(const std::vector<SweepRow>& rows);

/// Header n_train,loss,seed,expected_mse,wall_clock_s. The timing column is
/// left empty unless with_timing is set, so reruns are byte-identical.
std::string sweep_to_csv(const std::vector<SweepRow>& rows, bool with_timing);
std::vector<SweepRow> sweep_from_csv(const std::string& text);
std::string medians_to_csv(const std::vector<SweepMedian>& medians);

}  // namespace lfi
