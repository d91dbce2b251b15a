#pragma once

#include "lfi/common.hpp"
#include "lfi/simulators.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lfi {

/// One mined record. y = 0 means (x, z) was drawn at theta0, y = 1 at theta1.
/// The latent z is consumed during mining and never stored.
struct AugmentedSample {
  ParameterPoint theta0;
  ParameterPoint theta1;
  Vec x;
  int y = 0;
  std::optional<double> log_r_joint;  // log p(x,z|theta0) - log p(x,z|theta1)
  std::optional<Vec2> t_joint;        // grad_theta log p(x,z|theta) at theta0

  friend bool operator==(const AugmentedSample& l, const AugmentedSample& r) {
    return l.theta0 == r.theta0 && l.theta1 == r.theta1 && l.x.size() == r.x.size() &&
           l.x == r.x && l.y == r.y && l.log_r_joint == r.log_r_joint &&
           l.t_joint.has_value() == r.t_joint.has_value() &&
           (!l.t_joint || *l.t_joint == *r.t_joint);
  }
};

struct DatasetMeta {
  std::string simulator_hash;
  std::uint64_t seed = 0;
  ParameterPoint theta1_ref;
  std::string theta0_sampler;
  ParameterBox box;
  std::size_t simulator_calls = 0;

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

struct AugmentedDataset {
  std::vector<AugmentedSample> samples;
  DatasetMeta meta;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t count_label(int y) const;
  bool has_joint_ratio() const;
  bool has_joint_score() const;
  /// First n records (the "N training samples" a run is allowed to touch).
  AugmentedDataset head(std::size_t n) const;

  friend bool operator==(const AugmentedDataset&, const AugmentedDataset&) = default;
};

/// How theta0 is chosen for each mined record.
class Theta0Sampler {
 public:
  static Theta0Sampler uniform_box(ParameterBox box = {});
  static Theta0Sampler grid(Grid grid);
  static Theta0Sampler fixed(ParameterPoint p);

  ParameterPoint draw(Engine& rng) const;
  std::string describe() const;

 private:
  enum class Kind { uniform, grid, fixed };
  Kind kind_ = Kind::uniform;
  ParameterBox box_{};
  Grid grid_{};
  ParameterPoint point_{};
};

struct MinedRecord {
  AugmentedSample sample;
  JointSample joint;  // includes the latent z, for replay checks
};

/// Mine record `index` of a dataset. Each record owns the stream
/// (seed, mine, index), so any index range can be mined independently.
MinedRecord mine_record(const Simulator& sim, const ParameterPoint& theta1_ref,
                        const Theta0Sampler& sampler, std::uint64_t seed, std::size_t index,
                        const ParameterBox& box = {});

/// Mine n records with labels alternating 0, 1, 0, ... (exact balance).
AugmentedDataset mine(const Simulator& sim, const ParameterPoint& theta1_ref,
                      const Theta0Sampler& sampler, std::size_t n, std::uint64_t seed,
                      const ParameterBox& box = {});

/// Stratified split; validation receives round(fraction * n_y) records of each label.
std::pair<AugmentedDataset, AugmentedDataset> split(const AugmentedDataset& data,
                                                    double validation_fraction,
                                                    std::uint64_t seed);

// --- persistence (JSON Lines: metadata line, then one record per line) ---------

std::string to_jsonl(const AugmentedDataset& data);
AugmentedDataset from_jsonl(const std::string& text);

void save_dataset(const AugmentedDataset& data, const std::filesystem::path& path);

struct LoadedDataset {
  AugmentedDataset data;
  std::vector<std::string> warnings;
};

/// Throws ParseError naming the offending line. When expected_simulator_hash
/// is given and differs from the stored one, a warning is returned.
LoadedDataset load_dataset(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_simulator_hash = {});

std::string dataset_hash(const AugmentedDataset& data);

}  // namespace lfi
