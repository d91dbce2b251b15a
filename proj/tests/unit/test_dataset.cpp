#include "lfi/dataset.hpp"
#include "lfi/io.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

using namespace lfi;
namespace fs = std::filesystem;

namespace {

const Simulator kSim(MixtureSpec::default_spec());

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lfi_dataset_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Mine, FourRecordsAreBalanced) {
  const auto d = mine(kSim, {}, Theta0Sampler::uniform_box(), 4, 1);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d.count_label(0), 2u);
  EXPECT_EQ(d.count_label(1), 2u);
  EXPECT_EQ(d.meta.simulator_calls, 4u);
}

TEST(Mine, OddCountsDifferByOne) {
  const auto d = mine(kSim, {}, Theta0Sampler::uniform_box(), 101, 1);
  EXPECT_EQ(d.count_label(0), 51u);
  EXPECT_EQ(d.count_label(1), 50u);
}

TEST(Mine, TooFewRecordsIsRejected) {
  EXPECT_THROW(mine(kSim, {}, Theta0Sampler::uniform_box(), 1, 1), InvalidConfig);
}

TEST(Mine, DegenerateSamplerAtReferenceGivesZeroRatios) {
  const auto d = mine(kSim, {0.2, -0.1}, Theta0Sampler::fixed({0.2, -0.1}), 50, 3);
  for (const auto& s : d.samples) EXPECT_EQ(*s.log_r_joint, 0.0);
}

TEST(Mine, SamplerOutsideBoxIsRejected) {
  EXPECT_THROW(mine(kSim, {}, Theta0Sampler::fixed({1.5, 0}), 10, 3), InvalidParameter);
}

TEST(Mine, FieldsAreFiniteAndThetaInBox) {
  const auto d = mine(kSim, {}, Theta0Sampler::uniform_box(), 1000, 4);
  for (const auto& s : d.samples) {
    EXPECT_TRUE(ParameterBox{}.contains(s.theta0));
    EXPECT_EQ(s.theta1, (ParameterPoint{0, 0}));
    EXPECT_TRUE(std::isfinite(*s.log_r_joint));
    EXPECT_TRUE(s.t_joint->allFinite());
  }
}

TEST(Mine, RatioNormalizationAtFixedTheta0) {
  const auto d = mine(kSim, {}, Theta0Sampler::fixed({0.5, 0.5}), 200000, 5);
  std::vector<double> r;
  for (const auto& s : d.samples)
    if (s.y == 1) r.push_back(std::exp(*s.log_r_joint));
  const auto ms = oracle::mean_se(r);
  EXPECT_LT(std::abs(ms.mean - 1), 3 * ms.se);
}

TEST(Mine, RecordsReplayExactly) {
  const auto sampler = Theta0Sampler::uniform_box();
  const auto d = mine(kSim, {}, sampler, 300, 9);
  for (std::size_t i = 0; i < d.size(); i += 17) {
    const MinedRecord rec = mine_record(kSim, {}, sampler, 9, i);
    EXPECT_EQ(rec.sample, d.samples[i]);
    EXPECT_EQ(*d.samples[i].t_joint, kSim.joint_score(rec.joint, d.samples[i].theta0));
    EXPECT_EQ(*d.samples[i].log_r_joint, kSim.joint_log_ratio(rec.joint, d.samples[i].theta0, {0, 0}));
  }
}

TEST(Mine, IndexRangesAreIndependent) {
  const auto sampler = Theta0Sampler::uniform_box();
  const auto small = mine(kSim, {}, sampler, 10, 9);
  const auto large = mine(kSim, {}, sampler, 1000, 9);
  for (std::size_t i = 0; i < small.size(); ++i) EXPECT_EQ(small.samples[i], large.samples[i]);
  EXPECT_EQ(large.head(10).samples, small.samples);
}

TEST(Mine, GridSamplerStaysOnGrid) {
  const Grid grid{ParameterBox{}, 5, 5};
  std::set<std::size_t> seen;
  const auto d = mine(kSim, {}, Theta0Sampler::grid(grid), 500, 2);
  for (const auto& s : d.samples) {
    const std::size_t g = grid.nearest(s.theta0);
    EXPECT_EQ(grid.at(g), s.theta0);
    seen.insert(g);
  }
  EXPECT_EQ(seen.size(), grid.size());
}

TEST(Split, HalvesFourSamples) {
  const auto d = mine(kSim, {}, Theta0Sampler::uniform_box(), 4, 1);
  const auto [a, b] = split(d, 0.5, 3);
  EXPECT_EQ(a.size(), 2u);
  EXPECT_EQ(b.size(), 2u);
}

TEST(Split, DisjointCompleteBalancedAndSeeded) {
  const auto d = mine(kSim, {}, Theta0Sampler::uniform_box(), 1001, 1);
  for (double f : {0.1, 0.2, 0.5, 0.77}) {
    const auto [train, val] = split(d, f, 11);
    EXPECT_EQ(train.size() + val.size(), d.size());
    std::multiset<double> all, parts;
    for (const auto& s : d.samples) all.insert(s.x[0]);
    for (const auto& s : train.samples) parts.insert(s.x[0]);
    for (const auto& s : val.samples) parts.insert(s.x[0]);
    EXPECT_EQ(all, parts);
    for (const auto* part : {&train, &val}) {
      const auto n0 = static_cast<long>(part->count_label(0)), n1 = static_cast<long>(part->count_label(1));
      EXPECT_LE(std::abs(n0 - n1), 1);
    }
    const auto again = split(d, f, 11);
    EXPECT_EQ(again.first.samples, train.samples);
    EXPECT_EQ(again.second.samples, val.samples);
  }
  EXPECT_NE(split(d, 0.5, 1).second.samples, split(d, 0.5, 2).second.samples);
}

TEST(Split, RejectsFractionsOutsideUnitInterval) {
  const auto d = mine(kSim, {}, Theta0Sampler::uniform_box(), 10, 1);
  EXPECT_THROW(split(d, 0.0, 1), InvalidConfig);
  EXPECT_THROW(split(d, 1.0, 1), InvalidConfig);
}

TEST(Persistence, RoundTripIsBitExact) {
  const auto d = mine(kSim, {0.1, 0.2}, Theta0Sampler::uniform_box(), 257, 13);
  const fs::path p = temp_path("roundtrip.jsonl");
  save_dataset(d, p);
  const auto loaded = load_dataset(p, simulator_hash(kSim));
  EXPECT_TRUE(loaded.warnings.empty());
  EXPECT_EQ(loaded.data, d);
  EXPECT_EQ(to_jsonl(loaded.data), read_file(p));
}

TEST(Persistence, RecordKeysAndDigits) {
  const auto d = mine(kSim, {}, Theta0Sampler::uniform_box(), 2, 13);
  const std::string text = to_jsonl(d);
  const auto second = text.find('\n') + 1;
  const std::string line = text.substr(second, text.find('\n', second) - second);
  for (const char* key : {"\"theta0\"", "\"theta1\"", "\"x\"", "\"y\"", "\"log_r_joint\"", "\"t_joint\""})
    EXPECT_NE(line.find(key), std::string::npos) << key;
}

TEST(Persistence, TruncatedFileIsAParseError) {
  const auto d = mine(kSim, {}, Theta0Sampler::uniform_box(), 20, 13);
  std::string text = to_jsonl(d);
  // drop the last record entirely
  text.erase(text.rfind('\n', text.size() - 2) + 1);
  EXPECT_THROW(from_jsonl(text), ParseError);
  // cut a record in half
  std::string half = to_jsonl(d);
  half.resize(half.size() - 30);
  try {
    from_jsonl(half);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 21"), std::string::npos) << e.what();
  }
}

TEST(Persistence, MalformedLineNamesTheLine) {
  const auto d = mine(kSim, {}, Theta0Sampler::uniform_box(), 5, 13);
  std::string text = to_jsonl(d);
  const auto third = text.find('\n', text.find('\n') + 1) + 1;
  text.insert(third, "{not json}\n");
  try {
    from_jsonl(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Persistence, EmptyDatasetIsHeaderOnly) {
  AugmentedDataset empty;
  empty.meta.simulator_hash = simulator_hash(kSim);
  const std::string text = to_jsonl(empty);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  EXPECT_TRUE(from_jsonl(text).empty());
}

TEST(Persistence, HashMismatchWarns) {
  const auto d = mine(kSim, {}, Theta0Sampler::uniform_box(), 10, 13);
  const fs::path p = temp_path("mismatch.jsonl");
  save_dataset(d, p);
  const auto other = simulator_hash(wrap_with_smearing(MixtureSpec::default_spec(), 0.5, 0.1));
  const auto loaded = load_dataset(p, other);
  EXPECT_EQ(loaded.warnings.size(), 1u);
  EXPECT_EQ(loaded.data, d);
}

TEST(Persistence, MissingAugmentationSurvivesRoundTrip) {
  auto d = mine(kSim, {}, Theta0Sampler::uniform_box(), 6, 13);
  for (auto& s : d.samples) s.t_joint.reset();
  const auto back = from_jsonl(to_jsonl(d));
  EXPECT_FALSE(back.has_joint_score());
  EXPECT_TRUE(back.has_joint_ratio());
}

TEST(DatasetHash, ChangesWithContent) {
  const auto a = mine(kSim, {}, Theta0Sampler::uniform_box(), 10, 1);
  const auto b = mine(kSim, {}, Theta0Sampler::uniform_box(), 10, 2);
  EXPECT_EQ(dataset_hash(a), dataset_hash(mine(kSim, {}, Theta0Sampler::uniform_box(), 10, 1)));
  EXPECT_NE(dataset_hash(a), dataset_hash(b));
}
