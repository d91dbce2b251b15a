#include "lfi/dataset.hpp"
#include "lfi/estimator.hpp"
#include "lfi/io.hpp"
#include "lfi/limits.hpp"
#include "lfi/training.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

using namespace lfi;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string output;
};

const fs::path kDir = fs::temp_directory_path() / "lfi_cli_tests";

Result run(const std::string& args) {
  fs::create_directories(kDir);
  const fs::path log = kDir / "last.log";
  const std::string cmd = std::string(LFI_BINARY) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, read_file(log)};
}

std::string path(const std::string& name) { return (kDir / name).string(); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kDir);
    const auto r = run("mine --n 600 --seed 3 --out " + path("data.jsonl"));
    ASSERT_EQ(r.status, 0) << r.output;
  }
};

}  // namespace

TEST_F(Cli, MineIsByteIdenticalOnRerun) {
  const std::string first = read_file(path("data.jsonl"));
  ASSERT_EQ(run("mine --n 600 --seed 3 --out " + path("again.jsonl")).status, 0);
  EXPECT_EQ(read_file(path("again.jsonl")), first);
  EXPECT_EQ(from_jsonl(first).size(), 600u);
  const auto manifest = nlohmann::json::parse(read_file(path("data.jsonl.manifest.json")));
  EXPECT_EQ(manifest.at("command"), "mine");
  EXPECT_EQ(manifest.at("seed"), 3);
  EXPECT_EQ(manifest.at("outputs").begin().value(), sha256_hex(first));
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("mine --n 0 --out " + path("x.jsonl")).status, 2);
  EXPECT_EQ(run("mine --out " + path("x.jsonl")).status, 2);
  EXPECT_EQ(run("bogus").status, 2);
  EXPECT_EQ(run("limits --toys 10 --method neyman --out " + path("x.csv")).status, 2);
  EXPECT_FALSE(fs::exists(path("x.jsonl")));
}

TEST_F(Cli, MissingInputIsARuntimeFailure) {
  const auto r = run("train --data " + path("nope.jsonl") + " --out " + path("m.json"));
  EXPECT_EQ(r.status, 1) << r.output;
}

TEST_F(Cli, TrainWritesModelCurvesAndMetadata) {
  const auto r = run("train --data " + path("data.jsonl") +
                     " --loss alices --alpha 2 --epochs 2 --batch-size 32 --hidden 8,8 --seed 4 --out " +
                     path("model.json"));
  ASSERT_EQ(r.status, 0) << r.output;
  const Model m = load_model(path("model.json"));
  EXPECT_EQ(m.meta.loss, "alices");
  EXPECT_EQ(m.meta.alpha, 2.0);
  EXPECT_EQ(m.meta.seed, 4u);
  EXPECT_EQ(m.meta.dataset_hash, dataset_hash(from_jsonl(read_file(path("data.jsonl")))));
  EXPECT_EQ(m.net.layer_sizes(), (std::vector<int>{4, 8, 8, 1}));
  const std::string curves = read_file(path("model_curves.csv"));
  EXPECT_EQ(curves.substr(0, curves.find('\n')), "epoch,train_loss,validation_loss");
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 4);
  EXPECT_TRUE(fs::exists(path("model.json.manifest.json")));
}

TEST_F(Cli, TrainRejectsScoreLossWithoutScores) {
  auto d = from_jsonl(read_file(path("data.jsonl")));
  for (auto& s : d.samples) s.t_joint.reset();
  write_file_atomic(path("noscore.jsonl"), to_jsonl(d));
  const auto r = run("train --data " + path("noscore.jsonl") + " --loss cascal --epochs 1 --out " +
                     path("m2.json"));
  EXPECT_EQ(r.status, 2) << r.output;
  EXPECT_FALSE(fs::exists(path("m2.json")));
}

TEST_F(Cli, SweepProducesOneRowPerCellAndIsReproducible) {
  const std::string args = "sweep --data " + path("data.jsonl") +
                           " --sizes 200,400 --losses carl,alices --seeds 1,2,3 --epochs 1 "
                           "--hidden 8 --grid 3 --n-eval 100 --out ";
  ASSERT_EQ(run(args + path("sweep.csv")).status, 0);
  ASSERT_EQ(run("--threads 2 " + args + path("sweep2.csv")).status, 0);
  const std::string csv = read_file(path("sweep.csv"));
  EXPECT_EQ(sweep_from_csv(csv).size(), 12u);
  EXPECT_EQ(read_file(path("sweep2.csv")), csv);
  EXPECT_TRUE(fs::exists(path("sweep_medians.csv")));
}

TEST_F(Cli, EvalOfTruthIsZero) {
  const auto r = run("eval --estimator truth --grid 3 --n-eval 100 --out " + path("eval.csv"));
  ASSERT_EQ(r.status, 0) << r.output;
  const std::string csv = read_file(path("eval.csv"));
  EXPECT_NE(csv.find("\nall,all,0,0\n"), std::string::npos) << csv;
}

TEST_F(Cli, LimitsAtTheReferenceHaveZeroStatistic) {
  const auto r = run("limits --estimator truth --method neyman --toys 100 --grid 5 --out " +
                     path("limits.csv"));
  ASSERT_EQ(r.status, 0) << r.output;
  const auto maps = pvalue_maps_from_csv(read_file(path("limits.csv")));
  ASSERT_EQ(maps.size(), 1u);
  const std::size_t ref = maps[0].grid.nearest({0, 0});
  EXPECT_EQ(maps[0].q[ref], 0.0);
  EXPECT_TRUE(fs::exists(path("limits_contours.csv")));
  EXPECT_TRUE(fs::exists(path("limits.svg")));
}

TEST_F(Cli, PlotIsDeterministic) {
  ASSERT_EQ(run("limits --estimator truth --grid 11 --out " + path("a.csv")).status, 0);
  ASSERT_EQ(run("limits --estimator constant --grid 11 --out " + path("b.csv")).status, 0);
  const std::string maps = "--maps " + path("a.csv") + "," + path("b.csv");
  ASSERT_EQ(run("plot " + maps + " --out " + path("p1.svg")).status, 0);
  ASSERT_EQ(run("plot " + maps + " --out " + path("p2.svg")).status, 0);
  const std::string svg = read_file(path("p1.svg"));
  EXPECT_EQ(svg, read_file(path("p2.svg")));
  EXPECT_NE(svg.find(">truth<"), std::string::npos);
  EXPECT_NE(svg.find(">constant<"), std::string::npos);
}
