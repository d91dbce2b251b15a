// lfi: simulate, mine, train, sweep, eval, limits, plot.

#include "lfi/dataset.hpp"
#include "lfi/estimator.hpp"
#include "lfi/evaluation.hpp"
#include "lfi/io.hpp"
#include "lfi/limits.hpp"
#include "lfi/plot.hpp"
#include "lfi/ratio_estimators.hpp"
#include "lfi/simulators.hpp"
#include "lfi/training.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <map>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lfi;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  return parts;
}

ParameterPoint parse_point(const std::string& s) {
  const auto parts = split_list(s);
  if (parts.size() != 2) throw InvalidConfig(fmt::format("expected a point 'a,b', got '{}'", s));
  try {
    return {std::stod(parts[0]), std::stod(parts[1])};
  } catch (const std::logic_error&) {
    throw InvalidConfig(fmt::format("malformed point '{}'", s));
  }
}

template <typename T>
std::vector<T> parse_numbers(const std::string& s) {
  std::vector<T> out;
  for (const auto& p : split_list(s)) {
    try {
      if constexpr (std::is_floating_point_v<T>)
        out.push_back(static_cast<T>(std::stod(p)));
      else
        out.push_back(static_cast<T>(std::stoull(p)));
    } catch (const std::logic_error&) {
      throw InvalidConfig(fmt::format("malformed number '{}' in '{}'", p, s));
    }
  }
  if (out.empty()) throw InvalidConfig("empty list");
  return out;
}

std::vector<int> parse_layers(const std::string& hidden, int observable_dim) {
  if (hidden.empty()) return default_layer_sizes(observable_dim);
  std::vector<int> sizes = {observable_dim + 2};
  for (auto n : parse_numbers<std::size_t>(hidden)) sizes.push_back(static_cast<int>(n));
  sizes.push_back(1);
  return sizes;
}

/// Collects inputs, outputs and the canonical argument string for the manifest.
class Run {
 public:
  Run(std::string command, const Globals& g, std::vector<std::string> argv)
      : command_(std::move(command)), globals_(g), argv_(std::move(argv)) {}

  fs::path input(const std::string& path) {
    if (!fs::exists(path)) throw Error(fmt::format("input '{}' does not exist", path));
    const std::string warning = check_against_manifest(path);
    if (!warning.empty()) std::cerr << warning << "\n";
    inputs_[path] = file_sha256(path);
    return path;
  }

  void config_text(const std::string& text) { config_ += text; }

  void write(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, contents);
    outputs_.push_back(path);
  }

  void finish() const {
    RunManifest m;
    m.command = command_;
    m.arguments = argv_;
    std::string canonical;
    for (const auto& a : argv_) canonical += a + '\n';
    m.config_hash = sha256_hex(canonical + config_);
    m.input_hashes = inputs_;
    m.seed = globals_.seed;
    m.tool_version = std::string(kToolVersion);
    for (const auto& o : outputs_) m.outputs[o.string()] = file_sha256(o);
    for (const auto& o : outputs_) write_manifest(m, o);
  }

 private:
  std::string command_;
  Globals globals_;
  std::vector<std::string> argv_;
  std::string config_;
  std::map<std::string, std::string> inputs_;
  std::vector<fs::path> outputs_;
};

fs::path sibling(const fs::path& out, const std::string& suffix, const std::string& extension) {
  fs::path p = out;
  p.replace_filename(out.stem().string() + suffix + extension);
  return p;
}

Simulator simulator_from(Run& run, const std::string& spec_path) {
  if (spec_path.empty()) return Simulator(MixtureSpec::default_spec());
  return load_simulator(run.input(spec_path));
}

std::unique_ptr<RatioEstimator> make_estimator(Run& run, const std::string& kind,
                                               const std::string& model_path, const Simulator& sim,
                                               const ParameterPoint& theta1_ref) {
  if (!model_path.empty()) {
    Model model = load_model(run.input(model_path));
    const std::string name = kind.empty() || kind == "model" ? model.meta.loss : kind;
    return std::make_unique<NetworkEstimator>(std::move(model.net), name);
  }
  if (kind == "truth") return std::make_unique<TruthEstimator>(sim, theta1_ref);
  if (kind == "constant") return std::make_unique<ConstantEstimator>();
  throw InvalidConfig(fmt::format("unknown estimator '{}' (truth, constant, or --model)", kind));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood-free inference with augmented simulator data"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--out", g.out, "output path");
  const std::vector<std::string> args(argv + 1, argv + argc);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "sample observations or write a simulator spec");
  std::string spec_path, theta_str = "0,0";
  std::size_t sim_n = 1000;
  bool write_spec = false;
  std::optional<double> smear_a, smear_s;
  sim_cmd->add_option("--spec", spec_path, "simulator spec JSON (default mixture if omitted)");
  sim_cmd->add_option("--theta", theta_str, "parameter point a,b")->capture_default_str();
  sim_cmd->add_option("--n", sim_n, "number of events")->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_flag("--write-spec", write_spec, "write the simulator spec instead of samples");
  sim_cmd->add_option("--smear-a", smear_a, "wrap with smearing: warp strength");
  sim_cmd->add_option("--smear-s", smear_s, "wrap with smearing: noise scale");

  // mine
  auto* mine_cmd = app.add_subcommand("mine", "mine an augmented training set");
  std::size_t mine_n = 0;
  std::string theta1_str = "0,0", theta0_mode = "uniform";
  mine_cmd->add_option("--spec", spec_path, "simulator spec JSON");
  mine_cmd->add_option("--n", mine_n, "number of records")->required()->check(CLI::PositiveNumber);
  mine_cmd->add_option("--theta1", theta1_str, "reference hypothesis a,b")->capture_default_str();
  mine_cmd->add_option("--theta0", theta0_mode, "uniform | grid | a,b")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a surrogate");
  std::string data_path, config_path, loss_name_str, hidden;
  std::optional<double> alpha, hybrid;
  std::optional<int> epochs, batch;
  std::optional<double> lr;
  train_cmd->add_option("--data", data_path, "augmented dataset")->required();
  train_cmd->add_option("--config", config_path, "training config JSON");
  train_cmd->add_option("--loss", loss_name_str, "carl | alice | rolr | cascal | rascal | alices");
  train_cmd->add_option("--alpha", alpha, "score-term weight");
  train_cmd->add_option("--lambda", hybrid, "ALICE/CARL cross-entropy mix");
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--batch-size", batch);
  train_cmd->add_option("--lr", lr);
  train_cmd->add_option("--hidden", hidden, "hidden layer widths, e.g. 100,100,100,100,100");
  std::size_t n_train = 0;
  train_cmd->add_option("--n-train", n_train, "use only the first N records");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "train one model per (size, loss, seed)");
  std::string sizes_str, losses_str, seeds_str = "1";
  int grid_n = 0, n_eval = 1000;
  std::uint64_t eval_seed = 1;
  bool timing = false;
  sweep_cmd->add_option("--data", data_path, "augmented dataset")->required();
  sweep_cmd->add_option("--spec", spec_path, "simulator spec JSON");
  sweep_cmd->add_option("--config", config_path, "training config JSON");
  sweep_cmd->add_option("--sizes", sizes_str, "training sizes")->required();
  sweep_cmd->add_option("--losses", losses_str, "losses")->required();
  sweep_cmd->add_option("--seeds", seeds_str, "training seeds")->capture_default_str();
  sweep_cmd->add_option("--alpha", alpha);
  sweep_cmd->add_option("--epochs", epochs);
  sweep_cmd->add_option("--hidden", hidden);
  sweep_cmd->add_option("--grid", grid_n, "evaluation grid points per axis");
  sweep_cmd->add_option("--n-eval", n_eval, "evaluation events per grid point")->capture_default_str();
  sweep_cmd->add_option("--eval-seed", eval_seed)->capture_default_str();
  sweep_cmd->add_flag("--timing", timing, "fill wall_clock_s (output no longer byte-reproducible)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "expected MSE of an estimator");
  std::string estimator_kind = "truth", model_path;
  int hist_bins = 20;
  std::size_t hist_n = 10000;
  eval_cmd->add_option("--spec", spec_path);
  eval_cmd->add_option("--estimator", estimator_kind, "truth | constant | histogram")->capture_default_str();
  eval_cmd->add_option("--model", model_path, "trained model JSON");
  eval_cmd->add_option("--grid", grid_n, "grid points per axis");
  eval_cmd->add_option("--n-eval", n_eval)->capture_default_str();
  eval_cmd->add_option("--theta1", theta1_str)->capture_default_str();
  eval_cmd->add_option("--bins", hist_bins)->capture_default_str();
  eval_cmd->add_option("--hist-n", hist_n)->capture_default_str();

  // limits
  auto* limits_cmd = app.add_subcommand("limits", "p-value map and contours");
  std::string method = "asymptotic", statistic = "reference", theta_true_str = "0,0",
              levels_str = "0.32,0.05";
  int toys = 1000;
  std::size_t n_obs = 36;
  std::uint64_t repetition = 0;
  limits_cmd->add_option("--spec", spec_path);
  limits_cmd->add_option("--estimator", estimator_kind, "truth | constant")->capture_default_str();
  limits_cmd->add_option("--model", model_path, "trained model JSON");
  limits_cmd->add_option("--method", method, "asymptotic | neyman")->capture_default_str();
  limits_cmd->add_option("--statistic", statistic, "reference | profile (neyman)")->capture_default_str();
  limits_cmd->add_option("--toys", toys)->check(CLI::Range(100, 100000000))->capture_default_str();
  limits_cmd->add_option("--n-obs", n_obs)->check(CLI::PositiveNumber)->capture_default_str();
  limits_cmd->add_option("--theta-true", theta_true_str)->capture_default_str();
  limits_cmd->add_option("--repetition", repetition, "observed-set index")->capture_default_str();
  limits_cmd->add_option("--grid", grid_n, "grid points per axis");
  limits_cmd->add_option("--levels", levels_str, "contour p-value levels")->capture_default_str();

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "SVG figures from sweep or p-value CSVs");
  std::string sweep_csv, maps_csv;
  plot_cmd->add_option("--sweep", sweep_csv, "sweep CSV");
  plot_cmd->add_option("--maps", maps_csv, "comma-separated p-value CSVs");
  plot_cmd->add_option("--levels", levels_str)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  auto require_out = [&] {
    if (g.out.empty()) throw InvalidConfig("--out is required");
    return fs::path(g.out);
  };

  try {
    if (*sim_cmd) {
      Run run("simulate", g, args);
      const fs::path out = require_out();
      Simulator sim = simulator_from(run, spec_path);
      if (smear_a || smear_s) sim = wrap_with_smearing(sim.spec(), smear_a.value_or(0.0), smear_s.value_or(0.0));
      if (write_spec) {
        run.write(out, simulator_to_json(sim));
      } else {
        const ParameterPoint theta = parse_point(theta_str);
        require_finite(theta, "simulate");
        std::string csv;
        for (int i = 0; i < sim.observable_dim(); ++i) csv += fmt::format("x_{},", i);
        csv += "component\n";
        for (const auto& s : sim.sample_joint(theta, sim_n, g.seed)) {
          for (Eigen::Index i = 0; i < s.x.size(); ++i) csv += format_double(s.x[i]) + ",";
          csv += fmt::format("{}\n", s.z.component);
        }
        run.write(out, csv);
      }
      run.finish();
    } else if (*mine_cmd) {
      Run run("mine", g, args);
      const fs::path out = require_out();
      const Simulator sim = simulator_from(run, spec_path);
      const ParameterBox box{};
      Theta0Sampler sampler = Theta0Sampler::uniform_box(box);
      if (theta0_mode == "grid")
        sampler = Theta0Sampler::grid(Grid{box, 21, 21});
      else if (theta0_mode != "uniform")
        sampler = Theta0Sampler::fixed(parse_point(theta0_mode));
      const AugmentedDataset data = mine(sim, parse_point(theta1_str), sampler, mine_n, g.seed, box);
      run.write(out, to_jsonl(data));
      run.finish();
    } else if (*train_cmd) {
      Run run("train", g, args);
      const fs::path out = require_out();
      LoadedDataset loaded = load_dataset(run.input(data_path));
      for (const auto& w : loaded.warnings) std::cerr << w << "\n";
      AugmentedDataset data = n_train > 0 ? loaded.data.head(n_train) : std::move(loaded.data);
      TrainConfig tc;
      tc.seed = g.seed;
      if (!config_path.empty()) {
        const std::string text = read_file(run.input(config_path));
        run.config_text(text);
        tc = train_config_from_json(text, tc);
      }
      if (!loss_name_str.empty()) tc.loss.kind = parse_loss(loss_name_str);
      if (alpha) tc.loss.alpha = *alpha;
      if (hybrid) tc.loss.hybrid_lambda = *hybrid;
      if (epochs) tc.epochs = *epochs;
      if (batch) tc.batch_size = *batch;
      if (lr) tc.learning_rate = *lr;
      tc.validate();
      const int d = data.empty() ? 0 : static_cast<int>(data.samples.front().x.size());
      TrainResult result =
          train(SurrogateNetwork::initialized(parse_layers(hidden, d), tc.seed), data, tc);

      Model model{std::move(result.net), {}};
      model.meta.loss = std::string(loss_name(tc.loss.kind));
      model.meta.alpha = tc.loss.alpha;
      model.meta.hybrid_lambda = tc.loss.hybrid_lambda;
      model.meta.seed = tc.seed;
      model.meta.dataset_hash = dataset_hash(data);
      model.meta.simulator_hash = data.meta.simulator_hash;
      model.meta.theta1_ref = data.meta.theta1_ref;
      model.meta.epochs_run = static_cast<int>(result.report.train_loss.size());
      model.meta.best_epoch = result.report.best_epoch;
      model.meta.best_validation_loss = result.report.best_validation_loss;
      run.write(out, model_to_json(model));

      std::string curves = "epoch,train_loss,validation_loss\n";
      curves += fmt::format("-1,,{}\n", format_double(result.report.initial_validation_loss));
      for (std::size_t e = 0; e < result.report.train_loss.size(); ++e)
        curves += fmt::format("{},{},{}\n", e, format_double(result.report.train_loss[e]),
                              format_double(result.report.validation_loss[e]));
      run.write(sibling(out, "_curves", ".csv"), curves);
      run.finish();
      std::cerr << fmt::format("trained {} epochs, best validation loss {:.6g} at epoch {}, "
                               "{} ratio clamps, {} output clamps, {:.1f} s\n",
                               model.meta.epochs_run, result.report.best_validation_loss,
                               result.report.best_epoch, result.report.ratio_clamps,
                               result.report.output_clamps, result.report.wall_clock_s);
    } else if (*sweep_cmd) {
      Run run("sweep", g, args);
      const fs::path out = require_out();
      const Simulator sim = simulator_from(run, spec_path);
      LoadedDataset loaded = load_dataset(run.input(data_path), simulator_hash(sim));
      for (const auto& w : loaded.warnings) std::cerr << w << "\n";
      SweepConfig sc;
      if (!config_path.empty()) {
        const std::string text = read_file(run.input(config_path));
        run.config_text(text);
        sc.base = train_config_from_json(text, sc.base);
      }
      if (alpha) sc.base.loss.alpha = *alpha;
      if (epochs) sc.base.epochs = *epochs;
      sc.sizes = parse_numbers<std::size_t>(sizes_str);
      for (const auto& l : split_list(losses_str)) sc.losses.push_back(parse_loss(l));
      sc.seeds = parse_numbers<std::uint64_t>(seeds_str);
      if (grid_n > 0) sc.eval.grid = Grid{ParameterBox{}, grid_n, grid_n};
      sc.eval.n_eval = n_eval;
      sc.eval.seed = eval_seed;
      sc.eval.theta1_ref = loaded.data.meta.theta1_ref;
      sc.layer_sizes = parse_layers(hidden, sim.observable_dim());
      sc.threads = g.threads;
      const auto rows = sweep(loaded.data, sim, sc);
      run.write(out, sweep_to_csv(rows, timing));
      run.write(sibling(out, "_medians", ".csv"), medians_to_csv(sweep_medians(rows)));
      run.finish();
    } else if (*eval_cmd) {
      Run run("eval", g, args);
      const fs::path out = require_out();
      const Simulator sim = simulator_from(run, spec_path);
      EvalConfig ec;
      if (grid_n > 0) ec.grid = Grid{ParameterBox{}, grid_n, grid_n};
      ec.n_eval = n_eval;
      ec.seed = g.seed;
      ec.threads = g.threads;
      ec.theta1_ref = parse_point(theta1_str);
      MseResult result;
      if (estimator_kind == "histogram" && model_path.empty()) {
        HistogramEstimator::Options opts;
        opts.bins = hist_bins;
        opts.n_per_point = hist_n;
        result = expected_mse(histogram_baseline(sim, opts, ec), sim, ec);
      } else {
        const auto est = make_estimator(run, estimator_kind, model_path, sim, ec.theta1_ref);
        result = expected_mse(*est, sim, ec);
      }
      run.write(out, mse_to_csv(result));
      run.finish();
      std::cerr << fmt::format("expected MSE {:.6g} +- {:.2g}\n", result.mse, result.se);
    } else if (*limits_cmd) {
      Run run("limits", g, args);
      const fs::path out = require_out();
      const Simulator sim = simulator_from(run, spec_path);
      const Grid grid{ParameterBox{}, grid_n > 0 ? grid_n : 21, grid_n > 0 ? grid_n : 21};
      const auto est = make_estimator(run, estimator_kind, model_path, sim, {});
      const ObservedSet observed = draw_observed(sim, parse_point(theta_true_str), n_obs, g.seed, repetition);
      PValueMap map;
      if (method == "asymptotic") {
        map = asymptotic_map(*est, observed, grid);
      } else if (method == "neyman") {
        NeymanConfig nc;
        nc.n_toys = toys;
        nc.seed = g.seed;
        nc.threads = g.threads;
        if (statistic == "profile")
          nc.statistic = NeymanStatistic::profile;
        else if (statistic != "reference")
          throw InvalidConfig(fmt::format("unknown statistic '{}'", statistic));
        map = neyman_map(*est, sim, observed, grid, nc);
      } else {
        throw InvalidConfig(fmt::format("unknown method '{}'", method));
      }
      const auto levels = parse_numbers<double>(levels_str);
      run.write(out, pvalue_map_to_csv(map));
      run.write(sibling(out, "_contours", ".csv"), contours_to_csv(map, extract_contours(map, levels)));
      run.write(sibling(out, "", ".svg"), contours_svg({map}, levels));
      run.finish();
    } else if (*plot_cmd) {
      Run run("plot", g, args);
      const fs::path out = require_out();
      if (sweep_csv.empty() == maps_csv.empty())
        throw InvalidConfig("plot needs exactly one of --sweep or --maps");
      if (!sweep_csv.empty()) {
        run.write(out, sweep_svg(sweep_from_csv(read_file(run.input(sweep_csv)))));
      } else {
        std::vector<PValueMap> maps;
        for (const auto& path : split_list(maps_csv))
          for (auto& m : pvalue_maps_from_csv(read_file(run.input(path)))) maps.push_back(std::move(m));
        run.write(out, contours_svg(maps, parse_numbers<double>(levels_str)));
      }
      run.finish();
    }
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingAugmentation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
