#include "lfi/training.hpp"

#include "lfi/io.hpp"
#include "lfi/parallel.hpp"
#include "lfi/ratio_estimators.hpp"
#include "lfi/rng.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace lfi {

using nlohmann::json;

namespace {

constexpr std::size_t kEvalChunk = 4096;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void shuffle_in_place(std::vector<AugmentedSample>& v, Engine& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

class Adam {
 public:
  Adam(Eigen::Index n, AdamSettings s) : s_(s), m_(Vec::Zero(n)), v_(Vec::Zero(n)) {}

  void step(Vec& params, const Vec& grad, double lr) {
    ++t_;
    m_ = s_.beta1 * m_ + (1.0 - s_.beta1) * grad;
    v_ = s_.beta2 * v_ + (1.0 - s_.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + s_.epsilon);
  }

 private:
  AdamSettings s_;
  Vec m_, v_;
  long t_ = 0;
};

}  // namespace

void TrainConfig::validate() const {
  loss.validate();
  if (epochs < 0) throw InvalidConfig("epochs must be non-negative");
  if (batch_size < 1) throw InvalidConfig("batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw InvalidConfig("learning_rate must be positive");
  if (!(lr_decay_factor > 0.0) || !(lr_decay_at >= 0.0 && lr_decay_at <= 1.0))
    throw InvalidConfig("learning-rate decay must have a positive factor and a point in [0, 1]");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
      !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0) || !(optimizer.epsilon > 0.0))
    throw InvalidConfig("optimizer betas must lie in [0, 1) and epsilon be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw InvalidConfig("validation_fraction must lie in (0, 1)");
  if (early_stop_patience < 1) throw InvalidConfig("early_stop_patience must be positive");
}

double TrainConfig::learning_rate_at(int epoch) const {
  const int decay_from = static_cast<int>(std::floor(lr_decay_at * epochs));
  return epoch >= decay_from ? learning_rate * lr_decay_factor : learning_rate;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["loss"] = std::string(loss_name(c.loss.kind));
  j["alpha"] = c.loss.alpha;
  j["hybrid_lambda"] = c.loss.hybrid_lambda;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["lr_decay_factor"] = c.lr_decay_factor;
  j["lr_decay_at"] = c.lr_decay_at;
  j["optimizer"] = {{"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon}};
  j["seed"] = c.seed;
  j["validation_fraction"] = c.validation_fraction;
  j["early_stop_patience"] = c.early_stop_patience;
  return j.dump(2) + "\n";
}

TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("training config: {}", e.what()));
  }
  if (!j.is_object()) throw ParseError("training config must be a JSON object");
  static const std::set<std::string> known = {
      "loss",        "alpha",         "hybrid_lambda", "epochs",
      "batch_size",  "learning_rate", "lr_decay_factor", "lr_decay_at",
      "optimizer",   "seed",          "validation_fraction", "early_stop_patience"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw InvalidConfig(fmt::format("unknown training config key '{}'", key));

  TrainConfig c = base;
  try {
    if (j.contains("loss")) c.loss.kind = parse_loss(j["loss"].get<std::string>());
    if (j.contains("alpha")) c.loss.alpha = j["alpha"].get<double>();
    if (j.contains("hybrid_lambda")) c.loss.hybrid_lambda = j["hybrid_lambda"].get<double>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("lr_decay_factor")) c.lr_decay_factor = j["lr_decay_factor"].get<double>();
    if (j.contains("lr_decay_at")) c.lr_decay_at = j["lr_decay_at"].get<double>();
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      if (o.contains("beta1")) c.optimizer.beta1 = o["beta1"].get<double>();
      if (o.contains("beta2")) c.optimizer.beta2 = o["beta2"].get<double>();
      if (o.contains("epsilon")) c.optimizer.epsilon = o["epsilon"].get<double>();
    }
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("validation_fraction"))
      c.validation_fraction = j["validation_fraction"].get<double>();
    if (j.contains("early_stop_patience"))
      c.early_stop_patience = j["early_stop_patience"].get<int>();
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("training config: {}", e.what()));
  }
  c.validate();
  return c;
}

double dataset_loss(const SurrogateNetwork& net, std::span<const AugmentedSample> samples,
                    const LossConfig& config, std::size_t* ratio_clamps) {
  if (samples.empty()) throw InvalidConfig("dataset_loss: no samples");
  double total = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const auto chunk = samples.subspan(start, std::min(kEvalChunk, samples.size() - start));
    total += evaluate_loss(net, chunk, config, ratio_clamps) * static_cast<double>(chunk.size());
  }
  const double loss = total / static_cast<double>(samples.size());
  if (!std::isfinite(loss)) throw NonFiniteError("non-finite validation loss");
  return loss;
}

TrainResult train(SurrogateNetwork net, const AugmentedDataset& data, const TrainConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  check_requirements(data.samples, config.loss);

  TrainResult result{std::move(net), {}};
  TrainReport& report = result.report;
  if (config.epochs == 0) {
    report.wall_clock_s = seconds_since(t0);
    return result;
  }

  auto [train_set, validation_set] = split(data, config.validation_fraction, config.seed);
  if (train_set.empty() || validation_set.empty())
    throw InvalidConfig("dataset too small for the requested validation split");
  if (static_cast<std::size_t>(config.batch_size) > train_set.size())
    throw InvalidConfig(fmt::format("batch_size {} exceeds the {} training samples",
                                    config.batch_size, train_set.size()));

  SurrogateNetwork& current = result.net;
  Vec params = current.parameters();
  Vec best = params;
  Adam adam(params.size(), config.optimizer);

  report.initial_validation_loss = dataset_loss(current, validation_set.samples, config.loss);
  report.best_validation_loss = report.initial_validation_loss;
  std::vector<AugmentedSample> order = std::move(train_set.samples);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  int since_best = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Engine rng(config.seed, Stream::shuffle, static_cast<std::uint64_t>(epoch));
    shuffle_in_place(order, rng);
    const double lr = config.learning_rate_at(epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::span<const AugmentedSample> b(order.data() + start,
                                               std::min(batch, order.size() - start));
      const LossGradient lg = loss_gradients(current, b, config.loss);
      if (!std::isfinite(lg.loss) || !lg.gradient.allFinite())
        throw NonFiniteError(fmt::format("non-finite training loss in epoch {}", epoch));
      report.ratio_clamps += lg.ratio_clamps;
      report.output_clamps += lg.output_clamps;
      epoch_loss += lg.loss * static_cast<double>(b.size());
      adam.step(params, lg.gradient, lr);
      current.set_parameters(params);
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    const double val = dataset_loss(current, validation_set.samples, config.loss);
    report.validation_loss.push_back(val);
    if (val < report.best_validation_loss) {
      report.best_validation_loss = val;
      report.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      report.early_stopped = true;
      break;
    }
  }

  current.set_parameters(best);
  report.wall_clock_s = seconds_since(t0);
  return result;
}

// --- sweeps ------------------------------------------------------------------------

void SweepConfig::validate(std::size_t available) const {
  if (sizes.empty() || losses.empty() || seeds.empty())
    throw InvalidConfig("sweep needs at least one size, loss and seed");
  for (std::size_t n : sizes)
    if (n < 2 || n > available)
      throw InvalidConfig(fmt::format("sweep size {} outside [2, {}] available records", n, available));
  base.validate();
  eval.validate();
}

std::vector<SweepRow> sweep(const AugmentedDataset& data, const Simulator& sim,
                            const SweepConfig& config) {
  config.validate(data.size());
  const std::vector<int> sizes =
      config.layer_sizes.empty() ? default_layer_sizes(sim.observable_dim()) : config.layer_sizes;

  std::vector<SweepRow> rows;
  for (std::size_t n : config.sizes)
    for (LossKind loss : config.losses)
      for (std::uint64_t seed : config.seeds) rows.push_back({n, loss, seed, 0.0, 0.0, 0.0});

  // Requirements are checked up front so a missing field fails before any training.
  for (LossKind loss : config.losses) {
    LossConfig lc = config.base.loss;
    lc.kind = loss;
    check_requirements(data.samples, lc);
  }

  EvalConfig eval = config.eval;
  eval.threads = 1;  // parallelism is spent on cells
  parallel_for(rows.size(), config.threads, [&](std::size_t i) {
    SweepRow& row = rows[i];
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig tc = config.base;
    tc.loss.kind = row.loss;
    tc.seed = row.seed;
    TrainResult trained =
        train(SurrogateNetwork::initialized(sizes, row.seed), data.head(row.n_train), tc);
    const NetworkEstimator estimator(std::move(trained.net), std::string(loss_name(row.loss)));
    const MseResult mse = expected_mse(estimator, sim, eval);
    row.expected_mse = mse.mse;
    row.mse_se = mse.se;
    row.wall_clock_s = seconds_since(t0);
  });
  return rows;
}

std::vector<SweepMedian> sweep_medians(const std::vector<SweepRow>& rows) {
  std::map<std::pair<std::size_t, int>, std::vector<double>> cells;
  for (const auto& r : rows) cells[{r.n_train, static_cast<int>(r.loss)}].push_back(r.expected_mse);
  std::vector<SweepMedian> out;
  for (auto& [key, values] : cells) {
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size();
    const double median = m % 2 ? values[m / 2] : 0.5 * (values[m / 2 - 1] + values[m / 2]);
    out.push_back({key.first, static_cast<LossKind>(key.second), median, m});
  }
  return out;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows, bool with_timing) {
  std::string out = "n_train,loss,seed,expected_mse,wall_clock_s\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{}\n", r.n_train, loss_name(r.loss), r.seed,
                       format_double(r.expected_mse),
                       with_timing ? fmt::format("{:.3f}", r.wall_clock_s) : std::string());
  return out;
}

std::vector<SweepRow> sweep_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "n_train,loss,seed,expected_mse,wall_clock_s")
    throw ParseError("sweep CSV: missing or unexpected header");
  std::vector<SweepRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 5) throw ParseError(fmt::format("sweep CSV line {}: expected 5 fields", line_no));
    try {
      SweepRow r;
      r.n_train = std::stoull(f[0]);
      r.loss = parse_loss(f[1]);
      r.seed = std::stoull(f[2]);
      r.expected_mse = std::stod(f[3]);
      r.wall_clock_s = f[4].empty() ? 0.0 : std::stod(f[4]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError(fmt::format("sweep CSV line {}: malformed number", line_no));
    } catch (const InvalidConfig& e) {
      throw ParseError(fmt::format("sweep CSV line {}: {}", line_no, e.what()));
    }
  }
  if (rows.empty()) throw ParseError("sweep CSV has no rows");
  return rows;
}

std::string medians_to_csv(const std::vector<SweepMedian>& medians) {
  std::string out = "n_train,loss,median_expected_mse,seeds\n";
  for (const auto& m : medians)
    out += fmt::format("{},{},{},{}\n", m.n_train, loss_name(m.loss), format_double(m.median_mse),
                       m.seeds);
  return out;
}

}  // namespace lfi
