#include "lfi/dataset.hpp"

#include "lfi/io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lfi {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "lfi-augmented-v1";

void append_array(std::string& out, const double* v, Eigen::Index n) {
  out += '[';
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  out += ']';
}

void append_pair(std::string& out, const ParameterPoint& p) {
  const double v[2] = {p.a, p.b};
  append_array(out, v, 2);
}

ParameterPoint point_from(const json& j) {
  const auto v = j.get<std::array<double, 2>>();
  return {v[0], v[1]};
}

}  // namespace

std::size_t AugmentedDataset::count_label(int y) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [y](const auto& s) { return s.y == y; }));
}

bool AugmentedDataset::has_joint_ratio() const {
  return std::all_of(samples.begin(), samples.end(),
                     [](const auto& s) { return s.log_r_joint.has_value(); });
}

bool AugmentedDataset::has_joint_score() const {
  return std::all_of(samples.begin(), samples.end(),
                     [](const auto& s) { return s.t_joint.has_value(); });
}

AugmentedDataset AugmentedDataset::head(std::size_t n) const {
  AugmentedDataset out;
  out.meta = meta;
  const auto end = samples.begin() + static_cast<std::ptrdiff_t>(std::min(n, samples.size()));
  out.samples.assign(samples.begin(), end);
  return out;
}

// --- theta0 sampler ----------------------------------------------------------------

Theta0Sampler Theta0Sampler::uniform_box(ParameterBox box) {
  Theta0Sampler s;
  s.kind_ = Kind::uniform;
  s.box_ = box;
  return s;
}

Theta0Sampler Theta0Sampler::grid(Grid grid) {
  if (grid.size() == 0) throw InvalidConfig("theta0 grid is empty");
  Theta0Sampler s;
  s.kind_ = Kind::grid;
  s.grid_ = grid;
  s.box_ = grid.box;
  return s;
}

Theta0Sampler Theta0Sampler::fixed(ParameterPoint p) {
  Theta0Sampler s;
  s.kind_ = Kind::fixed;
  s.point_ = p;
  return s;
}

ParameterPoint Theta0Sampler::draw(Engine& rng) const {
  switch (kind_) {
    case Kind::uniform: {
      const double w = box_.hi - box_.lo;
      const double a = box_.lo + w * rng.uniform();
      const double b = box_.lo + w * rng.uniform();
      return {a, b};
    }
    case Kind::grid: {
      const auto n = static_cast<double>(grid_.size());
      auto idx = static_cast<std::size_t>(rng.uniform() * n);
      return grid_.at(std::min(idx, grid_.size() - 1));
    }
    case Kind::fixed:
      return point_;
  }
  return point_;
}

std::string Theta0Sampler::describe() const {
  switch (kind_) {
    case Kind::uniform:
      return fmt::format("uniform-box[{},{}]", format_double(box_.lo), format_double(box_.hi));
    case Kind::grid:
      return fmt::format("grid{}x{}[{},{}]", grid_.na, grid_.nb, format_double(box_.lo),
                         format_double(box_.hi));
    case Kind::fixed:
      return fmt::format("fixed({},{})", format_double(point_.a), format_double(point_.b));
  }
  return {};
}

// --- mining ------------------------------------------------------------------------

MinedRecord mine_record(const Simulator& sim, const ParameterPoint& theta1_ref,
                        const Theta0Sampler& sampler, std::uint64_t seed, std::size_t index,
                        const ParameterBox& box) {
  Engine rng(seed, Stream::mine, index);
  const ParameterPoint theta0 = sampler.draw(rng);
  if (!box.contains(theta0))
    throw InvalidParameter(fmt::format("theta0 sampler produced ({}, {}) outside the box",
                                       theta0.a, theta0.b));
  const int y = static_cast<int>(index % 2);

  MinedRecord rec;
  rec.joint = sim.sample_one(y == 0 ? theta0 : theta1_ref, rng);
  AugmentedSample& s = rec.sample;
  s.theta0 = theta0;
  s.theta1 = theta1_ref;
  s.x = rec.joint.x;
  s.y = y;
  s.log_r_joint = sim.joint_log_ratio(rec.joint, theta0, theta1_ref);
  s.t_joint = sim.joint_score(rec.joint, theta0);
  if (!std::isfinite(*s.log_r_joint) || !s.t_joint->allFinite())
    throw NonFiniteError(fmt::format("mined record {} has a non-finite joint quantity", index));
  return rec;
}

AugmentedDataset mine(const Simulator& sim, const ParameterPoint& theta1_ref,
                      const Theta0Sampler& sampler, std::size_t n, std::uint64_t seed,
                      const ParameterBox& box) {
  if (n < 2) throw InvalidConfig("mine: n must be at least 2");
  if (!box.contains(theta1_ref)) throw InvalidParameter("mine: theta1 lies outside the box");
  AugmentedDataset out;
  out.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.samples.push_back(mine_record(sim, theta1_ref, sampler, seed, i, box).sample);
  out.meta.simulator_hash = simulator_hash(sim);
  out.meta.seed = seed;
  out.meta.theta1_ref = theta1_ref;
  out.meta.theta0_sampler = sampler.describe();
  out.meta.box = box;
  out.meta.simulator_calls = n;
  return out;
}

std::pair<AugmentedDataset, AugmentedDataset> split(const AugmentedDataset& data,
                                                    double validation_fraction,
                                                    std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw InvalidConfig("split: fraction must lie strictly between 0 and 1");

  std::vector<char> to_validation(data.size(), 0);
  Engine rng(seed, Stream::split);
  for (int label = 0; label <= 1; ++label) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.samples[i].y == label) idx.push_back(i);
    // Fisher-Yates with our own engine: std::shuffle is not specified bit-for-bit.
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng() % i);
      std::swap(idx[i - 1], idx[j]);
    }
    const auto take = static_cast<std::size_t>(
        std::llround(validation_fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < take; ++i) to_validation[idx[i]] = 1;
  }

  std::pair<AugmentedDataset, AugmentedDataset> parts;
  parts.first.meta = data.meta;
  parts.second.meta = data.meta;
  for (std::size_t i = 0; i < data.size(); ++i)
    (to_validation[i] ? parts.second : parts.first).samples.push_back(data.samples[i]);
  return parts;
}

// --- persistence -------------------------------------------------------------------

std::string to_jsonl(const AugmentedDataset& data) {
  nlohmann::ordered_json meta;
  meta["format"] = kFormat;
  meta["simulator_hash"] = data.meta.simulator_hash;
  meta["seed"] = data.meta.seed;
  meta["theta1_ref"] = {data.meta.theta1_ref.a, data.meta.theta1_ref.b};
  meta["theta0_sampler"] = data.meta.theta0_sampler;
  meta["box"] = {data.meta.box.lo, data.meta.box.hi};
  meta["simulator_calls"] = data.meta.simulator_calls;
  meta["count"] = data.size();

  std::string out = meta.dump();
  out += '\n';
  for (const auto& s : data.samples) {
    out += "{\"theta0\":";
    append_pair(out, s.theta0);
    out += ",\"theta1\":";
    append_pair(out, s.theta1);
    out += ",\"x\":";
    append_array(out, s.x.data(), s.x.size());
    out += fmt::format(",\"y\":{}", s.y);
    if (s.log_r_joint) out += ",\"log_r_joint\":" + format_double(*s.log_r_joint);
    if (s.t_joint) {
      out += ",\"t_joint\":";
      append_array(out, s.t_joint->data(), 2);
    }
    out += "}\n";
  }
  return out;
}

AugmentedDataset from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  AugmentedDataset data;
  std::size_t expected = 0;

  auto fail = [&](const std::string& what) {
    return ParseError(fmt::format("line {}: {}", line_no, what));
  };

  if (!std::getline(in, line)) throw ParseError("line 1: missing metadata line");
  ++line_no;
  try {
    const json meta = json::parse(line);
    if (meta.at("format").get<std::string>() != kFormat) throw fail("unknown format tag");
    data.meta.simulator_hash = meta.at("simulator_hash").get<std::string>();
    data.meta.seed = meta.at("seed").get<std::uint64_t>();
    data.meta.theta1_ref = point_from(meta.at("theta1_ref"));
    data.meta.theta0_sampler = meta.at("theta0_sampler").get<std::string>();
    const auto box = meta.at("box").get<std::array<double, 2>>();
    data.meta.box = {box[0], box[1]};
    data.meta.simulator_calls = meta.at("simulator_calls").get<std::size_t>();
    expected = meta.at("count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw fail(std::string("bad metadata: ") + e.what());
  }

  data.samples.reserve(expected);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw fail("empty record line");
    try {
      const json j = json::parse(line);
      AugmentedSample s;
      s.theta0 = point_from(j.at("theta0"));
      s.theta1 = point_from(j.at("theta1"));
      const auto x = j.at("x").get<std::vector<double>>();
      s.x = Eigen::Map<const Vec>(x.data(), static_cast<Eigen::Index>(x.size()));
      s.y = j.at("y").get<int>();
      if (s.y != 0 && s.y != 1) throw fail("label must be 0 or 1");
      if (j.contains("log_r_joint")) s.log_r_joint = j.at("log_r_joint").get<double>();
      if (j.contains("t_joint")) {
        const auto t = j.at("t_joint").get<std::array<double, 2>>();
        s.t_joint = Vec2(t[0], t[1]);
      }
      data.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
  }
  if (data.size() != expected)
    throw ParseError(fmt::format("line {}: truncated dataset, expected {} records, found {}",
                                 line_no + 1, expected, data.size()));
  if (!text.empty() && text.back() != '\n')
    throw ParseError(fmt::format("line {}: truncated final line", line_no));
  return data;
}

void save_dataset(const AugmentedDataset& data, const std::filesystem::path& path) {
  write_file_atomic(path, to_jsonl(data));
}

LoadedDataset load_dataset(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_simulator_hash) {
  LoadedDataset out;
  out.data = from_jsonl(read_file(path));
  if (expected_simulator_hash && *expected_simulator_hash != out.data.meta.simulator_hash)
    out.warnings.push_back(fmt::format(
        "warning: dataset '{}' was mined with simulator {} but {} was supplied", path.string(),
        out.data.meta.simulator_hash, *expected_simulator_hash));
  return out;
}

std::string dataset_hash(const AugmentedDataset& data) {
  return sha256_hex(to_jsonl(data)).substr(0, 16);
}

}  // namespace lfi
