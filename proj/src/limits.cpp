#include "lfi/limits.hpp"

#include "lfi/io.hpp"
#include "lfi/parallel.hpp"
#include "lfi/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace lfi {

namespace {

/// -2 * (sum of each consecutive block of `block` values).
std::vector<double> block_statistics(const Vec& values, std::size_t block) {
  const std::size_t blocks = static_cast<std::size_t>(values.size()) / block;
  std::vector<double> out(blocks);
  for (std::size_t k = 0; k < blocks; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < block; ++i) s += values[static_cast<Eigen::Index>(k * block + i)];
    out[k] = -2.0 * s + 0.0;  // no negative zero
  }
  return out;
}

/// Profiled statistics for `blocks` experiments stacked in xs: q at theta
/// minus the smallest q over the grid and theta itself.
std::vector<double> profiled(const RatioEstimator& estimator, const Mat& xs, std::size_t block,
                             const ParameterPoint& theta, const Grid& grid, int threads) {
  const std::size_t blocks = static_cast<std::size_t>(xs.cols()) / block;
  std::vector<double> at_theta = block_statistics(estimator.log_ratio(xs, theta), block);
  std::vector<std::vector<double>> per_node(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t g) {
    per_node[g] = block_statistics(estimator.log_ratio(xs, grid.at(g)), block);
  });
  std::vector<double> out(blocks);
  for (std::size_t k = 0; k < blocks; ++k) {
    double lo = at_theta[k];
    for (const auto& q : per_node) lo = std::min(lo, q[k]);
    out[k] = at_theta[k] - lo;
  }
  return out;
}

void require_statistic_inputs(const Mat& xs) {
  if (xs.cols() < 1) throw InvalidConfig("test statistic needs at least one event");
}

}  // namespace

ObservedSet draw_observed(const Simulator& sim, const ParameterPoint& theta_true,
                          std::size_t n_obs, std::uint64_t seed, std::uint64_t repetition) {
  if (n_obs < 1) throw InvalidConfig("n_obs must be at least 1");
  require_finite(theta_true, "draw_observed");
  Engine rng(seed, Stream::observed, repetition);
  return {sim.sample_observations(theta_true, n_obs, rng), theta_true, seed, repetition};
}

double test_statistic(const RatioEstimator& estimator, const Mat& xs, const ParameterPoint& theta,
                      const ParameterPoint& theta_ref) {
  require_statistic_inputs(xs);
  return block_statistics(estimator.log_ratio_between(xs, theta, theta_ref),
                          static_cast<std::size_t>(xs.cols()))
      .front();
}

std::vector<double> statistic_scan(const RatioEstimator& estimator, const Mat& xs,
                                   const Grid& grid, const ParameterPoint& theta_ref) {
  std::vector<double> q(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g)
    q[g] = test_statistic(estimator, xs, grid.at(g), theta_ref);
  return q;
}

double chi2_2dof_survival(double q) {
  if (std::isnan(q)) throw InvalidParameter("chi-square tail of NaN");
  return q <= 0.0 ? 1.0 : std::exp(-0.5 * q);
}

PValueMap asymptotic_map(const RatioEstimator& estimator, const ObservedSet& observed,
                         const Grid& grid, const ParameterPoint& theta_ref) {
  PValueMap map{grid, statistic_scan(estimator, observed.x, grid, theta_ref), {}, "asymptotic",
                estimator.name()};
  const double lo = *std::min_element(map.q.begin(), map.q.end());
  map.p.resize(map.q.size());
  for (std::size_t g = 0; g < map.q.size(); ++g) {
    map.q[g] -= lo;
    map.p[g] = chi2_2dof_survival(map.q[g]);
  }
  return map;
}

void NeymanConfig::validate() const {
  if (n_toys < 100) throw InvalidConfig("n_toys must be at least 100");
  require_finite(theta_ref, "neyman theta_ref");
}

double neyman_p_value(const std::vector<double>& toy_statistics, double observed_statistic) {
  const auto above = std::count_if(toy_statistics.begin(), toy_statistics.end(),
                                   [&](double q) { return q >= observed_statistic; });
  return (1.0 + static_cast<double>(above)) / (static_cast<double>(toy_statistics.size()) + 1.0);
}

std::vector<double> toy_statistics(const RatioEstimator& estimator, const Simulator& sim,
                                   const ParameterPoint& theta, std::size_t n_obs,
                                   const Grid& grid, const NeymanConfig& config) {
  config.validate();
  if (n_obs < 1) throw InvalidConfig("n_obs must be at least 1");
  Engine rng(config.seed, Stream::toys, point_key(theta));
  const Mat xs = sim.sample_observations(theta, static_cast<std::size_t>(config.n_toys) * n_obs, rng);
  if (config.statistic == NeymanStatistic::reference)
    return block_statistics(estimator.log_ratio_between(xs, theta, config.theta_ref), n_obs);
  return profiled(estimator, xs, n_obs, theta, grid, config.threads);
}

double observed_statistic(const RatioEstimator& estimator, const Mat& xs, const Grid& grid,
                          std::size_t index, const NeymanConfig& config) {
  require_statistic_inputs(xs);
  const ParameterPoint theta = grid.at(index);
  if (config.statistic == NeymanStatistic::reference)
    return test_statistic(estimator, xs, theta, config.theta_ref);
  return profiled(estimator, xs, static_cast<std::size_t>(xs.cols()), theta, grid, 1).front();
}

PValueMap neyman_map(const RatioEstimator& estimator, const Simulator& sim,
                     const ObservedSet& observed, const Grid& grid, const NeymanConfig& config) {
  config.validate();
  PValueMap map{grid, std::vector<double>(grid.size()), std::vector<double>(grid.size()), "neyman",
                estimator.name()};
  NeymanConfig inner = config;
  inner.threads = 1;
  parallel_for(grid.size(), config.threads, [&](std::size_t g) {
    const std::vector<double> toys =
        toy_statistics(estimator, sim, grid.at(g), observed.size(), grid, inner);
    map.q[g] = observed_statistic(estimator, observed.x, grid, g, inner);
    map.p[g] = neyman_p_value(toys, map.q[g]);
  });
  return map;
}

std::string pvalue_map_to_csv(const PValueMap& map) {
  std::string out = "theta_a,theta_b,q,p,method,estimator\n";
  for (std::size_t g = 0; g < map.grid.size(); ++g) {
    const ParameterPoint t = map.grid.at(g);
    out += fmt::format("{},{},{},{},{},{}\n", format_double(t.a), format_double(t.b),
                       format_double(map.q[g]), format_double(map.p[g]), map.method, map.estimator);
  }
  return out;
}

std::vector<PValueMap> pvalue_maps_from_csv(const std::string& text) {
  struct Row {
    double a, b, q, p;
  };
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "theta_a,theta_b,q,p,method,estimator")
    throw ParseError("p-value CSV: missing or unexpected header");
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<Row>> groups;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 6) throw ParseError(fmt::format("p-value CSV line {}: expected 6 fields", line_no));
    Row r{};
    try {
      r = {std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3])};
    } catch (const std::logic_error&) {
      throw ParseError(fmt::format("p-value CSV line {}: malformed number", line_no));
    }
    if (!(r.p >= 0.0 && r.p <= 1.0))
      throw ParseError(fmt::format("p-value CSV line {}: p outside [0, 1]", line_no));
    const auto key = std::make_pair(f[4], f[5]);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(r);
  }
  if (order.empty()) throw ParseError("p-value CSV has no rows");

  std::vector<PValueMap> maps;
  for (const auto& key : order) {
    const auto& rows = groups[key];
    std::set<double> as, bs;
    for (const auto& r : rows) {
      as.insert(r.a);
      bs.insert(r.b);
    }
    if (*as.begin() != *bs.begin() || *as.rbegin() != *bs.rbegin())
      throw ParseError("p-value CSV: both axes must span the same range");
    Grid grid{ParameterBox{*as.begin(), *as.rbegin()}, static_cast<int>(as.size()),
              static_cast<int>(bs.size())};
    if (rows.size() != grid.size())
      throw ParseError(fmt::format("p-value CSV: map {}/{} is not a full grid", key.first, key.second));
    PValueMap map{grid, std::vector<double>(grid.size()), std::vector<double>(grid.size()), key.first,
                  key.second};
    std::vector<char> seen(grid.size(), 0);
    for (const auto& r : rows) {
      const std::size_t g = grid.nearest({r.a, r.b});
      if (seen[g]) throw ParseError("p-value CSV: duplicate grid point");
      seen[g] = 1;
      map.q[g] = r.q;
      map.p[g] = r.p;
    }
    maps.push_back(std::move(map));
  }
  return maps;
}

// --- contours ----------------------------------------------------------------------

namespace {

struct Segment {
  std::size_t e0, e1;  // canonical edge ids
};

}  // namespace

std::vector<Contour> extract_contours(const PValueMap& map, const std::vector<double>& levels) {
  const Grid& grid = map.grid;
  const int na = grid.na, nb = grid.nb;
  if (map.p.size() != grid.size()) throw InvalidConfig("p-value map does not match its grid");
  auto value = [&](int ia, int ib) { return map.p[static_cast<std::size_t>(ib) * na + ia]; };
  // Horizontal edge (ia,ib)-(ia+1,ib) is 2*node, vertical (ia,ib)-(ia,ib+1) is 2*node+1.
  auto h_edge = [&](int ia, int ib) { return 2 * (static_cast<std::size_t>(ib) * na + ia); };
  auto v_edge = [&](int ia, int ib) { return 2 * (static_cast<std::size_t>(ib) * na + ia) + 1; };

  std::vector<Contour> out;
  for (double level : levels) {
    if (!(level > 0.0 && level < 1.0)) throw InvalidConfig("contour levels must lie in (0, 1)");
    Contour contour{level, {}};

    auto edge_point = [&](std::size_t id) {
      const std::size_t node = id / 2;
      const int ia = static_cast<int>(node % na), ib = static_cast<int>(node / na);
      const int ja = id % 2 ? ia : ia + 1;
      const int jb = id % 2 ? ib + 1 : ib;
      const double va = value(ia, ib), vb = value(ja, jb);
      const double t = (level - va) / (vb - va);
      const ParameterPoint pa = grid.at(ia, ib), pb = grid.at(ja, jb);
      return ParameterPoint{pa.a + t * (pb.a - pa.a), pa.b + t * (pb.b - pa.b)};
    };

    std::vector<Segment> segments;
    for (int ib = 0; ib + 1 < nb; ++ib) {
      for (int ia = 0; ia + 1 < na; ++ia) {
        const std::array<double, 4> v = {value(ia, ib), value(ia + 1, ib), value(ia + 1, ib + 1),
                                         value(ia, ib + 1)};
        std::array<bool, 4> in{};
        for (int c = 0; c < 4; ++c) in[c] = v[c] > level;
        // edge k joins corners k and k+1: bottom, right, top, left
        const std::array<std::size_t, 4> edge = {h_edge(ia, ib), v_edge(ia + 1, ib),
                                                 h_edge(ia, ib + 1), v_edge(ia, ib)};
        std::vector<int> crossing;
        for (int k = 0; k < 4; ++k)
          if (in[k] != in[(k + 1) % 4]) crossing.push_back(k);
        if (crossing.size() == 2) {
          segments.push_back({edge[crossing[0]], edge[crossing[1]]});
        } else if (crossing.size() == 4) {
          const bool centre = (v[0] + v[1] + v[2] + v[3]) / 4.0 > level;
          if (centre == in[0]) {  // corners 1 and 3 are cut off
            segments.push_back({edge[0], edge[1]});
            segments.push_back({edge[2], edge[3]});
          } else {  // corners 0 and 2 are cut off
            segments.push_back({edge[3], edge[0]});
            segments.push_back({edge[1], edge[2]});
          }
        }
      }
    }

    std::map<std::size_t, std::vector<std::size_t>> at_edge;
    for (std::size_t s = 0; s < segments.size(); ++s) {
      at_edge[segments[s].e0].push_back(s);
      at_edge[segments[s].e1].push_back(s);
    }
    std::vector<char> used(segments.size(), 0);
    auto trace = [&](std::size_t start_edge, std::size_t first) {
      Polyline line;
      std::size_t edge = start_edge;
      line.points.push_back(edge_point(edge));
      std::size_t s = first;
      while (!used[s]) {
        used[s] = 1;
        edge = segments[s].e0 == edge ? segments[s].e1 : segments[s].e0;
        line.points.push_back(edge_point(edge));
        const auto& next = at_edge[edge];
        const auto it = std::find_if(next.begin(), next.end(), [&](std::size_t n) { return !used[n]; });
        if (it == next.end()) break;
        s = *it;
      }
      line.closed = line.points.size() > 2 && edge == start_edge;
      if (line.closed) line.points.pop_back();
      contour.lines.push_back(std::move(line));
    };
    // open lines start at boundary edges (one segment), then the remaining loops
    for (const auto& [edge, segs] : at_edge)
      if (segs.size() == 1 && !used[segs.front()]) trace(edge, segs.front());
    for (std::size_t s = 0; s < segments.size(); ++s)
      if (!used[s]) trace(segments[s].e0, s);
    out.push_back(std::move(contour));
  }
  return out;
}

double allowed_area(const PValueMap& map, double level, int subsamples) {
  const Grid& grid = map.grid;
  if (grid.na < 2 || grid.nb < 2) throw InvalidConfig("allowed_area needs at least a 2 x 2 grid");
  if (subsamples < 1) throw InvalidConfig("subsamples must be positive");
  const int na = grid.na;
  auto value = [&](int ia, int ib) { return map.p[static_cast<std::size_t>(ib) * na + ia]; };
  std::size_t inside = 0;
  for (int ib = 0; ib + 1 < grid.nb; ++ib) {
    for (int ia = 0; ia + 1 < na; ++ia) {
      const double v00 = value(ia, ib), v10 = value(ia + 1, ib);
      const double v01 = value(ia, ib + 1), v11 = value(ia + 1, ib + 1);
      for (int j = 0; j < subsamples; ++j) {
        const double u = (j + 0.5) / subsamples;
        for (int i = 0; i < subsamples; ++i) {
          const double t = (i + 0.5) / subsamples;
          const double v = (1 - t) * (1 - u) * v00 + t * (1 - u) * v10 + (1 - t) * u * v01 + t * u * v11;
          if (v > level) ++inside;
        }
      }
    }
  }
  const double cell = grid.step_a() * grid.step_b() / (static_cast<double>(subsamples) * subsamples);
  return static_cast<double>(inside) * cell;
}

std::string contours_to_csv(const PValueMap& map, const std::vector<Contour>& contours) {
  std::string out = "estimator,method,level,line,point,theta_a,theta_b\n";
  for (const auto& c : contours)
    for (std::size_t l = 0; l < c.lines.size(); ++l)
      for (std::size_t i = 0; i < c.lines[l].points.size(); ++i)
        out += fmt::format("{},{},{},{},{},{},{}\n", map.estimator, map.method, format_double(c.level),
                           l, i, format_double(c.lines[l].points[i].a),
                           format_double(c.lines[l].points[i].b));
  return out;
}

}  // namespace lfi
