#include "lfi/plot.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace lfi {

namespace {

constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 80, kRight = 170, kTop = 30, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
constexpr const char* kDashes[] = {"", "6,3", "2,2", "8,3,2,3"};

std::string num(double v) { return fmt::format("{:.2f}", v); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;  // data range

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

std::string header() {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      kWidth, kHeight);
}

std::string axes(const std::string& xlabel, const std::string& ylabel) {
  std::string s = fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
      num(kLeft), num(kTop), num(kWidth - kLeft - kRight), num(kHeight - kTop - kBottom));
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                   num((kLeft + kWidth - kRight) / 2), num(kHeight - 15), escape(xlabel));
  s += fmt::format(
      "<text x=\"20\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {0})\">{1}</text>\n",
      num((kTop + kHeight - kBottom) / 2), escape(ylabel));
  return s;
}

std::string legend_entry(int i, const std::string& color, const std::string& label,
                         const std::string& dash = "") {
  const double y = kTop + 15 + 20 * i;
  const double x = kWidth - kRight + 15;
  std::string s = fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"",
                              num(x), num(y), num(x + 25), num(y), color);
  if (!dash.empty()) s += fmt::format(" stroke-dasharray=\"{}\"", dash);
  s += "/>\n";
  s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", num(x + 32), num(y + 4), escape(label));
  return s;
}

}  // namespace

std::string sweep_svg(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw InvalidConfig("sweep plot needs at least one row");
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& r : rows) {
    if (!(r.expected_mse > 0.0) || r.n_train == 0)
      throw InvalidConfig("sweep plot needs positive sizes and MSE values on a log scale");
    const double lx = std::log10(static_cast<double>(r.n_train)), ly = std::log10(r.expected_mse);
    xmin = std::min(xmin, lx), xmax = std::max(xmax, lx);
    ymin = std::min(ymin, ly), ymax = std::max(ymax, ly);
  }
  Frame f{std::floor(xmin) - (xmin == xmax ? 0.5 : 0.0), std::ceil(xmax) + (xmin == xmax ? 0.5 : 0.0),
          std::floor(ymin), std::ceil(ymax)};
  if (f.x1 <= f.x0) f.x1 = f.x0 + 1;
  if (f.y1 <= f.y0) f.y1 = f.y0 + 1;

  std::string svg = header();
  for (int e = static_cast<int>(f.x0); e <= static_cast<int>(f.x1); ++e)
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">1e{}</text>\n", num(f.px(e)),
                       num(kHeight - kBottom + 18), e);
  for (int e = static_cast<int>(f.y0); e <= static_cast<int>(f.y1); ++e)
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">1e{}</text>\n", num(kLeft - 6),
                       num(f.py(e) + 4), e);
  svg += axes("training samples", "expected MSE of log r");

  // losses in order of first appearance
  std::vector<LossKind> losses;
  for (const auto& r : rows)
    if (std::find(losses.begin(), losses.end(), r.loss) == losses.end()) losses.push_back(r.loss);
  const auto medians = sweep_medians(rows);
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const std::string color = kPalette[i % std::size(kPalette)];
    const std::string name(loss_name(losses[i]));
    std::string points;
    for (const auto& m : medians) {
      if (m.loss != losses[i]) continue;
      if (!points.empty()) points += ' ';
      points += num(f.px(std::log10(static_cast<double>(m.n_train)))) + "," +
                num(f.py(std::log10(m.median_mse)));
    }
    svg += fmt::format(
        "<polyline class=\"loss\" data-loss=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\" "
        "points=\"{}\"/>\n",
        name, color, points);
    for (const auto& r : rows)
      if (r.loss == losses[i])
        svg += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{}\"/>\n",
                           num(f.px(std::log10(static_cast<double>(r.n_train)))),
                           num(f.py(std::log10(r.expected_mse))), color);
    svg += legend_entry(static_cast<int>(i), color, name);
  }
  svg += "</svg>\n";
  return svg;
}

std::string contours_svg(const std::vector<PValueMap>& maps, const std::vector<double>& levels) {
  if (maps.empty()) throw InvalidConfig("contour plot needs at least one map");
  const ParameterBox box = maps.front().grid.box;
  Frame f{box.lo, box.hi, box.lo, box.hi};
  if (f.x1 <= f.x0) throw InvalidConfig("contour plot needs a non-degenerate box");

  std::string svg = header();
  for (double t : {box.lo, 0.5 * (box.lo + box.hi), box.hi}) {
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:g}</text>\n", num(f.px(t)),
                       num(kHeight - kBottom + 18), t);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:g}</text>\n", num(kLeft - 6),
                       num(f.py(t) + 4), t);
  }
  svg += axes("theta_a", "theta_b");

  std::multiset<std::string> tags;
  for (const auto& m : maps) tags.insert(m.estimator);
  int entry = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const PValueMap& map = maps[i];
    const std::string color = kPalette[i % std::size(kPalette)];
    const std::string label =
        tags.count(map.estimator) > 1 ? map.estimator + " (" + map.method + ")" : map.estimator;
    const auto contours = extract_contours(map, levels);
    for (std::size_t l = 0; l < contours.size(); ++l) {
      std::string d;
      for (const auto& line : contours[l].lines) {
        for (std::size_t k = 0; k < line.points.size(); ++k)
          d += fmt::format("{}{},{} ", k == 0 ? "M" : "L", num(f.px(line.points[k].a)),
                           num(f.py(line.points[k].b)));
        if (line.closed) d += "Z ";
      }
      if (!d.empty()) d.pop_back();
      svg += fmt::format(
          "<path class=\"contour\" data-estimator=\"{}\" data-level=\"{:g}\" fill=\"none\" "
          "stroke=\"{}\" stroke-width=\"2\"{} d=\"{}\"/>\n",
          escape(map.estimator), contours[l].level, color,
          std::string(kDashes[l % std::size(kDashes)]).empty()
              ? std::string()
              : fmt::format(" stroke-dasharray=\"{}\"", kDashes[l % std::size(kDashes)]),
          d);
    }
    svg += legend_entry(entry++, color, label);
  }
  for (std::size_t l = 0; l < levels.size(); ++l)
    svg += legend_entry(entry++, "black", fmt::format("p = {:g}", levels[l]),
                        kDashes[l % std::size(kDashes)]);
  svg += "</svg>\n";
  return svg;
}

}  // namespace lfi
