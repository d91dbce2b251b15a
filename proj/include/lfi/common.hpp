#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace lfi {

using Vec = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Error types. Everything derives from lfi::Error so callers (the CLI in
// particular) can map failures onto exit codes with a single catch.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-box parameter point.
struct InvalidParameter : Error {
  using Error::Error;
};

/// Inconsistent configuration (dimension mismatch, bad fraction, ...).
struct InvalidConfig : Error {
  using Error::Error;
};

/// The simulator does not offer the requested capability, e.g. the exact
/// marginal likelihood of a smeared simulator.
struct CapabilityUnavailable : Error {
  using Error::Error;
};

/// A score-bearing loss was asked to train on samples without a joint score
/// (or a ratio loss on samples without a joint ratio).
struct MissingAugmentation : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

/// Training or gradient evaluation produced NaN/inf.
struct NonFiniteError : Error {
  using Error::Error;
};

/// A point theta = (theta_a, theta_b) in the two-dimensional model space.
struct ParameterPoint {
  double a = 0.0;
  double b = 0.0;

  Vec2 vec() const { return {a, b}; }
  bool finite() const { return std::isfinite(a) && std::isfinite(b); }
  friend bool operator==(const ParameterPoint&, const ParameterPoint&) = default;
};

/// Axis-aligned square box [lo, hi]^2 in parameter space.
struct ParameterBox {
  double lo = -1.0;
  double hi = 1.0;

  bool contains(const ParameterPoint& p) const {
    return p.finite() && p.a >= lo && p.a <= hi && p.b >= lo && p.b <= hi;
  }
  double area() const { return (hi - lo) * (hi - lo); }

  friend bool operator==(const ParameterBox&, const ParameterBox&) = default;
};

/// Regular grid over a ParameterBox including both edges. Points are stored
/// row-major: index = ib * na + ia.
struct Grid {
  ParameterBox box{};
  int na = 21;
  int nb = 21;

  std::size_t size() const { return static_cast<std::size_t>(na) * nb; }
  double step_a() const { return na > 1 ? (box.hi - box.lo) / (na - 1) : 0.0; }
  double step_b() const { return nb > 1 ? (box.hi - box.lo) / (nb - 1) : 0.0; }
  ParameterPoint at(int ia, int ib) const {
    const double w = box.hi - box.lo;
    return {na > 1 ? box.lo + w * ia / (na - 1) : box.lo,
            nb > 1 ? box.lo + w * ib / (nb - 1) : box.lo};
  }
  ParameterPoint at(std::size_t index) const {
    return at(static_cast<int>(index % na), static_cast<int>(index / na));
  }
  /// Index of the grid node closest to p (clamped into the grid).
  std::size_t nearest(const ParameterPoint& p) const {
    auto index_of = [&](double v, int n, double step) {
      if (n <= 1) return 0;
      const long i = std::lround((v - box.lo) / step);
      return static_cast<int>(i < 0 ? 0 : (i >= n ? n - 1 : i));
    };
    return static_cast<std::size_t>(index_of(p.b, nb, step_b())) * na +
           index_of(p.a, na, step_a());
  }
};

inline void require_finite(const ParameterPoint& p, const char* what) {
  if (!p.finite())
    throw InvalidParameter(std::string(what) + ": parameter point is not finite");
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// r = (1 - s) / s, the ratio p(x|theta0) / p(x|theta1) implied by a
/// classifier output s = p(y=1|x).
inline double ratio_from_classifier(double s) {
  if (!(s > 0.0 && s < 1.0)) throw InvalidParameter("classifier output must lie in (0, 1)");
  return (1.0 - s) / s;
}

/// s = 1 / (r + 1); inverse of ratio_from_classifier.
inline double classifier_from_ratio(double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw InvalidParameter("ratio must be positive and finite");
  return 1.0 / (r + 1.0);
}

}  // namespace lfi
