#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace vlyap {

/// Closed interval [lo, hi]. Invariants: lo <= hi and neither bound is NaN.
/// Every arithmetic operation returns an outward-rounded enclosure of the
/// exact real result set (post-hoc widening, no rounding-mode switching).
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {
    assert(!std::isnan(lo) && !std::isnan(hi) && lo <= hi);
  }

  static Interval point(double v) { return {v, v}; }

  double width() const { return hi - lo; }
  double mid() const {
    double m = 0.5 * (lo + hi);
    if (!std::isfinite(m)) m = 0.5 * lo + 0.5 * hi;
    return std::clamp(m, lo, hi);
  }
  /// Magnitude: max |x| over the interval.
  double mag() const { return std::max(std::abs(lo), std::abs(hi)); }
  /// Mignitude: min |x| over the interval (0 if it straddles 0).
  double mig() const {
    if (lo <= 0.0 && 0.0 <= hi) return 0.0;
    return std::min(std::abs(lo), std::abs(hi));
  }
  bool contains(double v) const { return lo <= v && v <= hi; }
  bool contains_zero() const { return contains(0.0); }
};

namespace detail {

inline double next_down(double x) {
  if (x == -std::numeric_limits<double>::infinity()) return x;
  return std::nextafter(x, -std::numeric_limits<double>::infinity());
}

inline double next_up(double x) {
  if (x == std::numeric_limits<double>::infinity()) return x;
  return std::nextafter(x, std::numeric_limits<double>::infinity());
}

/// Widen by `ulps` steps on each side. One step is enough for a single
/// correctly-rounded operation; libm calls get a few extra.
inline Interval widen(Interval v, int ulps = 1) {
  for (int i = 0; i < ulps; ++i) {
    v.lo = next_down(v.lo);
    v.hi = next_up(v.hi);
  }
  return v;
}

constexpr int kLibmUlps = 4;

/// x^n for n >= 0 by repeated squaring; the evaluator and the interval
/// extension share this routine so enclosures cover its rounding.
inline double ipow(double x, int n) {
  double r = 1.0, base = x;
  for (int k = n; k > 0; k >>= 1) {
    if (k & 1) r *= base;
    base *= base;
  }
  return r;
}

}  // namespace detail

inline Interval operator+(Interval a, Interval b) {
  return detail::widen({a.lo + b.lo, a.hi + b.hi});
}

inline Interval operator-(Interval a, Interval b) {
  return detail::widen({a.lo - b.hi, a.hi - b.lo});
}

inline Interval operator-(Interval a) { return {-a.hi, -a.lo}; }

inline Interval operator*(Interval a, Interval b) {
  const double p1 = a.lo * b.lo, p2 = a.lo * b.hi, p3 = a.hi * b.lo, p4 = a.hi * b.hi;
  return detail::widen({std::min({p1, p2, p3, p4}), std::max({p1, p2, p3, p4})});
}

inline Interval operator*(double s, Interval a) { return Interval::point(s) * a; }

inline Interval operator+(Interval a, double s) { return a + Interval::point(s); }

/// Division; nullopt when the denominator may contain zero.
inline std::optional<Interval> interval_div(Interval a, Interval b) {
  if (b.lo <= 0.0 && 0.0 <= b.hi) return std::nullopt;
  const double p1 = a.lo / b.lo, p2 = a.lo / b.hi, p3 = a.hi / b.lo, p4 = a.hi / b.hi;
  return detail::widen({std::min({p1, p2, p3, p4}), std::max({p1, p2, p3, p4})});
}

/// x^n for integer n >= 0 with even-power tightening: x^2 over [-1,2] is
/// [0,4], not [-2,4].
inline Interval interval_pow(Interval a, int n) {
  assert(n >= 0);
  if (n == 0) return Interval::point(1.0);
  if (n == 1) return a;
  const int ulps = n + 2;  // covers repeated-squaring rounding
  if (n % 2 == 0) {
    const double m = a.mig(), M = a.mag();
    return detail::widen({detail::ipow(m, n), detail::ipow(M, n)}, ulps);
  }
  return detail::widen({detail::ipow(a.lo, n), detail::ipow(a.hi, n)}, ulps);
}

inline std::optional<Interval> interval_sqrt(Interval a) {
  if (a.lo < 0.0) return std::nullopt;  // possibly (or certainly) undefined
  return detail::widen({std::sqrt(a.lo), std::sqrt(a.hi)}, detail::kLibmUlps);
}

inline Interval interval_exp(Interval a) {
  return detail::widen({std::exp(a.lo), std::exp(a.hi)}, detail::kLibmUlps);
}

inline Interval interval_tanh(Interval a) {
  Interval r = detail::widen({std::tanh(a.lo), std::tanh(a.hi)}, detail::kLibmUlps);
  r.lo = std::max(r.lo, -1.0);
  r.hi = std::min(r.hi, 1.0);
  if (r.lo > r.hi) std::swap(r.lo, r.hi);
  return r;
}

/// sech^2(x) = 1 - tanh^2(x): even, unimodal with peak 1 at x = 0.
/// Used for enclosing tanh' without the dependency blow-up of 1 - t*t.
inline Interval interval_sech2(Interval a) {
  auto sech2 = [](double x) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  };
  const double m = a.mig(), M = a.mag();
  Interval r = detail::widen({sech2(M), sech2(m)}, detail::kLibmUlps);
  r.lo = std::max(r.lo, 0.0);
  r.hi = std::min(r.hi, 1.0);
  if (r.lo > r.hi) std::swap(r.lo, r.hi);
  return r;
}

namespace detail {

// Range of f over [a, b] for f in {sin, cos}, by locating interior critical
// points: phase + k*pi, maxima at even k (sin: phase pi/2, cos: phase 0).
template <typename F>
inline Interval trig_range(double a, double b, F f, double phase) {
  constexpr double kPi = 3.14159265358979323846;
  if (b - a >= 2.0 * kPi) return {-1.0, 1.0};
  Interval r{std::min(f(a), f(b)), std::max(f(a), f(b))};
  // Conservative sweep: because of rounding in the critical-point grid, scan
  // one k on each side of the exact window.
  const double k0 = std::floor((a - phase) / kPi) - 1.0;
  const double k1 = std::ceil((b - phase) / kPi) + 1.0;
  for (double k = k0; k <= k1; k += 1.0) {
    const double crit = phase + k * kPi;
    if (crit < a || crit > b) continue;
    if (std::fabs(std::fmod(k, 2.0)) < 0.5)
      r.hi = 1.0;
    else
      r.lo = -1.0;
  }
  return r;
}

}  // namespace detail

inline Interval interval_sin(Interval a) {
  constexpr double kHalfPi = 1.57079632679489661923;
  Interval r = detail::widen(
      detail::trig_range(a.lo, a.hi, [](double x) { return std::sin(x); }, kHalfPi),
      detail::kLibmUlps);
  r.lo = std::max(r.lo, -1.0);
  r.hi = std::min(r.hi, 1.0);
  if (r.lo > r.hi) std::swap(r.lo, r.hi);
  return r;
}

inline Interval interval_cos(Interval a) {
  Interval r = detail::widen(
      detail::trig_range(a.lo, a.hi, [](double x) { return std::cos(x); }, 0.0),
      detail::kLibmUlps);
  r.lo = std::max(r.lo, -1.0);
  r.hi = std::min(r.hi, 1.0);
  if (r.lo > r.hi) std::swap(r.lo, r.hi);
  return r;
}

/// Hull of two intervals.
inline Interval hull(Interval a, Interval b) {
  return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

/// Axis-aligned box: one interval per dimension. Always nonempty.
class Box {
 public:
  Box() = default;
  explicit Box(std::vector<Interval> dims) : dims_(std::move(dims)) {}
  Box(std::initializer_list<Interval> dims) : dims_(dims) {}
  Box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    assert(lo.size() == hi.size());
    dims_.reserve(static_cast<size_t>(lo.size()));
    for (Eigen::Index i = 0; i < lo.size(); ++i) dims_.push_back({lo[i], hi[i]});
  }
  /// Centered cube [-r, r]^dim.
  static Box centered(int dim, double r) {
    return Box(std::vector<Interval>(static_cast<size_t>(dim), Interval{-r, r}));
  }

  int dim() const { return static_cast<int>(dims_.size()); }
  const Interval& operator[](int i) const { return dims_[static_cast<size_t>(i)]; }
  Interval& operator[](int i) { return dims_[static_cast<size_t>(i)]; }
  const std::vector<Interval>& dims() const { return dims_; }

  Eigen::VectorXd midpoint() const {
    Eigen::VectorXd m(dim());
    for (int i = 0; i < dim(); ++i) m[i] = dims_[static_cast<size_t>(i)].mid();
    return m;
  }

  double max_width() const {
    double w = 0.0;
    for (const auto& d : dims_) w = std::max(w, d.width());
    return w;
  }

  int widest_dim() const {
    int best = 0;
    double w = -1.0;
    for (int i = 0; i < dim(); ++i)
      if (dims_[static_cast<size_t>(i)].width() > w) {
        w = dims_[static_cast<size_t>(i)].width();
        best = i;
      }
    return best;
  }

  std::pair<Box, Box> bisect(int d) const {
    Box a = *this, b = *this;
    const double m = dims_[static_cast<size_t>(d)].mid();
    a[d].hi = m;
    b[d].lo = m;
    return {a, b};
  }

  bool contains(const Eigen::VectorXd& x) const {
    if (x.size() != dim()) return false;
    for (int i = 0; i < dim(); ++i)
      if (!dims_[static_cast<size_t>(i)].contains(x[i])) return false;
    return true;
  }

  /// Concatenation (product box).
  static Box product(const Box& a, const Box& b) {
    std::vector<Interval> d = a.dims_;
    d.insert(d.end(), b.dims_.begin(), b.dims_.end());
    return Box(std::move(d));
  }

 private:
  std::vector<Interval> dims_;
};

}  // namespace vlyap
