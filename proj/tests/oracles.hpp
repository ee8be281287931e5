#pragma once

// Independent reference computations: 50-digit closed forms and a numeric
// arc-length integral along the 2-D disk geodesic.

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

namespace oracle {

using Real = boost::multiprecision::cpp_dec_float_50;
using RVec = std::vector<Real>;

inline RVec lift(const std::vector<double>& v) { return RVec(v.begin(), v.end()); }

inline Real dot(const RVec& a, const RVec& b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Real acosh(const Real& x) { return log(x + sqrt(x * x - 1)); }
inline Real atanh(const Real& x) { return log((1 + x) / (1 - x)) / 2; }

inline RVec mobius_add(const RVec& x, const RVec& y, const Real& c) {
  const Real xy = dot(x, y), xx = dot(x, x), yy = dot(y, y);
  const Real den = 1 + 2 * c * xy + c * c * xx * yy;
  RVec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = ((1 + 2 * c * xy + c * yy) * x[i] + (1 - c * xx) * y[i]) / den;
  return out;
}

/// arcosh form, divided by sqrt(c) so that it is a distance for any c.
inline Real poincare_distance(const RVec& u, const RVec& v, const Real& c) {
  RVec d(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) d[i] = u[i] - v[i];
  const Real arg = 1 + 2 * c * dot(d, d) / ((1 - c * dot(u, u)) * (1 - c * dot(v, v)));
  return acosh(arg) / sqrt(c);
}

inline Real poincare_distance_mobius(const RVec& u, const RVec& v, const Real& c) {
  RVec neg(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) neg[i] = -u[i];
  const RVec m = mobius_add(neg, v, c);
  return 2 / sqrt(c) * atanh(sqrt(c) * sqrt(dot(m, m)));
}

inline Real lorentz_distance(const RVec& u, const RVec& v, const Real& c) {
  Real inner = -u[0] * v[0];
  for (std::size_t i = 1; i < u.size(); ++i) inner += u[i] * v[i];
  Real arg = -c * inner;
  if (arg < 1) arg = 1;
  return acosh(arg) / sqrt(c);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                               double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-11) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return adaptive_simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50);
}

/// Length, under the metric 2|dx|/(1-|x|^2) of the unit disk, of the
/// geodesic from u to v: the circle through u, v and the inversion of u in
/// the unit circle, or the straight chord when u, v and 0 are collinear.
inline double disk_geodesic_length(std::array<double, 2> u, std::array<double, 2> v) {
  const auto metric = [](double x, double y, double dx, double dy) {
    return 2.0 * std::hypot(dx, dy) / (1.0 - x * x - y * y);
  };
  const double cross = u[0] * v[1] - u[1] * v[0];
  const double scale = std::max({std::hypot(u[0], u[1]), std::hypot(v[0], v[1]), 1e-300});
  if (std::abs(cross) < 1e-12 * scale * scale || std::hypot(u[0], u[1]) < 1e-12 || std::hypot(v[0], v[1]) < 1e-12) {
    const double dx = v[0] - u[0], dy = v[1] - u[1];
    return integrate([&](double t) { return metric(u[0] + t * dx, u[1] + t * dy, dx, dy); }, 0.0, 1.0);
  }
  const double uu = u[0] * u[0] + u[1] * u[1];
  const std::array<double, 2> w{u[0] / uu, u[1] / uu};
  // Circumcenter of u, v, w.
  const double ax = u[0], ay = u[1], bx = v[0], by = v[1], cx = w[0], cy = w[1];
  const double d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
  const double a2 = ax * ax + ay * ay, b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
  const double ox = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d;
  const double oy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d;
  const double r = std::hypot(ax - ox, ay - oy);
  const double t0 = std::atan2(ay - oy, ax - ox);
  double t1 = std::atan2(by - oy, bx - ox);
  double span = t1 - t0;
  while (span > M_PI) span -= 2.0 * M_PI;
  while (span <= -M_PI) span += 2.0 * M_PI;
  t1 = t0 + span;
  return std::abs(integrate(
      [&](double t) {
        return metric(ox + r * std::cos(t), oy + r * std::sin(t), -r * std::sin(t), r * std::cos(t));
      },
      t0, t1));
}

}  // namespace oracle
