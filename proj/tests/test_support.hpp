#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hyperadv/autodiff.hpp"
#include "hyperadv/geometry.hpp"

namespace testsupport {

inline std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

/// Random point of the Lorentz model reached from the origin by a tangent
/// vector with norm in [0, max_radius].
inline hyperadv::geometry::LorentzPoint random_lorentz(std::mt19937_64& rng, std::size_t dim, double c,
                                                       double max_radius = 3.0) {
  auto v = normal_vector(rng, dim);
  const double n = hyperadv::geometry::norm2(v);
  const double r = std::uniform_real_distribution<double>(0.0, max_radius)(rng);
  for (auto& x : v) x *= r / n / std::sqrt(c);
  return hyperadv::geometry::exp_origin(v, hyperadv::geometry::Curvature(c));
}

/// Random point strictly inside the ball of radius 1/sqrt(c), at most
/// `fill` of the way to the boundary.
inline hyperadv::geometry::PoincarePoint random_poincare(std::mt19937_64& rng, std::size_t dim, double c,
                                                         double fill = 0.9) {
  auto v = normal_vector(rng, dim);
  const double n = hyperadv::geometry::norm2(v);
  const double r = std::uniform_real_distribution<double>(0.0, fill)(rng) / std::sqrt(c);
  for (auto& x : v) x *= r / n;
  return hyperadv::geometry::PoincarePoint(v, hyperadv::geometry::Curvature(c));
}

/// Builds a scalar from variables created on a fresh tape.
using ScalarFn = std::function<hyperadv::ad::Tensor(hyperadv::ad::Tape&, const std::vector<hyperadv::ad::Tensor>&)>;

struct VarSpec {
  hyperadv::ad::Shape shape;
  std::vector<double> values;
};

inline double evaluate(const ScalarFn& f, const std::vector<VarSpec>& vars) {
  hyperadv::ad::Tape tape;
  std::vector<hyperadv::ad::Tensor> ts;
  for (const auto& v : vars) ts.push_back(tape.constant(v.shape, v.values));
  return f(tape, ts).item();
}

/// Max over variables of |analytic - numeric|_inf / max(|analytic|_inf, |numeric|_inf)
/// using central differences with step delta.
inline double gradcheck(const ScalarFn& f, const std::vector<VarSpec>& vars, double delta = 1e-5) {
  hyperadv::ad::Tape tape;
  std::vector<hyperadv::ad::Tensor> ts;
  for (const auto& v : vars) ts.push_back(tape.variable(v.shape, v.values));
  const auto grads = tape.backward(f(tape, ts));
  double worst = 0.0;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    const auto analytic = grads.at(ts[k]).data();
    double diff = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < vars[k].values.size(); ++i) {
      auto plus = vars, minus = vars;
      plus[k].values[i] += delta;
      minus[k].values[i] -= delta;
      const double numeric = (evaluate(f, plus) - evaluate(f, minus)) / (2.0 * delta);
      diff = std::max(diff, std::abs(analytic[i] - numeric));
      scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric)});
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

}  // namespace testsupport
