#pragma once

// Poincare-ball and Lorentz (hyperboloid) model primitives.
//
// All routines work in double precision on plain coordinate vectors. Lorentz
// vectors are laid out as (x0, x1, ..., xn) with x0 the time-like component.

#include <optional>
#include <span>
#include <vector>

#include "hyperadv/error.hpp"

namespace hyperadv::geometry {

using Vector = std::vector<double>;

/// Curvature magnitude c; the manifold has sectional curvature K = -c.
class Curvature {
 public:
  explicit Curvature(double c);

  double value() const noexcept { return c_; }
  double sqrt() const noexcept { return sqrt_c_; }

  friend bool operator==(const Curvature&, const Curvature&) = default;

 private:
  double c_;
  double sqrt_c_;
};

/// A point strictly inside the ball of radius 1/sqrt(c).
class PoincarePoint {
 public:
  PoincarePoint(Vector coords, Curvature c);

  static PoincarePoint origin(std::size_t dim, Curvature c);

  const Vector& coords() const noexcept { return coords_; }
  std::size_t dim() const noexcept { return coords_.size(); }
  Curvature curvature() const noexcept { return c_; }

 private:
  Vector coords_;
  Curvature c_;
};

/// A point on the upper sheet of the hyperboloid <x,x>_L = -1/c.
class LorentzPoint {
 public:
  /// Validates the manifold constraint to 1e-9 relative and x0 > 0.
  LorentzPoint(double time, Vector space, Curvature c);

  /// Solves the constraint for the time component.
  static LorentzPoint from_space(Vector space, Curvature c);
  /// (1/sqrt(c), 0, ..., 0) with n spatial dimensions.
  static LorentzPoint origin(std::size_t dim, Curvature c);
  /// Accepts full ambient coordinates (x0, ..., xn).
  static LorentzPoint from_ambient(std::span<const double> ambient, Curvature c);

  double time() const noexcept { return ambient_[0]; }
  std::span<const double> space() const noexcept {
    return std::span<const double>(ambient_).subspan(1);
  }
  /// Full coordinates (x0, ..., xn).
  const Vector& ambient() const noexcept { return ambient_; }
  std::size_t dim() const noexcept { return ambient_.size() - 1; }
  Curvature curvature() const noexcept { return c_; }

 private:
  LorentzPoint(Vector ambient, Curvature c, bool validated);

  Vector ambient_;
  Curvature c_;
};

/// A vector in a tangent space. The base is either a Lorentz point (ambient
/// n+1 components, Minkowski-orthogonal to the base) or the Poincare origin
/// (n Euclidean components).
class TangentVector {
 public:
  /// Tangency within 1e-8 is accepted as is; within 1e-6 the vector is
  /// re-projected; beyond that a domain error is raised.
  static TangentVector at(const LorentzPoint& base, Vector components);
  static TangentVector at_origin(Vector components);

  const Vector& components() const noexcept { return components_; }
  const std::optional<LorentzPoint>& base() const noexcept { return base_; }

 private:
  TangentVector(std::optional<LorentzPoint> base, Vector components)
      : base_(std::move(base)), components_(std::move(components)) {}

  std::optional<LorentzPoint> base_;
  Vector components_;
};

// Tolerances shared by the geometry routines.
inline constexpr double kManifoldRelTol = 1e-9;
inline constexpr double kTangentTol = 1e-8;
inline constexpr double kTangentRepairTol = 1e-6;
inline constexpr double kArcoshClampTol = 1e-6;
inline constexpr double kZeroTangentNorm = 1e-12;
inline constexpr double kMobiusDenominatorMin = 1e-15;

// ---------------------------------------------------------------------------
// Euclidean helpers

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// ---------------------------------------------------------------------------
// Poincare ball

/// Mobius addition x (+)_c y.
PoincarePoint mobius_add(const PoincarePoint& x, const PoincarePoint& y);

/// arcosh(1 + 2c|u-v|^2 / ((1-c|u|^2)(1-c|v|^2))).
double poincare_distance(const PoincarePoint& u, const PoincarePoint& v);

/// (2/sqrt(c)) artanh(sqrt(c) |(-u) (+)_c v|); same value as poincare_distance.
double poincare_distance_mobius(const PoincarePoint& u, const PoincarePoint& v);

/// Exponential map at the origin: tanh(sqrt(c)|v|) v / (sqrt(c)|v|).
PoincarePoint exp0_poincare(std::span<const double> v, Curvature c);

/// Logarithmic map at the origin, inverse of exp0_poincare.
Vector log0_poincare(const PoincarePoint& x);

// ---------------------------------------------------------------------------
// Lorentz model

/// -x0 y0 + sum_i xi yi.
double lorentz_inner(std::span<const double> x, std::span<const double> y);

/// sqrt(<v,v>_L) for a tangent (space-like) vector; negative round-off is
/// clamped to zero.
double lorentz_norm(std::span<const double> v);

/// (1/sqrt(c)) arcosh(-c <u,v>_L).
double lorentz_distance(const LorentzPoint& u, const LorentzPoint& v);

/// y + c x <x,y>_L.
TangentVector proj_tangent(const LorentzPoint& x, std::span<const double> y);

LorentzPoint exp_map(const LorentzPoint& x, const TangentVector& v);
TangentVector log_map(const LorentzPoint& x, const LorentzPoint& y);

/// Embeds a spatial d-vector h as the tangent vector (0, h) at the origin and
/// maps it onto the hyperboloid.
LorentzPoint exp_origin(std::span<const double> h, Curvature c);

/// Spatial part of log at the origin; inverse of exp_origin.
Vector log_origin(const LorentzPoint& y);

/// arcosh(arg) with the clamp policy: arguments in [1 - 1e-6, 1) are treated
/// as 1, smaller ones raise a domain error.
double arcosh_clamped(double arg);

}  // namespace hyperadv::geometry
