#include "hyperadv/geometry.hpp"

#include <cmath>
#include <sstream>

namespace hyperadv::geometry {
namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    std::ostringstream msg;
    msg << op << ": dimensions " << a << " and " << b << " differ";
    throw Error(ErrorKind::kDimensionMismatch, msg.str());
  }
}

void require_same_curvature(Curvature a, Curvature b, const char* op) {
  if (!(a == b)) {
    std::ostringstream msg;
    msg << op << ": curvatures " << a.value() << " and " << b.value() << " differ";
    throw Error(ErrorKind::kCurvatureMismatch, msg.str());
  }
}

// arcosh(1 + z) without forming 1 + z.
double acosh1p(double z) { return std::log1p(z + std::sqrt(z * (z + 2.0))); }

// Applies the clamp policy to z = arg - 1.
double clamp_arcosh_offset(double z, const char* op) {
  if (z >= 0.0) return z;
  if (z >= -kArcoshClampTol) return 0.0;
  std::ostringstream msg;
  msg << op << ": arcosh argument " << 1.0 + z << " below 1 (off-manifold input)";
  throw Error(ErrorKind::kDomain, msg.str());
}

// 1 + c/2 <u - v, u - v>_L equals -c <u,v>_L on the hyperboloid; the chord
// form avoids cancellation when u and v are close.
double lorentz_arcosh_offset(std::span<const double> u, std::span<const double> v, double c) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    acc += (i == 0 ? -d * d : d * d);
  }
  return 0.5 * c * acc;
}

}  // namespace

Curvature::Curvature(double c) : c_(c), sqrt_c_(std::sqrt(c)) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    std::ostringstream msg;
    msg << "curvature magnitude must be positive and finite, got " << c;
    throw Error(ErrorKind::kDomain, msg.str());
  }
}

PoincarePoint::PoincarePoint(Vector coords, Curvature c) : coords_(std::move(coords)), c_(c) {
  for (double v : coords_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kDomain, "PoincarePoint: non-finite coordinate");
  }
  const double scaled = c_.sqrt() * norm2(coords_);
  if (!(scaled < 1.0)) {
    std::ostringstream msg;
    msg << "PoincarePoint: sqrt(c)*|x| = " << scaled << " is not inside the unit ball";
    throw Error(ErrorKind::kDomain, msg.str());
  }
}

PoincarePoint PoincarePoint::origin(std::size_t dim, Curvature c) {
  return PoincarePoint(Vector(dim, 0.0), c);
}

LorentzPoint::LorentzPoint(Vector ambient, Curvature c, bool /*validated*/)
    : ambient_(std::move(ambient)), c_(c) {}

LorentzPoint::LorentzPoint(double time, Vector space, Curvature c) : c_(c) {
  ambient_.reserve(space.size() + 1);
  ambient_.push_back(time);
  ambient_.insert(ambient_.end(), space.begin(), space.end());
  if (space.empty()) throw Error(ErrorKind::kDimensionMismatch, "LorentzPoint: empty spatial part");
  for (double v : ambient_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kDomain, "LorentzPoint: non-finite coordinate");
  }
  if (!(time > 0.0)) throw Error(ErrorKind::kDomain, "LorentzPoint: time component must be positive");
  const double inner = lorentz_inner(ambient_, ambient_);
  const double target = -1.0 / c.value();
  const double scale = std::max(1.0 / c.value(), time * time);
  if (std::abs(inner - target) > kManifoldRelTol * scale) {
    std::ostringstream msg;
    msg << "LorentzPoint: <x,x>_L = " << inner << " but expected " << target;
    throw Error(ErrorKind::kDomain, msg.str());
  }
}

LorentzPoint LorentzPoint::from_space(Vector space, Curvature c) {
  if (space.empty()) throw Error(ErrorKind::kDimensionMismatch, "LorentzPoint: empty spatial part");
  Vector ambient;
  ambient.reserve(space.size() + 1);
  const double sq = dot(space, space);
  ambient.push_back(std::sqrt(1.0 / c.value() + sq));
  ambient.insert(ambient.end(), space.begin(), space.end());
  for (double v : ambient) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kDomain, "LorentzPoint: non-finite coordinate");
  }
  return LorentzPoint(std::move(ambient), c, true);
}

LorentzPoint LorentzPoint::origin(std::size_t dim, Curvature c) {
  return from_space(Vector(dim, 0.0), c);
}

LorentzPoint LorentzPoint::from_ambient(std::span<const double> ambient, Curvature c) {
  if (ambient.size() < 2) throw Error(ErrorKind::kDimensionMismatch, "LorentzPoint: need at least 2 coordinates");
  return LorentzPoint(ambient[0], Vector(ambient.begin() + 1, ambient.end()), c);
}

TangentVector TangentVector::at(const LorentzPoint& base, Vector components) {
  require_same_dim(base.ambient().size(), components.size(), "TangentVector");
  const double inner = lorentz_inner(base.ambient(), components);
  if (std::abs(inner) <= kTangentTol) return TangentVector(base, std::move(components));
  if (std::abs(inner) <= kTangentRepairTol) return proj_tangent(base, components);
  std::ostringstream msg;
  msg << "TangentVector: <x,v>_L = " << inner << " exceeds tangency tolerance";
  throw Error(ErrorKind::kDomain, msg.str());
}

TangentVector TangentVector::at_origin(Vector components) {
  return TangentVector(std::nullopt, std::move(components));
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

PoincarePoint mobius_add(const PoincarePoint& x, const PoincarePoint& y) {
  require_same_dim(x.dim(), y.dim(), "mobius_add");
  require_same_curvature(x.curvature(), y.curvature(), "mobius_add");
  const double c = x.curvature().value();
  const double xy = dot(x.coords(), y.coords());
  const double xx = dot(x.coords(), x.coords());
  const double yy = dot(y.coords(), y.coords());
  const double denom = 1.0 + 2.0 * c * xy + c * c * xx * yy;
  if (std::abs(denom) < kMobiusDenominatorMin) {
    throw Error(ErrorKind::kNumericalDegeneracy, "mobius_add: denominator vanishes");
  }
  const double a = (1.0 + 2.0 * c * xy + c * yy) / denom;
  const double b = (1.0 - c * xx) / denom;
  Vector out(x.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x.coords()[i] + b * y.coords()[i];
  return PoincarePoint(std::move(out), x.curvature());
}

double poincare_distance(const PoincarePoint& u, const PoincarePoint& v) {
  require_same_dim(u.dim(), v.dim(), "poincare_distance");
  require_same_curvature(u.curvature(), v.curvature(), "poincare_distance");
  const double c = u.curvature().value();
  double diff = 0.0;
  for (std::size_t i = 0; i < u.dim(); ++i) {
    const double d = u.coords()[i] - v.coords()[i];
    diff += d * d;
  }
  const double z = 2.0 * c * diff /
                   ((1.0 - c * dot(u.coords(), u.coords())) * (1.0 - c * dot(v.coords(), v.coords())));
  return acosh1p(z) / u.curvature().sqrt();
}

double poincare_distance_mobius(const PoincarePoint& u, const PoincarePoint& v) {
  require_same_dim(u.dim(), v.dim(), "poincare_distance_mobius");
  require_same_curvature(u.curvature(), v.curvature(), "poincare_distance_mobius");
  Vector neg(u.coords());
  for (double& e : neg) e = -e;
  const PoincarePoint w = mobius_add(PoincarePoint(std::move(neg), u.curvature()), v);
  const double sc = u.curvature().sqrt();
  return 2.0 / sc * std::atanh(sc * norm2(w.coords()));
}

PoincarePoint exp0_poincare(std::span<const double> v, Curvature c) {
  for (double e : v) {
    if (!std::isfinite(e)) throw Error(ErrorKind::kDomain, "exp0_poincare: non-finite input");
  }
  const double s = c.sqrt() * norm2(v);
  Vector out(v.begin(), v.end());
  if (s == 0.0) return PoincarePoint(std::move(out), c);
  // tanh saturates to 1 for s > ~19; keep the image strictly inside the ball.
  const double t = std::min(std::tanh(s), std::nextafter(1.0, 0.0));
  const double factor = s < 1e-8 ? 1.0 - s * s / 3.0 : t / s;
  for (double& e : out) e *= factor;
  return PoincarePoint(std::move(out), c);
}

Vector log0_poincare(const PoincarePoint& x) {
  const double s = x.curvature().sqrt() * norm2(x.coords());
  Vector out(x.coords());
  if (s == 0.0) return out;
  const double factor = s < 1e-8 ? 1.0 + s * s / 3.0 : std::atanh(s) / s;
  for (double& e : out) e *= factor;
  return out;
}

double lorentz_inner(std::span<const double> x, std::span<const double> y) {
  require_same_dim(x.size(), y.size(), "lorentz_inner");
  if (x.size() < 2) throw Error(ErrorKind::kDimensionMismatch, "lorentz_inner: need dimension >= 2");
  double acc = -x[0] * y[0];
  for (std::size_t i = 1; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double lorentz_norm(std::span<const double> v) {
  return std::sqrt(std::max(0.0, lorentz_inner(v, v)));
}

double arcosh_clamped(double arg) {
  return acosh1p(clamp_arcosh_offset(arg - 1.0, "arcosh"));
}

double lorentz_distance(const LorentzPoint& u, const LorentzPoint& v) {
  require_same_dim(u.dim(), v.dim(), "lorentz_distance");
  require_same_curvature(u.curvature(), v.curvature(), "lorentz_distance");
  const double c = u.curvature().value();
  const double z = clamp_arcosh_offset(lorentz_arcosh_offset(u.ambient(), v.ambient(), c), "lorentz_distance");
  return acosh1p(z) / u.curvature().sqrt();
}

TangentVector proj_tangent(const LorentzPoint& x, std::span<const double> y) {
  require_same_dim(x.ambient().size(), y.size(), "proj_tangent");
  const double c = x.curvature().value();
  const double xy = lorentz_inner(x.ambient(), y);
  Vector out(y.begin(), y.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * x.ambient()[i] * xy;
  return TangentVector::at(x, std::move(out));
}

LorentzPoint exp_map(const LorentzPoint& x, const TangentVector& v) {
  const TangentVector tv = TangentVector::at(x, v.components());
  const Vector& comp = tv.components();
  const double n = lorentz_norm(comp);
  if (n < kZeroTangentNorm) return x;
  const double s = x.curvature().sqrt() * n;
  const double ch = std::cosh(s);
  const double sh_over = std::sinh(s) / s;
  Vector space(x.dim());
  for (std::size_t i = 0; i < space.size(); ++i) {
    space[i] = ch * x.ambient()[i + 1] + sh_over * comp[i + 1];
  }
  // Time component recomputed from the constraint.
  return LorentzPoint::from_space(std::move(space), x.curvature());
}

TangentVector log_map(const LorentzPoint& x, const LorentzPoint& y) {
  require_same_dim(x.dim(), y.dim(), "log_map");
  require_same_curvature(x.curvature(), y.curvature(), "log_map");
  const double c = x.curvature().value();
  const double z = clamp_arcosh_offset(lorentz_arcosh_offset(x.ambient(), y.ambient(), c), "log_map");
  if (z == 0.0) return TangentVector::at(x, Vector(x.ambient().size(), 0.0));
  const double coef = acosh1p(z) / std::sqrt(z * (z + 2.0));
  const double xy = lorentz_inner(x.ambient(), y.ambient());
  Vector out(y.ambient());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = coef * (out[i] + c * x.ambient()[i] * xy);
  }
  return TangentVector::at(x, std::move(out));
}

LorentzPoint exp_origin(std::span<const double> h, Curvature c) {
  const double r = norm2(h);
  if (r < kZeroTangentNorm) return LorentzPoint::origin(h.size(), c);
  const double s = c.sqrt() * r;
  const double factor = std::sinh(s) / s;
  Vector space(h.begin(), h.end());
  for (double& e : space) e *= factor;
  return LorentzPoint::from_space(std::move(space), c);
}

Vector log_origin(const LorentzPoint& y) {
  const auto sp = y.space();
  const double r = norm2(sp);
  Vector out(sp.begin(), sp.end());
  if (r == 0.0) return out;
  // arcosh(sqrt(c) y0) == asinh(sqrt(c) |y_space|) on the hyperboloid.
  const double s = y.curvature().sqrt() * r;
  const double factor = std::asinh(s) / s;
  for (double& e : out) e *= factor;
  return out;
}

}  // namespace hyperadv::geometry
