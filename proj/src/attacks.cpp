#include "hyperadv/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "hyperadv/geometry.hpp"

namespace hyperadv::attacks {

using models::HyperbolicClassifier;
using models::LabeledBatch;

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw Error(ErrorKind::kValidation, "attack: epsilon must be >= 0");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::kValidation, "attack: alpha must be positive");
  if (steps < 1) throw Error(ErrorKind::kValidation, "attack: steps must be >= 1");
  if (!(clip_min < clip_max)) throw Error(ErrorKind::kValidation, "attack: clip_min must be below clip_max");
}

std::size_t AttackResult::flagged_count() const {
  return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), std::uint8_t{1}));
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Per-row step direction: sign for linf, unit l2 direction for l2. Returns
// false when the row has no direction (all zero).
bool direction(std::span<const double> g, Norm norm, std::span<double> out) {
  if (norm == Norm::kLinf) {
    bool any = false;
    for (std::size_t i = 0; i < g.size(); ++i) {
      out[i] = sign(g[i]);
      any = any || out[i] != 0.0;
    }
    return any;
  }
  double n2 = 0.0;
  for (double v : g) n2 += v * v;
  const double n = std::sqrt(n2);
  if (n == 0.0 || !std::isfinite(n)) {
    std::fill(out.begin(), out.end(), 0.0);
    return false;
  }
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] / n;
  return true;
}

void clip(std::span<double> x, const AttackConfig& cfg) {
  for (double& v : x) v = std::clamp(v, cfg.clip_min, cfg.clip_max);
}

// Projects x onto the norm ball of radius eps around origin (row-wise).
void project(std::span<double> x, std::span<const double> origin, const AttackConfig& cfg) {
  if (cfg.norm == Norm::kLinf) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = std::clamp(x[i], origin[i] - cfg.epsilon, origin[i] + cfg.epsilon);
    }
    return;
  }
  double n2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) n2 += (x[i] - origin[i]) * (x[i] - origin[i]);
  const double n = std::sqrt(n2);
  if (n <= cfg.epsilon) return;
  const double s = cfg.epsilon / n;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = origin[i] + (x[i] - origin[i]) * s;
}

struct Rows {
  std::size_t count;
  std::size_t width;
  std::span<double> row(std::vector<double>& v, std::size_t i) const {
    return std::span<double>(v).subspan(i * width, width);
  }
  std::span<const double> row(const std::vector<double>& v, std::size_t i) const {
    return std::span<const double>(v).subspan(i * width, width);
  }
};

// x + size * dir(g) row-wise; rows without a direction are left unchanged
// and reported through `has_dir`.
std::vector<double> take_step(std::span<const double> x, const std::vector<double>& g, double size, Norm norm,
                              const Rows& rows, std::vector<std::uint8_t>* has_dir = nullptr) {
  std::vector<double> out(x.begin(), x.end());
  std::vector<double> dir(rows.width);
  if (has_dir) has_dir->assign(rows.count, 0);
  for (std::size_t b = 0; b < rows.count; ++b) {
    const bool ok = direction(rows.row(g, b), norm, dir);
    if (has_dir) (*has_dir)[b] = ok ? 1 : 0;
    auto r = rows.row(out, b);
    for (std::size_t i = 0; i < rows.width; ++i) r[i] += size * dir[i];
  }
  return out;
}

// One forward pass of the encoder with x on a tape; `cotangent_for` receives
// the features and returns v, and the result is (dh/dx)^T v.
struct FeatureVjp {
  std::vector<double> features;
  std::vector<double> gradient;
};

FeatureVjp features_then_vjp(const HyperbolicClassifier& model, std::span<const double> inputs,
                             const std::function<std::vector<double>(const std::vector<double>&)>& cotangent_for) {
  ad::Tape tape;
  const models::BoundModel bound = model.bind(tape, false);
  const std::size_t batch = inputs.size() / model.input_dim();
  const ad::Tensor x = tape.variable({batch, model.input_dim()}, std::vector<double>(inputs.begin(), inputs.end()));
  const ad::Tensor h = model.encode(bound, x);
  FeatureVjp out;
  out.features.assign(h.data().begin(), h.data().end());
  const std::vector<double> v = cotangent_for(out.features);
  const ad::Tensor g = ad::vjp(h, v, x);
  out.gradient.assign(g.data().begin(), g.data().end());
  return out;
}

void check_batch(const HyperbolicClassifier& model, const LabeledBatch& batch, const AttackConfig& config) {
  config.validate();
  if (batch.input_dim != model.input_dim()) throw Error(ErrorKind::kShape, "attack: batch input_dim does not match model");
  if (batch.inputs.size() != batch.size() * batch.input_dim) throw Error(ErrorKind::kShape, "attack: malformed batch");
}

enum class Component { kRadial, kAngular };

// Radial/angular split of a shift `delta` at base `h`.
ShiftDecomposition split_shift(std::span<const double> h, std::vector<double> delta) {
  const double hn = geometry::norm2(h);
  if (!(hn > kDegenerateNorm)) {
    throw Error(ErrorKind::kDegenerateBase, "decompose_shift: |h| <= 1e-12, radial direction undefined");
  }
  const std::size_t d = h.size();
  ShiftDecomposition out;
  out.delta_h = std::move(delta);
  double proj = 0.0;
  for (std::size_t i = 0; i < d; ++i) proj += out.delta_h[i] * (h[i] / hn);
  out.radial.resize(d);
  out.angular.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.radial[i] = proj * (h[i] / hn);
    out.angular[i] = out.delta_h[i] - out.radial[i];
  }
  out.radial_norm = geometry::norm2(out.radial);
  out.angular_norm = geometry::norm2(out.angular);
  return out;
}

// Row-wise split; returns the requested component and its per-row norms.
std::vector<double> component_rows(const std::vector<double>& h, const std::vector<double>& delta, std::size_t d,
                                   Component which, std::vector<double>& norms) {
  const std::size_t batch = h.size() / d;
  std::vector<double> out;
  out.reserve(h.size());
  norms.assign(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    ShiftDecomposition dec = split_shift(std::span<const double>(&h[b * d], d),
                                         std::vector<double>(delta.begin() + b * d, delta.begin() + (b + 1) * d));
    const auto& part = which == Component::kRadial ? dec.radial : dec.angular;
    out.insert(out.end(), part.begin(), part.end());
    norms[b] = which == Component::kRadial ? dec.radial_norm : dec.angular_norm;
  }
  return out;
}

std::vector<double> row_difference(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// Shared body of AGSM and the two probes: tentative loss step, feature shift,
// component back-propagation.
struct OneStepAngular {
  std::vector<double> gradient;   // loss gradient at x
  std::vector<double> component;  // chosen shift component per row
  std::vector<double> norms;      // |component| per row
  std::vector<double> direction;  // (dh/dx)^T component
};

OneStepAngular one_step_component(const HyperbolicClassifier& model, const LabeledBatch& batch,
                                  const AttackConfig& config, Component which) {
  const Rows rows{batch.size(), batch.input_dim};
  OneStepAngular out;
  out.gradient = loss_gradient(model, batch.inputs, batch.labels);
  const std::vector<double> tentative = take_step(batch.inputs, out.gradient, config.epsilon, config.norm, rows);
  const std::vector<double> h_tent = model.features(tentative);
  const std::size_t d = model.feature_dim();
  const FeatureVjp fv = features_then_vjp(model, batch.inputs, [&](const std::vector<double>& h) {
    out.component = component_rows(h, row_difference(h_tent, h), d, which, out.norms);
    return out.component;
  });
  out.direction = fv.gradient;
  return out;
}

}  // namespace

ShiftDecomposition decompose_shift(std::span<const double> h, std::span<const double> h_adv, FeatureSpace space,
                                   double curvature) {
  if (h.size() != h_adv.size()) throw Error(ErrorKind::kDimensionMismatch, "decompose_shift: size mismatch");
  std::vector<double> base(h.begin(), h.end());
  std::vector<double> moved(h_adv.begin(), h_adv.end());
  if (space == FeatureSpace::kLorentz) {
    const geometry::Curvature c(curvature);
    base = geometry::log_origin(geometry::LorentzPoint::from_ambient(h, c));
    moved = geometry::log_origin(geometry::LorentzPoint::from_ambient(h_adv, c));
  }
  std::vector<double> delta(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) delta[i] = moved[i] - base[i];
  return split_shift(base, std::move(delta));
}

std::vector<double> loss_gradient(const HyperbolicClassifier& model, std::span<const double> inputs,
                                  std::span<const std::size_t> labels) {
  ad::Tape tape;
  const models::BoundModel bound = model.bind(tape, false);
  const ad::Tensor x = tape.variable({labels.size(), model.input_dim()}, std::vector<double>(inputs.begin(), inputs.end()));
  const ad::Tensor loss = ad::softmax_cross_entropy(model.logits(bound, model.encode(bound, x)), labels, ad::Reduction::kSum);
  const ad::GradientMap grads = tape.backward(loss);
  const auto g = grads.at(x).data();
  return {g.begin(), g.end()};
}

std::vector<double> feature_vjp(const HyperbolicClassifier& model, std::span<const double> inputs,
                                std::span<const double> cotangent) {
  const std::vector<double> v(cotangent.begin(), cotangent.end());
  return features_then_vjp(model, inputs, [&](const std::vector<double>&) { return v; }).gradient;
}

AttackResult fgsm(const HyperbolicClassifier& model, const LabeledBatch& batch, const AttackConfig& config) {
  check_batch(model, batch, config);
  const Rows rows{batch.size(), batch.input_dim};
  const std::vector<double> g = loss_gradient(model, batch.inputs, batch.labels);
  std::vector<std::uint8_t> has_dir;
  AttackResult out;
  out.inputs = take_step(batch.inputs, g, config.epsilon, config.norm, rows, &has_dir);
  clip(out.inputs, config);
  out.flagged.assign(batch.size(), 0);
  if (config.norm == Norm::kL2) {
    for (std::size_t b = 0; b < batch.size(); ++b) out.flagged[b] = has_dir[b] ? 0 : 1;
  }
  return out;
}

AttackResult pgd(const HyperbolicClassifier& model, const LabeledBatch& batch, const AttackConfig& config) {
  check_batch(model, batch, config);
  const Rows rows{batch.size(), batch.input_dim};
  std::vector<double> x = batch.inputs;
  if (config.random_start && config.epsilon > 0.0) {
    std::mt19937_64 rng(config.seed);
    if (config.norm == Norm::kLinf) {
      std::uniform_real_distribution<double> u(-config.epsilon, config.epsilon);
      for (double& v : x) v += u(rng);
    } else {
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t b = 0; b < rows.count; ++b) {
        auto r = rows.row(x, b);
        std::vector<double> dir(rows.width);
        double n2 = 0.0;
        for (double& e : dir) {
          e = normal(rng);
          n2 += e * e;
        }
        const double radius = config.epsilon * std::pow(u(rng), 1.0 / static_cast<double>(rows.width));
        for (std::size_t i = 0; i < rows.width; ++i) r[i] += radius * dir[i] / std::sqrt(n2);
      }
    }
    clip(x, config);
  }
  for (std::size_t t = 0; t < config.steps; ++t) {
    const std::vector<double> g = loss_gradient(model, x, batch.labels);
    x = take_step(x, g, config.alpha, config.norm, rows);
    for (std::size_t b = 0; b < rows.count; ++b) {
      project(rows.row(x, b), rows.row(batch.inputs, b), config);
    }
    clip(x, config);
  }
  return AttackResult{std::move(x), std::vector<std::uint8_t>(batch.size(), 0)};
}

AttackResult agsm(const HyperbolicClassifier& model, const LabeledBatch& batch, const AttackConfig& config) {
  check_batch(model, batch, config);
  const Rows rows{batch.size(), batch.input_dim};
  const OneStepAngular s = one_step_component(model, batch, config, Component::kAngular);
  AttackResult out;
  out.inputs = take_step(batch.inputs, s.direction, config.epsilon, config.norm, rows);
  const std::vector<double> fgsm_step = take_step(batch.inputs, s.gradient, config.epsilon, config.norm, rows);
  out.flagged.assign(batch.size(), 0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (s.norms[b] < kDegenerateNorm) {
      out.flagged[b] = 1;
      std::copy_n(&fgsm_step[b * rows.width], rows.width, &out.inputs[b * rows.width]);
    }
  }
  clip(out.inputs, config);
  return out;
}

AttackResult radial_probe(const HyperbolicClassifier& model, const LabeledBatch& batch, const AttackConfig& config) {
  check_batch(model, batch, config);
  const Rows rows{batch.size(), batch.input_dim};
  const OneStepAngular s = one_step_component(model, batch, config, Component::kRadial);
  AttackResult out;
  out.inputs = take_step(batch.inputs, s.direction, config.epsilon, config.norm, rows);
  out.flagged.assign(batch.size(), 0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (s.norms[b] < kDegenerateNorm) {
      out.flagged[b] = 1;
      std::copy_n(&batch.inputs[b * rows.width], rows.width, &out.inputs[b * rows.width]);
    }
  }
  clip(out.inputs, config);
  return out;
}

AttackResult angular_probe(const HyperbolicClassifier& model, const LabeledBatch& batch, const AttackConfig& config) {
  check_batch(model, batch, config);
  const Rows rows{batch.size(), batch.input_dim};
  const OneStepAngular s = one_step_component(model, batch, config, Component::kAngular);
  AttackResult out;
  out.inputs = batch.inputs;
  out.flagged.assign(batch.size(), 0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto d = rows.row(s.direction, b);
    double scale = 0.0;
    if (config.norm == Norm::kLinf) {
      for (double v : d) scale = std::max(scale, std::abs(v));
    } else {
      scale = geometry::norm2(d);
    }
    if (s.norms[b] < kDegenerateNorm || scale == 0.0) {
      out.flagged[b] = 1;
      continue;
    }
    auto r = rows.row(out.inputs, b);
    for (std::size_t i = 0; i < rows.width; ++i) r[i] += config.epsilon * (d[i] / scale);
  }
  clip(out.inputs, config);
  return out;
}

AttackResult pagd(const HyperbolicClassifier& model, const LabeledBatch& batch, const AttackConfig& config) {
  check_batch(model, batch, config);
  const Rows rows{batch.size(), batch.input_dim};
  const std::size_t d = model.feature_dim();
  AttackResult out;
  out.flagged.assign(batch.size(), 0);

  const std::vector<double> g0 = loss_gradient(model, batch.inputs, batch.labels);
  const std::vector<double> h_boot = model.features(take_step(batch.inputs, g0, config.alpha, config.norm, rows));

  std::vector<double> x = batch.inputs;
  std::vector<double> h_prev;
  for (std::size_t t = 0; t < config.steps; ++t) {
    std::vector<double> norms;
    const FeatureVjp fv = features_then_vjp(model, x, [&](const std::vector<double>& h) {
      std::vector<double> delta;
      if (t == 0) {
        delta = config.pagd_bootstrap == PagdBootstrap::kTentativeStep ? row_difference(h_boot, h)
                                                                       : row_difference(h, h_boot);
      } else {
        delta = row_difference(h, h_prev);
      }
      return component_rows(h, delta, d, Component::kAngular, norms);
    });
    h_prev = fv.features;

    std::vector<double> dir = fv.gradient;
    bool any_fallback = false;
    for (std::size_t b = 0; b < rows.count; ++b) any_fallback = any_fallback || norms[b] < kDegenerateNorm;
    if (any_fallback) {
      // No angular movement to follow: take a loss-gradient step instead.
      const std::vector<double> g = loss_gradient(model, x, batch.labels);
      for (std::size_t b = 0; b < rows.count; ++b) {
        if (norms[b] < kDegenerateNorm) {
          out.flagged[b] = 1;
          std::copy_n(&g[b * rows.width], rows.width, &dir[b * rows.width]);
        }
      }
    }
    x = take_step(x, dir, config.alpha, config.norm, rows);
    for (std::size_t b = 0; b < rows.count; ++b) project(rows.row(x, b), rows.row(batch.inputs, b), config);
    clip(x, config);
  }
  out.inputs = std::move(x);
  return out;
}

AttackResult run_attack(AttackKind kind, const HyperbolicClassifier& model, const LabeledBatch& batch,
                        const AttackConfig& config) {
  switch (kind) {
    case AttackKind::kFgsm: return fgsm(model, batch, config);
    case AttackKind::kPgd: return pgd(model, batch, config);
    case AttackKind::kAgsm: return agsm(model, batch, config);
    case AttackKind::kPagd: return pagd(model, batch, config);
    case AttackKind::kRadialProbe: return radial_probe(model, batch, config);
    case AttackKind::kAngularProbe: return angular_probe(model, batch, config);
  }
  throw Error(ErrorKind::kContract, "run_attack: unknown attack");
}

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgsm: return "fgsm";
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kAgsm: return "agsm";
    case AttackKind::kPagd: return "pagd";
    case AttackKind::kRadialProbe: return "radial_probe";
    case AttackKind::kAngularProbe: return "angular_probe";
  }
  return "unknown";
}

std::string to_string(Norm norm) { return norm == Norm::kLinf ? "linf" : "l2"; }

AttackKind parse_attack_kind(const std::string& name) {
  for (AttackKind k : {AttackKind::kFgsm, AttackKind::kPgd, AttackKind::kAgsm, AttackKind::kPagd,
                       AttackKind::kRadialProbe, AttackKind::kAngularProbe}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::kValidation, "unknown attack '" + name + "'");
}

Norm parse_norm(const std::string& name) {
  if (name == "linf") return Norm::kLinf;
  if (name == "l2") return Norm::kL2;
  throw Error(ErrorKind::kValidation, "unknown norm '" + name + "' (expected linf or l2)");
}

bool is_iterative(AttackKind kind) { return kind == AttackKind::kPgd || kind == AttackKind::kPagd; }

}  // namespace hyperadv::attacks
