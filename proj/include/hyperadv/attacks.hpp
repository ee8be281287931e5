#pragma once

// Input-space attacks against HyperbolicClassifier.
//
// All attacks are white-box and per-sample: the loss is summed over the batch
// so each row's input gradient depends only on that row. sign(0) is 0.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hyperadv/classifier.hpp"
#include "hyperadv/data.hpp"

namespace hyperadv::attacks {

enum class Norm { kLinf, kL2 };

enum class AttackKind { kFgsm, kPgd, kAgsm, kPagd, kRadialProbe, kAngularProbe };

/// How the shift at the first PAGD iteration is formed.
enum class PagdBootstrap {
  /// Delta h_0 = f(x + alpha dir(grad L)) - f(x): the same orientation as the
  /// tentative step of AGSM.
  kTentativeStep,
  /// x_{-1} := x + alpha dir(grad L), so Delta h_0 = f(x) - f(x_{-1}).
  kPreviousIsTentative,
};

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  Norm norm = Norm::kLinf;
  std::size_t steps = 1;
  double alpha = 2.0 / 255.0;
  double clip_min = 0.0;
  double clip_max = 1.0;
  std::uint64_t seed = 0;
  /// PGD only: start uniformly inside the epsilon ball.
  bool random_start = false;
  PagdBootstrap pagd_bootstrap = PagdBootstrap::kTentativeStep;

  /// epsilon == 0 is accepted and yields the identity attack.
  void validate() const;
};

struct AttackResult {
  std::vector<double> inputs;   // [B, input_dim]
  /// Per sample: the attack fell back (AGSM/PAGD) or had no usable
  /// direction (zero gradient in l2 mode, vanishing probe component).
  std::vector<std::uint8_t> flagged;

  std::size_t flagged_count() const;
};

/// Radial/angular split of a feature shift. v_rad + v_ang == delta_h.
struct ShiftDecomposition {
  std::vector<double> delta_h;
  std::vector<double> radial;
  std::vector<double> angular;
  double radial_norm = 0.0;
  double angular_norm = 0.0;
};

enum class FeatureSpace {
  /// h and h_adv are Euclidean vectors in the tangent space at the origin.
  kTangentAtOrigin,
  /// h and h_adv are Lorentz points in ambient coordinates; they are first
  /// mapped to the origin tangent space with the logarithmic map.
  kLorentz,
};

inline constexpr double kDegenerateNorm = 1e-12;

/// u = h/|h|, v_rad = <dh,u> u, v_ang = dh - v_rad. Throws kDegenerateBase
/// when |h| <= 1e-12 (after the log map in Lorentz mode).
ShiftDecomposition decompose_shift(std::span<const double> h, std::span<const double> h_adv,
                                   FeatureSpace space = FeatureSpace::kTangentAtOrigin, double curvature = 1.0);

AttackResult fgsm(const models::HyperbolicClassifier& model, const models::LabeledBatch& batch, const AttackConfig& config);
AttackResult pgd(const models::HyperbolicClassifier& model, const models::LabeledBatch& batch, const AttackConfig& config);
/// Angular Gradient Sign Method.
AttackResult agsm(const models::HyperbolicClassifier& model, const models::LabeledBatch& batch, const AttackConfig& config);
/// Projected Angular Gradient Descent.
AttackResult pagd(const models::HyperbolicClassifier& model, const models::LabeledBatch& batch, const AttackConfig& config);
/// AGSM with the radial component back-propagated instead of the angular one.
AttackResult radial_probe(const models::HyperbolicClassifier& model, const models::LabeledBatch& batch,
                          const AttackConfig& config);
/// Back-propagates the angular component and applies the raw direction,
/// scaled to the budget (x + eps d/|d|_inf, or x + eps d/|d|_2 for l2)
/// instead of taking its sign.
AttackResult angular_probe(const models::HyperbolicClassifier& model, const models::LabeledBatch& batch,
                           const AttackConfig& config);

AttackResult run_attack(AttackKind kind, const models::HyperbolicClassifier& model, const models::LabeledBatch& batch,
                        const AttackConfig& config);

// ---------------------------------------------------------------------------
// Building blocks, exposed for tests and the analysis module.

/// grad_x of the summed cross-entropy, [B, input_dim].
std::vector<double> loss_gradient(const models::HyperbolicClassifier& model, std::span<const double> inputs,
                                  std::span<const std::size_t> labels);

/// (dh/dx)^T v for each row, with v treated as a constant.
std::vector<double> feature_vjp(const models::HyperbolicClassifier& model, std::span<const double> inputs,
                                std::span<const double> cotangent);

std::string to_string(AttackKind kind);
std::string to_string(Norm norm);
AttackKind parse_attack_kind(const std::string& name);
Norm parse_norm(const std::string& name);
/// True for attacks that iterate (pgd, pagd).
bool is_iterative(AttackKind kind);

}  // namespace hyperadv::attacks
