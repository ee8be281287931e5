#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hyperadv/autodiff.hpp"
#include "hyperadv/data.hpp"
#include "hyperadv/geometry.hpp"

namespace hyperadv::models {

enum class Activation { kTanh, kRelu };

struct ClassifierSpec {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden{128, 128};
  std::size_t feature_dim = 16;
  std::size_t num_classes = 9;
  double curvature = 1.0;
  double logit_scale = 1.0;
  Activation activation = Activation::kTanh;
  /// Geodesic distance of the initial prototypes from the origin.
  double prototype_radius = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Dense layer y = x W + b with W stored [in, out] row-major.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;
  std::vector<double> bias;
};

/// Parameters bound onto a tape, either as trainable variables or constants.
struct BoundModel {
  std::vector<ad::Tensor> weights;
  std::vector<ad::Tensor> biases;
  ad::Tensor prototypes;  // [K, d+1] ambient coordinates
};

/// MLP encoder producing tangent features at the Lorentz origin, followed by
/// a head whose logits are negative scaled geodesic distances to one
/// prototype point per class.
class HyperbolicClassifier {
 public:
  /// Glorot-uniform weights, zero biases, prototypes at prototype_radius in
  /// random directions.
  explicit HyperbolicClassifier(const ClassifierSpec& spec);
  HyperbolicClassifier(std::vector<DenseLayer> layers, std::vector<geometry::LorentzPoint> prototypes,
                       geometry::Curvature curvature, double logit_scale, Activation activation);

  std::size_t input_dim() const noexcept { return layers_.front().in; }
  std::size_t feature_dim() const noexcept { return layers_.back().out; }
  std::size_t num_classes() const noexcept { return prototypes_.size(); }
  geometry::Curvature curvature() const noexcept { return curvature_; }
  double logit_scale() const noexcept { return logit_scale_; }
  Activation activation() const noexcept { return activation_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& mutable_layers() noexcept { return layers_; }
  const std::vector<geometry::LorentzPoint>& prototypes() const noexcept { return prototypes_; }
  void set_prototypes(std::vector<geometry::LorentzPoint> prototypes);
  void set_logit_scale(double s);

  BoundModel bind(ad::Tape& tape, bool trainable) const;

  /// h = f(x) for inputs [B, input_dim].
  ad::Tensor encode(const BoundModel& bound, const ad::Tensor& inputs) const;
  /// logit_k = -logit_scale * d_L(exp_0((0,h)), p_k).
  ad::Tensor logits(const BoundModel& bound, const ad::Tensor& features) const;

  // Convenience evaluations without gradients.
  std::vector<double> features(std::span<const double> inputs) const;
  std::vector<double> logits(std::span<const double> inputs) const;
  std::vector<double> logits_from_features(std::span<const double> features) const;

  /// Argmax per row; ties go to the lowest class index.
  static std::vector<std::size_t> argmax_rows(std::span<const double> logits, std::size_t cols);
  std::vector<std::size_t> predict(std::span<const double> inputs) const;

  std::size_t num_parameters() const;

 private:
  std::vector<DenseLayer> layers_;
  std::vector<geometry::LorentzPoint> prototypes_;
  geometry::Curvature curvature_;
  double logit_scale_;
  Activation activation_;
};

/// Row-wise softmax of [B, K] logits.
std::vector<double> softmax_rows(std::span<const double> logits, std::size_t cols);

// ---------------------------------------------------------------------------
// Checkpoints: "HADVCKPT" magic, u32 format version, u64 header length, a
// JSON header describing shapes/curvature/activation, then the raw
// little-endian float64 buffers in header order.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const HyperbolicClassifier& model, const std::filesystem::path& path);
HyperbolicClassifier load_checkpoint(const std::filesystem::path& path);

}  // namespace hyperadv::models
