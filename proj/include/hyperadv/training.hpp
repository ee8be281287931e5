#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hyperadv/classifier.hpp"
#include "hyperadv/data.hpp"

namespace hyperadv::models {

enum class Augmentation { kNone, kFgsm, kAgsm };

std::string to_string(Augmentation a);
Augmentation parse_augmentation(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  Augmentation augmentation = Augmentation::kNone;
  double augmentation_epsilon = 8.0 / 255.0;
  /// Share of each batch replaced by its attacked counterpart.
  double adversarial_fraction = 0.5;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  double final_loss = 0.0;
};

struct TrainResult {
  HyperbolicClassifier model;
  TrainLog log;
};

/// Mini-batch SGD with momentum on the encoder and one-step Riemannian SGD
/// (tangent projection followed by the exponential map) on the prototypes.
/// Deterministic for a given seed. Throws kDivergence on a non-finite loss.
TrainResult train(HyperbolicClassifier model, const LabeledBatch& data, const TrainConfig& config);

double accuracy(const HyperbolicClassifier& model, const LabeledBatch& data);

}  // namespace hyperadv::models
