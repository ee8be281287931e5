#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hyperadv/classifier.hpp"
#include "hyperadv/data.hpp"

namespace hyperadv::analysis {

inline constexpr int kReportSchemaVersion = 1;

struct SampleRecord {
  std::size_t sample_id = 0;
  std::string attack;
  double epsilon = 0.0;
  std::size_t label = 0;
  std::size_t pred_clean = 0;
  std::size_t pred_adv = 0;
  /// Probability of the clean prediction, before and after the attack.
  double msp_clean = 0.0;
  double msp_adv = 0.0;
  double dist_hyp = 0.0;
  double rad_norm = 0.0;
  double ang_norm = 0.0;
  /// |h| too small for a radial direction; excluded from decomposition means.
  bool degenerate = false;
};

struct AttackReport {
  std::string attack_name;
  double epsilon = 0.0;
  std::string norm = "linf";
  std::vector<std::uint64_t> seeds_used;
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  double mean_msp_drop = 0.0;
  double mean_hyperbolic_distance = 0.0;
  double mean_radial_norm = 0.0;
  double mean_angular_norm = 0.0;
  double mean_angular_fraction = 0.0;
  std::size_t degenerate_count = 0;
  std::size_t flagged_count = 0;
  std::vector<SampleRecord> per_sample_records;
};

struct DecompositionSummary {
  double mean_radial_norm = 0.0;
  double mean_angular_norm = 0.0;
  /// Mean of |v_ang|^2 / |dh|^2; samples with dh == 0 contribute 0.
  double mean_angular_fraction = 0.0;
  std::size_t degenerate_count = 0;
};

/// Fraction of rows whose argmax equals the label.
double robust_accuracy(const models::HyperbolicClassifier& model, const models::LabeledBatch& batch);

/// Mean over samples of p_clean(y) - p_adv(y) with y the clean argmax.
double msp_drop(const models::HyperbolicClassifier& model, const models::LabeledBatch& clean,
                const models::LabeledBatch& adversarial);

/// Mean Lorentz distance between exp_origin of clean and attacked features.
double embedding_distance(const models::HyperbolicClassifier& model, const models::LabeledBatch& clean,
                          const models::LabeledBatch& adversarial);

DecompositionSummary decomposition_report(const models::HyperbolicClassifier& model, const models::LabeledBatch& clean,
                                          const models::LabeledBatch& adversarial);

/// Builds per-sample records (computed on `threads` workers, each owning a
/// contiguous block of rows) and aggregates them in sample order.
AttackReport evaluate(const models::HyperbolicClassifier& model, const models::LabeledBatch& clean,
                      const models::LabeledBatch& adversarial, const std::string& attack_name, double epsilon,
                      std::size_t threads = 1);

/// Recomputes every aggregate of `report` from its per-sample records.
void summarize(AttackReport& report);

std::string to_json(const AttackReport& report);
AttackReport report_from_json(const std::string& text);

/// Header plus one line per record; reals printed with %.17g.
std::string to_csv(std::span<const SampleRecord> records);
std::vector<SampleRecord> records_from_csv(const std::string& text);

inline constexpr const char* kCsvHeader =
    "sample_id,attack,epsilon,label,pred_clean,pred_adv,msp_clean,msp_adv,dist_hyp,rad_norm,ang_norm";

}  // namespace hyperadv::analysis
