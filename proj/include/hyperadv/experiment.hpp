#pragma once

// Experiment configuration and the train / attack / report / gen-data
// commands behind the command-line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hyperadv/analysis.hpp"
#include "hyperadv/attacks.hpp"
#include "hyperadv/classifier.hpp"
#include "hyperadv/data.hpp"
#include "hyperadv/training.hpp"

namespace hyperadv::cli {

enum class DatasetKind { kHierarchy, kCifar };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::kHierarchy;
  /// The per-run data seed is hierarchy.seed + run seed.
  models::HierarchySpec hierarchy;
  std::filesystem::path cifar_path;
  std::size_t cifar_subset = 0;
  double test_fraction = 0.3;
};

struct ModelConfig {
  std::vector<std::size_t> hidden{128, 128};
  std::size_t feature_dim = 16;
  double curvature = 1.0;
  double logit_scale = 1.0;
  models::Activation activation = models::Activation::kTanh;
  double prototype_radius = 1.0;
};

struct AttackSpec {
  attacks::AttackKind kind = attacks::AttackKind::kFgsm;
  std::vector<double> epsilons{8.0 / 255.0};
  attacks::Norm norm = attacks::Norm::kLinf;
  /// Defaults: 20 for iterative attacks, 1 otherwise.
  std::size_t steps = 0;
  /// As a multiple of epsilon. Defaults: 1/4 for iterative attacks, 1 otherwise.
  double alpha_fraction = 0.0;
  bool random_start = false;
  attacks::PagdBootstrap pagd_bootstrap = attacks::PagdBootstrap::kTentativeStep;

  attacks::AttackConfig resolve(double epsilon, std::uint64_t seed) const;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  models::TrainConfig training;
  std::vector<AttackSpec> attacks;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path output_dir = "runs/default";
  std::size_t threads = 1;

  void validate() const;
};

/// Accepts "a/b" fractions or decimal numbers.
double parse_epsilon(const std::string& text);

/// Parses JSON (comments allowed). Unknown keys, wrong types and invalid
/// values raise kValidation before any work is done.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully defaulted configuration; parse_config(to_json(c)) reproduces c.
std::string to_json(const ExperimentConfig& config);

/// Train/test split for one run seed.
std::pair<models::LabeledBatch, models::LabeledBatch> load_dataset(const ExperimentConfig& config, std::uint64_t seed);
models::ClassifierSpec classifier_spec(const ExperimentConfig& config, std::size_t input_dim, std::size_t num_classes,
                                       std::uint64_t seed);

std::filesystem::path checkpoint_name(std::uint64_t seed);
std::filesystem::path report_stem(const std::string& attack, attacks::Norm norm, double epsilon, std::uint64_t seed);

struct CommandOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

/// Overrides from flags: --out replaces output_dir, --seed restricts the
/// run to that single seed, --threads sets evaluation workers.
ExperimentConfig apply_overrides(ExperimentConfig config, const CommandOptions& options);

struct TrainOutcome {
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

std::vector<TrainOutcome> cmd_train(const ExperimentConfig& config);

struct SummaryRow {
  std::string attack;
  std::string norm;
  double epsilon = 0.0;
  std::size_t runs = 0;
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  double mean_msp_drop = 0.0;
  double mean_hyperbolic_distance = 0.0;
  double mean_angular_fraction = 0.0;
};

/// Mean over reports per (attack, norm, epsilon), ordered by attack name,
/// then norm, then epsilon ascending.
std::vector<SummaryRow> summarize_reports(const std::vector<analysis::AttackReport>& reports);
std::string render_table(const std::vector<SummaryRow>& rows);
std::string summary_csv(const std::vector<SummaryRow>& rows);
/// One row per epsilon, one robust-accuracy column per attack/norm.
std::string plot_data_csv(const std::vector<SummaryRow>& rows);

/// checkpoint: a checkpoint file (single seed) or a training directory
/// holding checkpoint_seed<s>.bin; defaults to the output directory.
std::vector<analysis::AttackReport> cmd_attack(const ExperimentConfig& config,
                                               const std::optional<std::filesystem::path>& checkpoint);

std::vector<SummaryRow> cmd_report(const std::vector<std::filesystem::path>& report_files,
                                   const std::filesystem::path& out_dir);

/// Writes the train and test splits of the first seed as CSV.
void cmd_gen_data(const ExperimentConfig& config);

/// Exclusive advisory lock on <dir>/.lock for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace hyperadv::cli
