#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hyperadv/autodiff.hpp"

namespace hyperadv::models {

/// Row-major inputs in [0,1] with one integer label per row.
struct LabeledBatch {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(inputs).subspan(i * input_dim, input_dim);
  }
  ad::Tensor tensor() const { return ad::Tensor::constant({size(), input_dim}, inputs); }

  /// Rows [begin, begin + count).
  LabeledBatch slice(std::size_t begin, std::size_t count) const;
  LabeledBatch gather(std::span<const std::size_t> indices) const;
  /// Same labels, different inputs (e.g. an adversarial copy).
  LabeledBatch with_inputs(std::vector<double> new_inputs) const;

  /// Throws kValidation unless shapes agree, inputs lie in [0,1] and labels
  /// are below num_classes.
  void validate() const;
};

struct HierarchySpec {
  std::size_t branching = 3;
  std::size_t depth = 2;
  std::size_t input_dim = 32;
  double class_separation = 3.5;
  /// Child offsets at level l are scaled by depth_decay^l.
  double depth_decay = 0.5;
  double noise_scale = 0.25;
  std::size_t samples_per_class = 100;
  std::uint64_t seed = 0;

  std::size_t num_classes() const;
  void validate() const;
};

/// Synthetic tree-structured classes: each child mean is its parent mean
/// plus a random unit offset, samples are Gaussian around the leaf means and
/// the whole set is affinely squashed into [0,1].
LabeledBatch gen_hierarchy(const HierarchySpec& spec);

/// Class means before squashing, in leaf order; exposed for tests.
std::vector<std::vector<double>> hierarchy_means(const HierarchySpec& spec);

/// Deterministic shuffled split into (train, test).
std::pair<LabeledBatch, LabeledBatch> split(const LabeledBatch& data, double test_fraction, std::uint64_t seed);

// CIFAR-10 binary layout: each record is 1 label byte followed by 3072 pixel
// bytes (1024 red, 1024 green, 1024 blue; 32x32 row-major).
inline constexpr std::size_t kCifarImageBytes = 3072;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarImageBytes;
inline constexpr std::size_t kCifarClasses = 10;

/// Loads a CIFAR-10 binary batch file. subset_size == 0 keeps every record;
/// otherwise that many records are drawn without replacement using seed and
/// returned in file order. Pixels are scaled to [0,1] and kept flattened.
LabeledBatch load_cifar_binary(const std::filesystem::path& path, std::size_t subset_size, std::uint64_t seed);

/// Writes records in the CIFAR-10 binary layout.
void write_cifar_binary(const std::filesystem::path& path, std::span<const std::uint8_t> labels,
                        std::span<const std::uint8_t> pixels);

}  // namespace hyperadv::models
