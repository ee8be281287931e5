#include "hyperadv/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "hyperadv/error.hpp"

namespace hyperadv::models {

LabeledBatch LabeledBatch::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw Error(ErrorKind::kShape, "LabeledBatch::slice: range out of bounds");
  LabeledBatch out{input_dim, num_classes, {}, {}};
  out.inputs.assign(inputs.begin() + static_cast<std::ptrdiff_t>(begin * input_dim),
                    inputs.begin() + static_cast<std::ptrdiff_t>((begin + count) * input_dim));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return out;
}

LabeledBatch LabeledBatch::gather(std::span<const std::size_t> indices) const {
  LabeledBatch out{input_dim, num_classes, {}, {}};
  out.inputs.reserve(indices.size() * input_dim);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw Error(ErrorKind::kShape, "LabeledBatch::gather: index out of bounds");
    const auto r = row(i);
    out.inputs.insert(out.inputs.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

LabeledBatch LabeledBatch::with_inputs(std::vector<double> new_inputs) const {
  if (new_inputs.size() != inputs.size()) {
    throw Error(ErrorKind::kShape, "LabeledBatch::with_inputs: size mismatch");
  }
  return LabeledBatch{input_dim, num_classes, std::move(new_inputs), labels};
}

void LabeledBatch::validate() const {
  if (input_dim == 0) throw Error(ErrorKind::kValidation, "batch: input_dim is zero");
  if (inputs.size() != labels.size() * input_dim) {
    throw Error(ErrorKind::kValidation, "batch: inputs do not match labels x input_dim");
  }
  for (std::size_t l : labels) {
    if (l >= num_classes) {
      throw Error(ErrorKind::kValidation, "batch: label " + std::to_string(l) + " not below " +
                                              std::to_string(num_classes));
    }
  }
  for (double v : inputs) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::kValidation, "batch: input outside [0,1]");
  }
}

std::size_t HierarchySpec::num_classes() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < depth; ++i) n *= branching;
  return n;
}

void HierarchySpec::validate() const {
  if (branching == 0 || depth == 0) throw Error(ErrorKind::kValidation, "hierarchy: branching and depth must be positive");
  if (input_dim == 0) throw Error(ErrorKind::kValidation, "hierarchy: input_dim must be positive");
  if (samples_per_class == 0) throw Error(ErrorKind::kValidation, "hierarchy: samples_per_class must be positive");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw Error(ErrorKind::kValidation, "hierarchy: noise_scale must be non-negative");
  }
  if (!std::isfinite(class_separation) || !(depth_decay > 0.0)) {
    throw Error(ErrorKind::kValidation, "hierarchy: invalid class_separation or depth_decay");
  }
}

namespace {

std::vector<double> random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (double& e : v) {
      e = normal(rng);
      n2 += e * e;
    }
  } while (n2 == 0.0);
  const double inv = 1.0 / std::sqrt(n2);
  for (double& e : v) e *= inv;
  return v;
}

}  // namespace

std::vector<std::vector<double>> hierarchy_means(const HierarchySpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<std::vector<double>> level{std::vector<double>(spec.input_dim, 0.0)};
  double step = spec.class_separation;
  for (std::size_t l = 0; l < spec.depth; ++l) {
    std::vector<std::vector<double>> next;
    next.reserve(level.size() * spec.branching);
    for (const auto& parent : level) {
      for (std::size_t b = 0; b < spec.branching; ++b) {
        auto dir = random_unit(spec.input_dim, rng);
        std::vector<double> child(parent);
        for (std::size_t i = 0; i < child.size(); ++i) child[i] += step * dir[i];
        next.push_back(std::move(child));
      }
    }
    level = std::move(next);
    step *= spec.depth_decay;
  }
  return level;
}

LabeledBatch gen_hierarchy(const HierarchySpec& spec) {
  const auto means = hierarchy_means(spec);
  // Sample noise from a stream independent of the mean placement.
  std::mt19937_64 rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  LabeledBatch out{spec.input_dim, means.size(), {}, {}};
  out.inputs.reserve(means.size() * spec.samples_per_class * spec.input_dim);
  for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
    for (std::size_t k = 0; k < means.size(); ++k) {
      for (std::size_t i = 0; i < spec.input_dim; ++i) {
        out.inputs.push_back(means[k][i] + spec.noise_scale * noise(rng));
      }
      out.labels.push_back(k);
    }
  }
  const auto [lo_it, hi_it] = std::minmax_element(out.inputs.begin(), out.inputs.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  for (double& v : out.inputs) v = span > 0.0 ? (v - lo) / span : 0.5;
  return out;
}

std::pair<LabeledBatch, LabeledBatch> split(const LabeledBatch& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorKind::kValidation, "split: test_fraction must lie in (0,1)");
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {data.gather(train), data.gather(test)};
}

LabeledBatch load_cifar_binary(const std::filesystem::path& path, std::size_t subset_size, std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open CIFAR file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw Error(ErrorKind::kFormat, "CIFAR file " + path.string() + " is empty");
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t offset = bytes.size() / kCifarRecordBytes * kCifarRecordBytes;
    std::ostringstream msg;
    msg << path.string() << ": truncated record at byte offset " << offset << " (" << bytes.size() - offset
        << " of " << kCifarRecordBytes << " bytes)";
    throw Error(ErrorKind::kFormat, msg.str());
  }
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  for (std::size_t r = 0; r < records; ++r) {
    const std::uint8_t label = bytes[r * kCifarRecordBytes];
    if (label >= kCifarClasses) {
      std::ostringstream msg;
      msg << path.string() << ": label " << int(label) << " at byte offset " << r * kCifarRecordBytes
          << " is not below " << kCifarClasses;
      throw Error(ErrorKind::kValidation, msg.str());
    }
  }

  std::vector<std::size_t> chosen(records);
  std::iota(chosen.begin(), chosen.end(), 0);
  if (subset_size != 0 && subset_size < records) {
    std::mt19937_64 rng(seed);
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(subset_size);
    std::sort(chosen.begin(), chosen.end());
  }

  LabeledBatch out{kCifarImageBytes, kCifarClasses, {}, {}};
  out.inputs.reserve(chosen.size() * kCifarImageBytes);
  for (std::size_t r : chosen) {
    const std::uint8_t* rec = &bytes[r * kCifarRecordBytes];
    out.labels.push_back(rec[0]);
    for (std::size_t i = 0; i < kCifarImageBytes; ++i) out.inputs.push_back(rec[1 + i] / 255.0);
  }
  return out;
}

void write_cifar_binary(const std::filesystem::path& path, std::span<const std::uint8_t> labels,
                        std::span<const std::uint8_t> pixels) {
  if (pixels.size() != labels.size() * kCifarImageBytes) {
    throw Error(ErrorKind::kShape, "write_cifar_binary: pixel buffer does not match label count");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    out.put(static_cast<char>(labels[r]));
    out.write(reinterpret_cast<const char*>(pixels.data() + r * kCifarImageBytes),
              static_cast<std::streamsize>(kCifarImageBytes));
  }
}

}  // namespace hyperadv::models
