#include "hyperadv/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"

namespace hyperadv::models {

using geometry::Curvature;
using geometry::LorentzPoint;

void ClassifierSpec::validate() const {
  if (input_dim == 0 || feature_dim == 0) throw Error(ErrorKind::kValidation, "model: dimensions must be positive");
  if (num_classes < 2) throw Error(ErrorKind::kValidation, "model: need at least two classes");
  for (std::size_t h : hidden) {
    if (h == 0) throw Error(ErrorKind::kValidation, "model: hidden widths must be positive");
  }
  if (!(curvature > 0.0) || !std::isfinite(curvature)) throw Error(ErrorKind::kValidation, "model: curvature must be positive");
  if (!(logit_scale > 0.0) || !std::isfinite(logit_scale)) throw Error(ErrorKind::kValidation, "model: logit_scale must be positive");
  if (!(prototype_radius > 0.0)) throw Error(ErrorKind::kValidation, "model: prototype_radius must be positive");
}

HyperbolicClassifier::HyperbolicClassifier(const ClassifierSpec& spec)
    : curvature_(spec.curvature), logit_scale_(spec.logit_scale), activation_(spec.activation) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> sizes{spec.input_dim};
  sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
  sizes.push_back(spec.feature_dim);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseLayer layer{sizes[l], sizes[l + 1], {}, std::vector<double>(sizes[l + 1], 0.0)};
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weight.resize(layer.in * layer.out);
    for (double& w : layer.weight) w = dist(rng);
    layers_.push_back(std::move(layer));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    std::vector<double> dir(spec.feature_dim);
    double n2 = 0.0;
    for (double& e : dir) {
      e = normal(rng);
      n2 += e * e;
    }
    const double s = spec.prototype_radius / std::sqrt(n2);
    for (double& e : dir) e *= s;
    prototypes_.push_back(geometry::exp_origin(dir, curvature_));
  }
}

HyperbolicClassifier::HyperbolicClassifier(std::vector<DenseLayer> layers, std::vector<LorentzPoint> prototypes,
                                           Curvature curvature, double logit_scale, Activation activation)
    : layers_(std::move(layers)), curvature_(curvature), logit_scale_(logit_scale), activation_(activation) {
  if (layers_.empty()) throw Error(ErrorKind::kValidation, "model: encoder has no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    if (L.weight.size() != L.in * L.out || L.bias.size() != L.out) {
      throw Error(ErrorKind::kShape, "model: layer " + std::to_string(l) + " buffers do not match its shape");
    }
    if (l > 0 && layers_[l - 1].out != L.in) {
      throw Error(ErrorKind::kShape, "model: layer " + std::to_string(l) + " input does not match previous output");
    }
  }
  if (!(logit_scale > 0.0)) throw Error(ErrorKind::kValidation, "model: logit_scale must be positive");
  set_prototypes(std::move(prototypes));
}

void HyperbolicClassifier::set_prototypes(std::vector<LorentzPoint> prototypes) {
  if (prototypes.size() < 2) throw Error(ErrorKind::kValidation, "model: need at least two prototypes");
  for (const auto& p : prototypes) {
    if (p.dim() != feature_dim()) {
      throw Error(ErrorKind::kDimensionMismatch, "model: prototype dimension does not match encoder output");
    }
    if (!(p.curvature() == curvature_)) throw Error(ErrorKind::kCurvatureMismatch, "model: prototype curvature");
  }
  prototypes_ = std::move(prototypes);
}

void HyperbolicClassifier::set_logit_scale(double s) {
  if (!(s > 0.0)) throw Error(ErrorKind::kValidation, "model: logit_scale must be positive");
  logit_scale_ = s;
}

BoundModel HyperbolicClassifier::bind(ad::Tape& tape, bool trainable) const {
  BoundModel bound;
  auto leaf = [&](ad::Shape shape, std::vector<double> data) {
    return trainable ? tape.variable(std::move(shape), std::move(data)) : tape.constant(std::move(shape), std::move(data));
  };
  for (const auto& L : layers_) {
    bound.weights.push_back(leaf({L.in, L.out}, L.weight));
    bound.biases.push_back(leaf({L.out}, L.bias));
  }
  std::vector<double> protos;
  protos.reserve(prototypes_.size() * (feature_dim() + 1));
  for (const auto& p : prototypes_) protos.insert(protos.end(), p.ambient().begin(), p.ambient().end());
  bound.prototypes = leaf({prototypes_.size(), feature_dim() + 1}, std::move(protos));
  return bound;
}

ad::Tensor HyperbolicClassifier::encode(const BoundModel& bound, const ad::Tensor& inputs) const {
  if (inputs.rank() != 2 || inputs.shape()[1] != input_dim()) {
    throw Error(ErrorKind::kShape, "encode: expected inputs [B, " + std::to_string(input_dim()) + "]");
  }
  ad::Tensor x = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = ad::add(ad::matmul(x, bound.weights[l]), bound.biases[l]);
    if (l + 1 < layers_.size()) x = activation_ == Activation::kTanh ? ad::tanh(x) : ad::relu(x);
  }
  return x;
}

ad::Tensor HyperbolicClassifier::logits(const BoundModel& bound, const ad::Tensor& features) const {
  return ad::prototype_logits(features, bound.prototypes, curvature_.value(), logit_scale_);
}

std::vector<double> HyperbolicClassifier::features(std::span<const double> inputs) const {
  if (inputs.size() % input_dim() != 0) throw Error(ErrorKind::kShape, "features: input size not a multiple of input_dim");
  ad::Tape tape;
  const BoundModel bound = bind(tape, false);
  const ad::Tensor x = ad::Tensor::constant({inputs.size() / input_dim(), input_dim()},
                                            std::vector<double>(inputs.begin(), inputs.end()));
  const ad::Tensor h = encode(bound, x);
  return {h.data().begin(), h.data().end()};
}

std::vector<double> HyperbolicClassifier::logits_from_features(std::span<const double> features) const {
  if (features.size() % feature_dim() != 0) throw Error(ErrorKind::kShape, "logits: feature size not a multiple of feature_dim");
  ad::Tape tape;
  const BoundModel bound = bind(tape, false);
  const ad::Tensor h = ad::Tensor::constant({features.size() / feature_dim(), feature_dim()},
                                            std::vector<double>(features.begin(), features.end()));
  const ad::Tensor z = logits(bound, h);
  return {z.data().begin(), z.data().end()};
}

std::vector<double> HyperbolicClassifier::logits(std::span<const double> inputs) const {
  return logits_from_features(features(inputs));
}

std::vector<std::size_t> HyperbolicClassifier::argmax_rows(std::span<const double> logits, std::size_t cols) {
  std::vector<std::size_t> out(logits.size() / cols);
  for (std::size_t b = 0; b < out.size(); ++b) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cols; ++j) {
      if (logits[b * cols + j] > logits[b * cols + best]) best = j;
    }
    out[b] = best;
  }
  return out;
}

std::vector<std::size_t> HyperbolicClassifier::predict(std::span<const double> inputs) const {
  return argmax_rows(logits(inputs), num_classes());
}

std::size_t HyperbolicClassifier::num_parameters() const {
  std::size_t n = prototypes_.size() * (feature_dim() + 1);
  for (const auto& L : layers_) n += L.weight.size() + L.bias.size();
  return n;
}

std::vector<double> softmax_rows(std::span<const double> logits, std::size_t cols) {
  std::vector<double> out(logits.size());
  for (std::size_t b = 0; b < logits.size() / cols; ++b) {
    const double* row = &logits[b * cols];
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < cols; ++j) out[b * cols + j] = std::exp(row[j] - mx) / z;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint buffers are written little-endian");

constexpr char kMagic[8] = {'H', 'A', 'D', 'V', 'C', 'K', 'P', 'T'};

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& in, std::size_t n, const std::filesystem::path& path) {
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw Error(ErrorKind::kFormat, path.string() + ": truncated parameter buffer");
  return v;
}

}  // namespace

void save_checkpoint(const HyperbolicClassifier& model, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["format"] = "hyperadv-checkpoint";
  header["format_version"] = kCheckpointVersion;
  header["curvature"] = model.curvature().value();
  header["logit_scale"] = model.logit_scale();
  header["activation"] = model.activation() == Activation::kTanh ? "tanh" : "relu";
  header["num_classes"] = model.num_classes();
  header["feature_dim"] = model.feature_dim();
  nlohmann::ordered_json buffers = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& L = model.layers()[l];
    buffers.push_back({{"name", "layer" + std::to_string(l) + ".weight"}, {"shape", {L.in, L.out}}});
    buffers.push_back({{"name", "layer" + std::to_string(l) + ".bias"}, {"shape", {L.out}}});
  }
  buffers.push_back({{"name", "prototypes"}, {"shape", {model.num_classes(), model.feature_dim() + 1}}});
  header["buffers"] = buffers;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& L : model.layers()) {
    write_doubles(out, L.weight);
    write_doubles(out, L.bias);
  }
  for (const auto& p : model.prototypes()) write_doubles(out, p.ambient());
  if (!out) throw Error(ErrorKind::kIo, "failed writing checkpoint " + path.string());
}

HyperbolicClassifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::kFormat, path.string() + ": not a checkpoint file");
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kCheckpointVersion) {
    throw Error(ErrorKind::kFormat, path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 24)) throw Error(ErrorKind::kFormat, path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(ErrorKind::kFormat, path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": malformed header: " + e.what());
  }
  const Curvature c(header.at("curvature").get<double>());
  const double logit_scale = header.at("logit_scale").get<double>();
  const Activation act = header.at("activation").get<std::string>() == "relu" ? Activation::kRelu : Activation::kTanh;
  const auto& buffers = header.at("buffers");
  if (buffers.size() < 3 || buffers.size() % 2 != 1) throw Error(ErrorKind::kFormat, path.string() + ": bad buffer list");

  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < buffers.size(); i += 2) {
    const auto wshape = buffers[i].at("shape").get<std::vector<std::size_t>>();
    const auto bshape = buffers[i + 1].at("shape").get<std::vector<std::size_t>>();
    if (wshape.size() != 2 || bshape.size() != 1 || bshape[0] != wshape[1]) {
      throw Error(ErrorKind::kFormat, path.string() + ": inconsistent layer shapes");
    }
    DenseLayer L{wshape[0], wshape[1], {}, {}};
    L.weight = read_doubles(in, L.in * L.out, path);
    L.bias = read_doubles(in, L.out, path);
    layers.push_back(std::move(L));
  }
  const auto pshape = buffers.back().at("shape").get<std::vector<std::size_t>>();
  if (pshape.size() != 2) throw Error(ErrorKind::kFormat, path.string() + ": bad prototype shape");
  const auto flat = read_doubles(in, pshape[0] * pshape[1], path);
  std::vector<LorentzPoint> protos;
  for (std::size_t k = 0; k < pshape[0]; ++k) {
    protos.push_back(LorentzPoint::from_ambient(std::span<const double>(flat).subspan(k * pshape[1], pshape[1]), c));
  }
  return HyperbolicClassifier(std::move(layers), std::move(protos), c, logit_scale, act);
}

}  // namespace hyperadv::models
