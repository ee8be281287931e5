#include "hyperadv/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "hyperadv/attacks.hpp"

namespace hyperadv::models {

std::string to_string(Augmentation a) {
  switch (a) {
    case Augmentation::kNone: return "none";
    case Augmentation::kFgsm: return "fgsm";
    case Augmentation::kAgsm: return "agsm";
  }
  return "none";
}

Augmentation parse_augmentation(const std::string& name) {
  if (name == "none") return Augmentation::kNone;
  if (name == "fgsm") return Augmentation::kFgsm;
  if (name == "agsm") return Augmentation::kAgsm;
  throw Error(ErrorKind::kValidation, "unknown augmentation '" + name + "' (expected none, fgsm or agsm)");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw Error(ErrorKind::kValidation, "training: epochs must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(ErrorKind::kValidation, "training: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::kValidation, "training: momentum must lie in [0,1)");
  if (batch_size == 0) throw Error(ErrorKind::kValidation, "training: batch_size must be positive");
  if (!(augmentation_epsilon > 0.0)) throw Error(ErrorKind::kValidation, "training: augmentation epsilon must be positive");
  if (!(adversarial_fraction >= 0.0 && adversarial_fraction <= 1.0)) {
    throw Error(ErrorKind::kValidation, "training: adversarial_fraction must lie in [0,1]");
  }
}

double accuracy(const HyperbolicClassifier& model, const LabeledBatch& data) {
  if (data.size() == 0) throw Error(ErrorKind::kValidation, "accuracy: empty dataset");
  const auto pred = model.predict(data.inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

// Replaces the trailing share of the batch with attacked copies.
LabeledBatch augment(const HyperbolicClassifier& model, const LabeledBatch& batch, const TrainConfig& cfg) {
  const auto n_adv = static_cast<std::size_t>(std::llround(cfg.adversarial_fraction * static_cast<double>(batch.size())));
  if (n_adv == 0) return batch;
  const std::size_t start = batch.size() - n_adv;
  const LabeledBatch victims = batch.slice(start, n_adv);
  attacks::AttackConfig ac;
  ac.epsilon = cfg.augmentation_epsilon;
  ac.alpha = cfg.augmentation_epsilon;
  ac.seed = cfg.seed;
  const attacks::AttackResult adv = cfg.augmentation == Augmentation::kFgsm ? attacks::fgsm(model, victims, ac)
                                                                             : attacks::agsm(model, victims, ac);
  LabeledBatch out = batch;
  std::copy(adv.inputs.begin(), adv.inputs.end(), out.inputs.begin() + static_cast<std::ptrdiff_t>(start * batch.input_dim));
  return out;
}

}  // namespace

TrainResult train(HyperbolicClassifier model, const LabeledBatch& data, const TrainConfig& config) {
  config.validate();
  if (data.size() == 0) throw Error(ErrorKind::kValidation, "train: dataset is empty");
  if (data.input_dim != model.input_dim()) throw Error(ErrorKind::kShape, "train: dataset input_dim does not match model");

  const std::size_t d = model.feature_dim();
  std::vector<std::vector<double>> vel_w, vel_b;
  for (const auto& L : model.layers()) {
    vel_w.emplace_back(L.weight.size(), 0.0);
    vel_b.emplace_back(L.bias.size(), 0.0);
  }
  std::vector<std::vector<double>> vel_p(model.num_classes(), std::vector<double>(d + 1, 0.0));

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainLog log;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      LabeledBatch batch = data.gather(std::span<const std::size_t>(order).subspan(start, count));
      if (config.augmentation != Augmentation::kNone) batch = augment(model, batch, config);

      ad::Tape tape;
      const BoundModel bound = model.bind(tape, true);
      const ad::Tensor loss =
          ad::softmax_cross_entropy(model.logits(bound, model.encode(bound, batch.tensor())), batch.labels);
      if (!std::isfinite(loss.item())) {
        std::ostringstream msg;
        msg << "training loss became " << loss.item() << " at epoch " << epoch << ", batch starting at " << start;
        throw Error(ErrorKind::kDivergence, msg.str());
      }
      loss_sum += loss.item() * static_cast<double>(count);
      seen += count;
      const ad::GradientMap grads = tape.backward(loss);

      auto& layers = model.mutable_layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto gw = grads.at(bound.weights[l]).data();
        const auto gb = grads.at(bound.biases[l]).data();
        for (std::size_t i = 0; i < gw.size(); ++i) {
          vel_w[l][i] = config.momentum * vel_w[l][i] + gw[i];
          layers[l].weight[i] -= config.lr * vel_w[l][i];
        }
        for (std::size_t i = 0; i < gb.size(); ++i) {
          vel_b[l][i] = config.momentum * vel_b[l][i] + gb[i];
          layers[l].bias[i] -= config.lr * vel_b[l][i];
        }
      }

      // Riemannian gradient: flip the time component (inverse Minkowski
      // metric), project to the tangent space, then retract with exp.
      const auto gp = grads.at(bound.prototypes).data();
      std::vector<geometry::LorentzPoint> updated;
      updated.reserve(model.num_classes());
      for (std::size_t k = 0; k < model.num_classes(); ++k) {
        const auto& p = model.prototypes()[k];
        std::vector<double> rg(gp.begin() + static_cast<std::ptrdiff_t>(k * (d + 1)),
                               gp.begin() + static_cast<std::ptrdiff_t>((k + 1) * (d + 1)));
        rg[0] = -rg[0];
        // Momentum lives in the tangent space of the current point.
        const auto carried = geometry::proj_tangent(p, vel_p[k]).components();
        const auto riem = geometry::proj_tangent(p, rg).components();
        std::vector<double> step(d + 1);
        for (std::size_t i = 0; i <= d; ++i) {
          vel_p[k][i] = config.momentum * carried[i] + riem[i];
          step[i] = -config.lr * vel_p[k][i];
        }
        updated.push_back(geometry::exp_map(p, geometry::TangentVector::at(p, step)));
      }
      model.set_prototypes(std::move(updated));
    }
    log.epochs.push_back(EpochRecord{epoch, loss_sum / static_cast<double>(seen), accuracy(model, data)});
  }
  log.final_loss = log.epochs.back().mean_loss;
  return TrainResult{std::move(model), std::move(log)};
}

}  // namespace hyperadv::models
