#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hyperadv/classifier.hpp"
#include "hyperadv/data.hpp"
#include "hyperadv/training.hpp"
#include "test_support.hpp"

using namespace hyperadv;
using namespace hyperadv::models;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "hyperadv_test_models";
  fs::create_directories(dir);
  return dir / name;
}

ClassifierSpec small_spec(std::size_t input_dim = 6, std::size_t classes = 3) {
  ClassifierSpec s;
  s.input_dim = input_dim;
  s.hidden = {12, 10};
  s.feature_dim = 4;
  s.num_classes = classes;
  return s;
}

LabeledBatch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t dim, std::size_t classes) {
  LabeledBatch b;
  b.input_dim = dim;
  b.num_classes = classes;
  b.inputs = testsupport::uniform_vector(rng, n * dim, 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(i % classes);
  return b;
}

}  // namespace

TEST(Encoder, ZeroWeightsGiveZeroFeatures) {
  HyperbolicClassifier m(small_spec());
  for (auto& L : m.mutable_layers()) {
    std::fill(L.weight.begin(), L.weight.end(), 0.0);
    std::fill(L.bias.begin(), L.bias.end(), 0.0);
  }
  std::mt19937_64 rng(1);
  for (double h : m.features(testsupport::uniform_vector(rng, 24, 0, 1))) EXPECT_EQ(h, 0.0);
}

TEST(Encoder, BatchIndependence) {
  const HyperbolicClassifier m(small_spec());
  std::mt19937_64 rng(2);
  const auto x = testsupport::uniform_vector(rng, 8 * 6, 0, 1);
  const auto all = m.features(x);
  const auto all_logits = m.logits(x);
  for (std::size_t i = 0; i < 8; ++i) {
    const auto one = m.features(std::span<const double>(x).subspan(i * 6, 6));
    const auto one_logits = m.logits(std::span<const double>(x).subspan(i * 6, 6));
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(one[k], all[i * 4 + k]);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(one_logits[k], all_logits[i * 3 + k]);
  }
}

TEST(Encoder, RejectsWrongInputWidth) {
  const HyperbolicClassifier m(small_spec());
  EXPECT_THROW(m.features(std::vector<double>(7, 0.5)), Error);
}

TEST(Head, FeatureAtPrototypePreimageScoresZero) {
  HyperbolicClassifier m(small_spec());
  const auto h = geometry::log_origin(m.prototypes()[1]);
  const auto logits = m.logits_from_features(h);
  EXPECT_NEAR(logits[1], 0.0, 1e-7);
  EXPECT_EQ(HyperbolicClassifier::argmax_rows(logits, 3)[0], 1u);
}

TEST(Head, EquidistantPrototypesTieToLowestIndex) {
  const geometry::Curvature c(1.0);
  std::vector<geometry::LorentzPoint> protos{geometry::exp_origin(std::vector<double>{1.0, 0.0}, c),
                                             geometry::exp_origin(std::vector<double>{-1.0, 0.0}, c)};
  DenseLayer L{1, 2, {0.0, 0.0}, {0.0, 0.0}};
  const HyperbolicClassifier m({L}, protos, c, 1.0, Activation::kTanh);
  const auto logits = m.logits(std::vector<double>{0.5});
  EXPECT_EQ(logits[0], logits[1]);
  EXPECT_EQ(m.predict(std::vector<double>{0.5})[0], 0u);
}

TEST(Head, MatchesGeometryRecomputation) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    ClassifierSpec s = small_spec();
    s.seed = t;
    s.curvature = std::array<double, 3>{0.5, 1.0, 2.0}[t % 3];
    s.logit_scale = 0.5 + t;
    const HyperbolicClassifier m(s);
    const auto h = testsupport::normal_vector(rng, 5 * 4);
    const auto logits = m.logits_from_features(h);
    for (std::size_t b = 0; b < 5; ++b) {
      const auto p = geometry::exp_origin(std::span<const double>(h).subspan(b * 4, 4), m.curvature());
      for (std::size_t k = 0; k < 3; ++k) {
        const double ref = -s.logit_scale * geometry::lorentz_distance(p, m.prototypes()[k]);
        EXPECT_NEAR(logits[b * 3 + k], ref, 1e-10 * std::max(1.0, std::abs(ref)));
      }
    }
  }
}

TEST(Head, ArgmaxInvariantToLogitScale) {
  std::mt19937_64 rng(4);
  HyperbolicClassifier m(small_spec());
  const auto x = testsupport::uniform_vector(rng, 30 * 6, 0, 1);
  m.set_logit_scale(1.0);
  const auto ref = m.predict(x);
  for (double s : {0.1, 10.0}) {
    m.set_logit_scale(s);
    EXPECT_EQ(m.predict(x), ref);
  }
  EXPECT_THROW(m.set_logit_scale(0.0), Error);
}

TEST(Hierarchy, ClassCountAndDeterminism) {
  HierarchySpec s;
  s.branching = 2;
  s.depth = 3;
  s.samples_per_class = 5;
  EXPECT_EQ(s.num_classes(), 8u);
  const auto a = gen_hierarchy(s), b = gen_hierarchy(s);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.size(), 40u);
  EXPECT_NO_THROW(a.validate());
  s.seed = 1;
  EXPECT_NE(gen_hierarchy(s).inputs, a.inputs);
}

TEST(Hierarchy, NoiseFreeSamplesCoincide) {
  HierarchySpec s;
  s.noise_scale = 0.0;
  s.samples_per_class = 4;
  const auto d = gen_hierarchy(s);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (d.labels[i] != d.labels[j]) continue;
      const auto ri = d.row(i), rj = d.row(j);
      EXPECT_TRUE(std::equal(ri.begin(), ri.end(), rj.begin()));
    }
  }
}

TEST(Hierarchy, SiblingsCloserThanCousins) {
  double sib = 0.0, cross = 0.0;
  int ns = 0, nc = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    HierarchySpec s;
    s.branching = 2;
    s.depth = 2;
    s.seed = seed;
    const auto means = hierarchy_means(s);
    ASSERT_EQ(means.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = i + 1; j < 4; ++j) {
        std::vector<double> d(means[i].size());
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = means[i][k] - means[j][k];
        const double dist = geometry::norm2(d);
        if (i / 2 == j / 2) {
          sib += dist;
          ++ns;
        } else {
          cross += dist;
          ++nc;
        }
      }
    }
  }
  EXPECT_LT(sib / ns, cross / nc);
}

TEST(Hierarchy, ValidationErrors) {
  HierarchySpec s;
  s.branching = 0;
  EXPECT_THROW(s.validate(), Error);
  s = HierarchySpec{};
  s.noise_scale = -1.0;
  EXPECT_THROW(s.validate(), Error);
}

TEST(Split, DisjointAndDeterministic) {
  HierarchySpec s;
  s.samples_per_class = 10;
  const auto d = gen_hierarchy(s);
  const auto [tr, te] = split(d, 0.3, 5);
  EXPECT_EQ(tr.size() + te.size(), d.size());
  EXPECT_EQ(te.size(), 27u);
  const auto [tr2, te2] = split(d, 0.3, 5);
  EXPECT_EQ(te.inputs, te2.inputs);
}

TEST(Cifar, ExactRecordCountAndRoundTrip) {
  std::mt19937_64 rng(5);
  std::vector<std::uint8_t> labels{3, 7, 0}, pixels(3 * kCifarImageBytes);
  for (auto& p : pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);
  const fs::path path = temp_path("three.bin");
  write_cifar_binary(path, labels, pixels);
  EXPECT_EQ(fs::file_size(path), 3 * kCifarRecordBytes);
  const auto d = load_cifar_binary(path, 0, 0);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.input_dim, kCifarImageBytes);
  EXPECT_EQ(d.num_classes, 10u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(d.labels[i], labels[i]);
    for (std::size_t k = 0; k < kCifarImageBytes; ++k) {
      EXPECT_EQ(d.inputs[i * kCifarImageBytes + k], pixels[i * kCifarImageBytes + k] / 255.0);
    }
  }
  const auto sub = load_cifar_binary(path, 2, 9);
  EXPECT_EQ(sub.size(), 2u);
  EXPECT_EQ(load_cifar_binary(path, 2, 9).inputs, sub.inputs);
}

TEST(Cifar, BadLabelAndTruncation) {
  std::vector<std::uint8_t> labels{1, 255}, pixels(2 * kCifarImageBytes, 10);
  const fs::path bad = temp_path("bad_label.bin");
  write_cifar_binary(bad, labels, pixels);
  try {
    load_cifar_binary(bad, 0, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
    EXPECT_NE(std::string(e.what()).find(std::to_string(kCifarRecordBytes)), std::string::npos) << e.what();
  }
  const fs::path trunc = temp_path("truncated.bin");
  {
    std::ofstream out(trunc, std::ios::binary);
    std::vector<char> bytes(kCifarRecordBytes + 100, 1);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_cifar_binary(trunc, 0, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
    EXPECT_NE(std::string(e.what()).find(std::to_string(kCifarRecordBytes)), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_cifar_binary(temp_path("missing.bin"), 0, 0), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
  ClassifierSpec s = small_spec();
  s.curvature = 0.7;
  s.logit_scale = 2.5;
  s.activation = Activation::kRelu;
  const HyperbolicClassifier m(s);
  const fs::path path = temp_path("model.bin");
  save_checkpoint(m, path);
  const HyperbolicClassifier back = load_checkpoint(path);
  EXPECT_EQ(back.curvature().value(), 0.7);
  EXPECT_EQ(back.logit_scale(), 2.5);
  EXPECT_EQ(back.activation(), Activation::kRelu);
  ASSERT_EQ(back.layers().size(), m.layers().size());
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    EXPECT_EQ(back.layers()[l].weight, m.layers()[l].weight);
    EXPECT_EQ(back.layers()[l].bias, m.layers()[l].bias);
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(back.prototypes()[k].ambient(), m.prototypes()[k].ambient());
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const fs::path path = temp_path("corrupt.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT";
  }
  EXPECT_THROW(load_checkpoint(path), Error);
  const HyperbolicClassifier m(small_spec());
  const fs::path good = temp_path("good.bin");
  save_checkpoint(m, good);
  fs::resize_file(good, fs::file_size(good) - 8);
  EXPECT_THROW(load_checkpoint(good), Error);
}

TEST(Training, ZeroLearningRateLeavesParametersUnchanged) {
  HierarchySpec hs;
  hs.samples_per_class = 10;
  hs.input_dim = 6;
  const auto data = gen_hierarchy(hs);
  const HyperbolicClassifier m(small_spec(6, 9));
  TrainConfig tc;
  tc.epochs = 1;
  tc.lr = 0.0;
  const auto res = train(m, data, tc);
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    EXPECT_EQ(res.model.layers()[l].weight, m.layers()[l].weight);
    EXPECT_EQ(res.model.layers()[l].bias, m.layers()[l].bias);
  }
  for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(res.model.prototypes()[k].ambient(), m.prototypes()[k].ambient());
}

TEST(Training, SeparableTwoClassReachesHighAccuracy) {
  HierarchySpec hs;
  hs.branching = 2;
  hs.depth = 1;
  hs.input_dim = 4;
  hs.class_separation = 4.0;
  hs.noise_scale = 0.2;
  hs.samples_per_class = 50;
  const auto data = gen_hierarchy(hs);
  TrainConfig tc;
  tc.epochs = 50;
  const auto res = train(HyperbolicClassifier(small_spec(4, 2)), data, tc);
  EXPECT_GE(res.log.epochs.back().train_accuracy, 0.95);
  EXPECT_EQ(res.log.epochs.size(), 50u);
}

TEST(Training, DeterministicAndPrototypesStayOnManifold) {
  HierarchySpec hs;
  hs.samples_per_class = 15;
  hs.input_dim = 6;
  const auto data = gen_hierarchy(hs);
  TrainConfig tc;
  tc.epochs = 5;
  tc.seed = 4;
  tc.augmentation = Augmentation::kAgsm;
  ClassifierSpec s = small_spec(6, 9);
  s.curvature = 2.0;
  const auto a = train(HyperbolicClassifier(s), data, tc);
  const auto b = train(HyperbolicClassifier(s), data, tc);
  EXPECT_EQ(a.log.final_loss, b.log.final_loss);
  for (const auto& p : a.model.prototypes()) {
    EXPECT_NEAR(geometry::lorentz_inner(p.ambient(), p.ambient()), -0.5, 1e-8 * std::max(1.0, p.time() * p.time()));
  }
}

TEST(Training, DivergenceIsReported) {
  HierarchySpec hs;
  hs.samples_per_class = 5;
  hs.input_dim = 6;
  const auto data = gen_hierarchy(hs);
  HyperbolicClassifier m(small_spec(6, 9));
  m.mutable_layers()[0].weight[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 1;
  try {
    train(m, data, tc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDivergence);
  }
}

TEST(Training, ConfigValidation) {
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), Error);
  tc = TrainConfig{};
  tc.momentum = 1.0;
  EXPECT_THROW(tc.validate(), Error);
  EXPECT_THROW(parse_augmentation("mixup"), Error);
}
