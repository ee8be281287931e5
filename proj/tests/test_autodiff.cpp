#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hyperadv/autodiff.hpp"
#include "hyperadv/classifier.hpp"
#include "test_support.hpp"

using namespace hyperadv;
using namespace hyperadv::ad;
using testsupport::gradcheck;
using testsupport::VarSpec;

namespace {

constexpr double kGradTol = 1e-4;

std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m, std::size_t k,
                                 std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += a[i * k + p] * b[p * n + j];
  return out;
}

// Prototype matrix [K, d+1] of valid Lorentz points.
std::vector<double> prototype_buffer(std::mt19937_64& rng, std::size_t K, std::size_t d, double c) {
  std::vector<double> out;
  for (std::size_t k = 0; k < K; ++k) {
    const auto p = testsupport::random_lorentz(rng, d, c, 2.0);
    out.insert(out.end(), p.ambient().begin(), p.ambient().end());
  }
  return out;
}

}  // namespace

TEST(Primitives, ForwardExamples) {
  Tape tape;
  const Tensor v = tape.constant({2}, {3.0, 4.0});
  EXPECT_DOUBLE_EQ(inner_product(v, v).item(), 25.0);
  EXPECT_DOUBLE_EQ(l2_norm(v).item(), 5.0);
  const Tensor z = tape.constant({1, 3}, {0.0, 0.0, 0.0});
  const std::vector<std::size_t> label{0};
  EXPECT_NEAR(softmax_cross_entropy(z, label).item(), std::log(3.0), 1e-15);
}

TEST(Primitives, MatmulMatchesNaiveLoop) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto a = testsupport::normal_vector(rng, 12), b = testsupport::normal_vector(rng, 8);
    Tape tape;
    const Tensor r = matmul(tape.constant({3, 4}, a), tape.constant({4, 2}, b));
    const auto ref = naive_matmul(a, b, 3, 4, 2);
    ASSERT_EQ(r.shape(), (Shape{3, 2}));
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(r[i], ref[i], 1e-12);
  }
}

TEST(Primitives, ShapeErrorsNameThePrimitive) {
  Tape tape;
  const Tensor a = tape.constant({2, 3}, std::vector<double>(6, 1.0));
  try {
    matmul(a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
  EXPECT_THROW(add(a, tape.constant({4}, std::vector<double>(4, 1.0))), Error);
  EXPECT_THROW(inner_product(a, tape.constant({6}, std::vector<double>(6, 1.0))), Error);
}

TEST(Backward, LinearAndQuadraticForms) {
  Tape tape;
  const Tensor x = tape.variable({3}, {1.0, -2.0, 0.5});
  const Tensor c = tape.constant({3}, {4.0, 5.0, 6.0});
  const auto g = tape.backward(inner_product(x, c));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g.at(x)[i], c[i]);
  EXPECT_FALSE(g.contains(c));

  Tape t2;
  const Tensor y = t2.variable({2}, {3.0, 4.0});
  const Tensor n = l2_norm(y);
  const auto g2 = t2.backward(mul(n, n));
  EXPECT_NEAR(g2.at(y)[0], 6.0, 1e-14);
  EXPECT_NEAR(g2.at(y)[1], 8.0, 1e-14);
}

TEST(Backward, RejectsNonScalar) {
  Tape tape;
  const Tensor x = tape.variable({2}, {1.0, 2.0});
  try {
    tape.backward(scale(x, 2.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(Backward, FanOutAccumulates) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const auto xv = testsupport::normal_vector(rng, 4);
    Tape a;
    const Tensor x = a.variable({4}, xv);
    const auto ga = a.backward(sum(mul(tanh(x), x)));
    // Same function with the two uses as separate variables.
    Tape b;
    const Tensor x1 = b.variable({4}, xv), x2 = b.variable({4}, xv);
    const auto gb = b.backward(sum(mul(tanh(x1), x2)));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(ga.at(x)[i], gb.at(x1)[i] + gb.at(x2)[i], 1e-15);
  }
}

TEST(Backward, FreshMapPerCallAndDeterministic) {
  Tape tape;
  const Tensor x = tape.variable({2}, {0.3, -0.7});
  const Tensor y = sum(tanh(x));
  const auto g1 = tape.backward(y);
  const auto g2 = tape.backward(y);
  EXPECT_EQ(g1.at(x)[0], g2.at(x)[0]);
  EXPECT_EQ(g1.at(x)[1], g2.at(x)[1]);
}

TEST(Backward, CheckFiniteFlagsNaN) {
  Tape tape;
  tape.set_check_finite(true);
  const Tensor x = tape.variable({1}, {std::numeric_limits<double>::quiet_NaN()});
  EXPECT_THROW(tanh(x), Error);
}

TEST(StopGradient, IdentityForwardZeroBackward) {
  Tape tape;
  const Tensor x = tape.variable({2}, {1.5, -2.0});
  const Tensor s = stop_gradient(x);
  EXPECT_EQ(s[0], 1.5);
  EXPECT_EQ(s[1], -2.0);
  const auto g = tape.backward(inner_product(x, s));
  // Only the direct branch contributes: d<x, const>/dx = const.
  EXPECT_DOUBLE_EQ(g.at(x)[0], 1.5);
  EXPECT_DOUBLE_EQ(g.at(x)[1], -2.0);
  const auto g2 = tape.backward(sum(s));
  EXPECT_EQ(g2.at(x)[0], 0.0);
  EXPECT_EQ(g2.at(x)[1], 0.0);
}

TEST(Vjp, LinearMapGivesTransposeProduct) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const auto W = testsupport::normal_vector(rng, 12);  // [3 in, 4 out]
    const auto xv = testsupport::normal_vector(rng, 3), v = testsupport::normal_vector(rng, 4);
    Tape tape;
    const Tensor x = tape.variable({1, 3}, xv);
    const Tensor h = matmul(x, tape.constant({3, 4}, W));
    const Tensor g = vjp(h, v, x);
    for (std::size_t i = 0; i < 3; ++i) {
      double ref = 0.0;
      for (std::size_t j = 0; j < 4; ++j) ref += W[i * 4 + j] * v[j];
      EXPECT_NEAR(g[i], ref, 1e-12);
    }
    const Tensor zero = vjp(h, std::vector<double>(4, 0.0), x);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(zero[i], 0.0);
  }
  Tape tape;
  const Tensor x = tape.variable({2}, {1.0, 2.0});
  EXPECT_THROW(vjp(tanh(x), std::vector<double>(3, 1.0), x), Error);
}

TEST(Vjp, MatchesDirectionalDifferencesOnMlp) {
  std::mt19937_64 rng(4);
  models::ClassifierSpec spec;
  spec.input_dim = 6;
  spec.hidden = {10, 8};
  spec.feature_dim = 5;
  spec.num_classes = 3;
  const models::HyperbolicClassifier model(spec);
  const auto xv = testsupport::uniform_vector(rng, 6, 0.2, 0.8);
  const auto v = testsupport::normal_vector(rng, 5);
  Tape tape;
  const auto bound = model.bind(tape, false);
  const Tensor x = tape.variable({1, 6}, xv);
  const Tensor g = vjp(model.encode(bound, x), v, x);
  const auto hv = [&](const std::vector<double>& in) {
    const auto h = model.features(in);
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) s += h[i] * v[i];
    return s;
  };
  const double delta = 1e-5;
  for (int t = 0; t < 20; ++t) {
    auto e = testsupport::normal_vector(rng, 6);
    const double n = geometry::norm2(e);
    for (auto& x_ : e) x_ /= n;
    auto p = xv, m = xv;
    for (std::size_t i = 0; i < 6; ++i) {
      p[i] += delta * e[i];
      m[i] -= delta * e[i];
    }
    const double numeric = (hv(p) - hv(m)) / (2.0 * delta);
    const double analytic = geometry::dot(g.data(), e);
    EXPECT_NEAR(analytic, numeric, 1e-4 * std::max(1.0, std::abs(numeric)));
  }
}

// ---------------------------------------------------------------------------
// Finite-difference checks per primitive, 50 random instances each.

class Gradcheck : public ::testing::Test {
 protected:
  std::mt19937_64 rng{42};
  std::vector<double> rnd(std::size_t n) { return testsupport::normal_vector(rng, n); }
};

TEST_F(Gradcheck, Matmul) {
  for (int t = 0; t < 50; ++t) {
    EXPECT_LT(gradcheck([](Tape&, const auto& v) { return sum(tanh(matmul(v[0], v[1]))); },
                        {VarSpec{{3, 4}, rnd(12)}, VarSpec{{4, 2}, rnd(8)}}),
              kGradTol);
  }
}

TEST_F(Gradcheck, AddSubMulWithBroadcast) {
  for (int t = 0; t < 50; ++t) {
    EXPECT_LT(gradcheck([](Tape&, const auto& v) { return sum(tanh(add(v[0], v[1]))); },
                        {VarSpec{{3, 2}, rnd(6)}, VarSpec{{2}, rnd(2)}}),
              kGradTol);
    EXPECT_LT(gradcheck([](Tape&, const auto& v) { return sum(tanh(sub(v[0], v[1]))); },
                        {VarSpec{{4}, rnd(4)}, VarSpec{{4}, rnd(4)}}),
              kGradTol);
    EXPECT_LT(gradcheck([](Tape&, const auto& v) { return sum(mul(v[0], v[1])); },
                        {VarSpec{{5}, rnd(5)}, VarSpec{{5}, rnd(5)}}),
              kGradTol);
  }
}

TEST_F(Gradcheck, ScaleTanhSum) {
  for (int t = 0; t < 50; ++t) {
    EXPECT_LT(gradcheck([](Tape&, const auto& v) { return sum(tanh(scale(v[0], -1.7))); }, {VarSpec{{6}, rnd(6)}}),
              kGradTol);
  }
}

TEST_F(Gradcheck, Relu) {
  for (int t = 0; t < 50; ++t) {
    auto x = rnd(6);
    for (auto& e : x) e += e > 0 ? 0.05 : -0.05;  // keep away from the kink
    EXPECT_LT(gradcheck([](Tape&, const auto& v) { return inner_product(relu(v[0]), tanh(v[0])); }, {VarSpec{{6}, x}}),
              kGradTol);
  }
}

TEST_F(Gradcheck, L2NormAndInnerProduct) {
  for (int t = 0; t < 50; ++t) {
    EXPECT_LT(gradcheck([](Tape&, const auto& v) { return l2_norm(v[0]); }, {VarSpec{{5}, rnd(5)}}), kGradTol);
    EXPECT_LT(gradcheck([](Tape&, const auto& v) { return inner_product(v[0], tanh(v[1])); },
                        {VarSpec{{2, 3}, rnd(6)}, VarSpec{{2, 3}, rnd(6)}}),
              kGradTol);
  }
}

TEST_F(Gradcheck, SoftmaxCrossEntropy) {
  for (int t = 0; t < 50; ++t) {
    const std::vector<std::size_t> labels{t % 4u, (t + 1) % 4u, 2};
    EXPECT_LT(gradcheck([&](Tape&, const auto& v) { return softmax_cross_entropy(v[0], labels); },
                        {VarSpec{{3, 4}, rnd(12)}}),
              kGradTol);
    EXPECT_LT(gradcheck([&](Tape&, const auto& v) { return softmax_cross_entropy(v[0], labels, Reduction::kSum); },
                        {VarSpec{{3, 4}, rnd(12)}}),
              kGradTol);
  }
}

TEST_F(Gradcheck, PrototypeLogits) {
  for (int t = 0; t < 50; ++t) {
    const double c = std::array<double, 3>{0.5, 1.0, 2.0}[t % 3];
    const auto protos = prototype_buffer(rng, 3, 4, c);
    const auto weights = rnd(9);
    // The prototype gradient is ambient, so the check perturbs prototype
    // coordinates freely (off the manifold), as the training code sees it.
    EXPECT_LT(gradcheck(
                  [&](Tape& tape, const auto& v) {
                    const Tensor logits = prototype_logits(v[0], v[1], c, 1.3);
                    return inner_product(logits, tape.constant({3, 3}, weights));
                  },
                  {VarSpec{{3, 4}, rnd(12)}, VarSpec{{3, 5}, protos}}),
              kGradTol);
  }
}

TEST_F(Gradcheck, PrototypeLogitsNearOrigin) {
  // Small features exercise the series branch of the fused primitive.
  for (int t = 0; t < 50; ++t) {
    auto h = rnd(4);
    for (auto& e : h) e *= 1e-3;
    // Prototypes at unit distance, away from the cusp of d at h.
    std::vector<double> protos;
    for (int k = 0; k < 2; ++k) {
      auto dir = rnd(4);
      const double n = geometry::norm2(dir);
      for (auto& e : dir) e /= n;
      const auto p = geometry::exp_origin(dir, geometry::Curvature(1.0));
      protos.insert(protos.end(), p.ambient().begin(), p.ambient().end());
    }
    EXPECT_LT(gradcheck([&](Tape&, const auto& v) { return sum(prototype_logits(v[0], v[1], 1.0, 1.0)); },
                        {VarSpec{{1, 4}, h}, VarSpec{{2, 5}, protos}}),
              kGradTol);
  }
}

TEST_F(Gradcheck, FullToyModel) {
  models::ClassifierSpec spec;
  spec.input_dim = 5;
  spec.hidden = {7, 6};
  spec.feature_dim = 3;
  spec.num_classes = 4;
  for (int t = 0; t < 50; ++t) {
    spec.seed = t;
    spec.activation = t % 2 ? models::Activation::kRelu : models::Activation::kTanh;
    const models::HyperbolicClassifier model(spec);
    const std::vector<std::size_t> labels{static_cast<std::size_t>(t % 4), 1};
    const auto x = testsupport::uniform_vector(rng, 10, 0.0, 1.0);
    // Input gradient of the loss, through encoder and head.
    EXPECT_LT(gradcheck(
                  [&](Tape& tape, const auto& v) {
                    const auto bound = model.bind(tape, false);
                    return softmax_cross_entropy(model.logits(bound, model.encode(bound, v[0])), labels);
                  },
                  {VarSpec{{2, 5}, x}}),
              kGradTol)
        << "seed " << t;
  }
}

TEST(Determinism, IdenticalInputsGiveBitIdenticalGradients) {
  models::ClassifierSpec spec;
  spec.input_dim = 8;
  const models::HyperbolicClassifier model(spec);
  std::mt19937_64 rng(5);
  const auto xv = testsupport::uniform_vector(rng, 16, 0, 1);
  const std::vector<std::size_t> labels{1, 2};
  std::vector<double> first;
  for (int rep = 0; rep < 2; ++rep) {
    Tape tape;
    const auto bound = model.bind(tape, true);
    const Tensor x = tape.variable({2, 8}, xv);
    const auto g = tape.backward(softmax_cross_entropy(model.logits(bound, model.encode(bound, x)), labels));
    std::vector<double> all(g.at(x).data().begin(), g.at(x).data().end());
    all.insert(all.end(), g.at(bound.prototypes).data().begin(), g.at(bound.prototypes).data().end());
    if (rep == 0) first = all;
    else EXPECT_EQ(first, all);
  }
}
