#include "hyperadv/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hyperadv::ad {
namespace {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
  out << ']';
  return out.str();
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw Error(ErrorKind::kShape, std::string(op) + ": " + detail);
}

// Finds the tape that a new node belongs to, or nullptr when no input
// requires gradients.
Tape* active_tape(std::initializer_list<const Tensor*> inputs, const char* op) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->requires_grad()) continue;
    if (tape != nullptr && t->tape() != tape) {
      throw Error(ErrorKind::kContract, std::string(op) + ": inputs recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

Tensor emit(Tape* tape, const char* op, Shape shape, std::vector<double> data,
            std::vector<Tensor> inputs, BackwardFn fn) {
  if (tape == nullptr) return Tensor::constant(std::move(shape), std::move(data));
  return tape->record(op, std::move(shape), std::move(data), std::move(inputs), std::move(fn));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) shape_error(op, "undefined tensor");
}

std::size_t rows_of(const Tensor& t) { return t.rank() == 2 ? t.shape()[0] : 1; }
std::size_t cols_of(const Tensor& t) { return t.rank() == 2 ? t.shape()[1] : t.size(); }

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  if (numel(shape) != data.size()) {
    shape_error("constant", "shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " elements");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<const std::vector<double>>(std::move(data));
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw Error(ErrorKind::kContract, "item: tensor has " + std::to_string(size()) + " elements");
  return (*data_)[0];
}

const Tensor& GradientMap::at(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (t.tape() != tape_ || it == grads_.end()) {
    throw Error(ErrorKind::kContract, "GradientMap: no gradient for tensor " + std::to_string(t.id()));
  }
  return it->second;
}

Tensor Tape::make(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    shape_error("tape", "shape " + shape_str(shape) + " does not match " +
                            std::to_string(data.size()) + " elements");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<const std::vector<double>>(std::move(data));
  t.id_ = next_id_++;
  t.requires_grad_ = requires_grad;
  t.tape_ = this;
  return t;
}

Tensor Tape::variable(Shape shape, std::vector<double> data) {
  Tensor t = make(std::move(shape), std::move(data), true);
  // Leaves are nodes without inputs so backward can report zero gradients
  // for variables the output does not depend on.
  nodes_.push_back(Node{"variable", t.id(), t.shape(), {}, nullptr});
  return t;
}

Tensor Tape::constant(Shape shape, std::vector<double> data) {
  return make(std::move(shape), std::move(data), false);
}

Tensor Tape::record(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                    BackwardFn backward) {
  if (check_finite_) {
    for (double v : data) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::kNumericalDegeneracy, std::string(op) + ": non-finite value in forward pass");
      }
    }
  }
  Tensor t = make(std::move(shape), std::move(data), true);
  nodes_.push_back(Node{op, t.id(), t.shape(), std::move(inputs), std::move(backward)});
  return t;
}

GradientMap Tape::backward(const Tensor& output) const {
  if (!output.defined() || output.size() != 1) {
    throw Error(ErrorKind::kContract, "backward: output must be a scalar tensor");
  }
  GradientMap result;
  result.tape_ = this;
  // An output that does not depend on this tape still yields zeros for
  // every variable.
  std::unordered_map<TensorId, std::vector<double>> grads;
  if (output.requires_grad() && output.tape() == this) grads[output.id()] = {1.0};
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto found = grads.find(it->output);
    if (!it->backward) {
      // Variable leaf.
      std::vector<double> g = found != grads.end() ? std::move(found->second)
                                                   : std::vector<double>(numel(it->output_shape), 0.0);
      Tensor gt = Tensor::constant(it->output_shape, std::move(g));
      result.grads_.emplace(it->output, std::move(gt));
      continue;
    }
    if (found == grads.end()) continue;
    const std::vector<double> grad_out = std::move(found->second);
    result.grads_.emplace(it->output, Tensor::constant(it->output_shape, grad_out));
    InputGrads contributions = it->backward(grad_out);
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      const Tensor& in = it->inputs[i];
      if (!in.requires_grad() || i >= contributions.size() || contributions[i].empty()) continue;
      auto& acc = grads[in.id()];
      if (acc.empty()) {
        acc = std::move(contributions[i]);
      } else {
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += contributions[i][k];
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    shape_error("matmul", "incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  }
  Tape* tape = active_tape({&a, &b}, "matmul");
  return emit(tape, "matmul", {m, n}, std::move(out), {a, b},
              [a, b, m, k, n](std::span<const double> g) {
                InputGrads res(2);
                const auto A = a.data();
                const auto B = b.data();
                if (a.requires_grad()) {
                  res[0].assign(m * k, 0.0);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
                      res[0][i * k + p] = acc;
                    }
                }
                if (b.requires_grad()) {
                  res[1].assign(k * n, 0.0);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      const double av = A[i * k + p];
                      for (std::size_t j = 0; j < n; ++j) res[1][p * n + j] += av * g[i * n + j];
                    }
                }
                return res;
              });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  const bool same = a.shape() == b.shape();
  const bool row_broadcast = a.rank() == 2 && b.rank() == 1 && b.shape()[0] == a.shape()[1];
  if (!same && !row_broadcast) {
    shape_error("add", "incompatible shapes " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
  }
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(A.begin(), A.end());
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[same ? i : i % n];
  Tape* tape = active_tape({&a, &b}, "add");
  return emit(tape, "add", a.shape(), std::move(out), {a, b},
              [a, b, same, n](std::span<const double> g) {
                InputGrads res(2);
                if (a.requires_grad()) res[0].assign(g.begin(), g.end());
                if (b.requires_grad()) {
                  if (same) {
                    res[1].assign(g.begin(), g.end());
                  } else {
                    res[1].assign(n, 0.0);
                    for (std::size_t i = 0; i < g.size(); ++i) res[1][i % n] += g[i];
                  }
                }
                return res;
              });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  if (a.shape() != b.shape()) {
    shape_error("mul", "incompatible shapes " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tape* tape = active_tape({&a, &b}, "mul");
  return emit(tape, "mul", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    InputGrads res(2);
    if (a.requires_grad()) {
      res[0].resize(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) res[0][i] = g[i] * b[i];
    }
    if (b.requires_grad()) {
      res[1].resize(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) res[1][i] = g[i] * a[i];
    }
    return res;
  });
}

Tensor scale(const Tensor& a, double s) {
  require_defined(a, "scale");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= s;
  Tape* tape = active_tape({&a}, "scale");
  return emit(tape, "scale", a.shape(), std::move(out), {a}, [s](std::span<const double> g) {
    InputGrads res(1);
    res[0].resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) res[0][i] = s * g[i];
    return res;
  });
}

Tensor tanh(const Tensor& a) {
  require_defined(a, "tanh");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
  Tape* tape = active_tape({&a}, "tanh");
  if (tape == nullptr) return Tensor::constant(a.shape(), std::move(out));
  auto saved = std::make_shared<const std::vector<double>>(out);
  return tape->record("tanh", a.shape(), std::move(out), {a}, [saved](std::span<const double> g) {
    InputGrads res(1);
    res[0].resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) res[0][i] = g[i] * (1.0 - (*saved)[i] * (*saved)[i]);
    return res;
  });
}

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  Tape* tape = active_tape({&a}, "relu");
  return emit(tape, "relu", a.shape(), std::move(out), {a}, [a](std::span<const double> g) {
    InputGrads res(1);
    res[0].resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) res[0][i] = a[i] > 0.0 ? g[i] : 0.0;
    return res;
  });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tape* tape = active_tape({&a}, "sum");
  const std::size_t n = a.size();
  return emit(tape, "sum", {}, {acc}, {a}, [n](std::span<const double> g) {
    return InputGrads{std::vector<double>(n, g[0])};
  });
}

Tensor l2_norm(const Tensor& a) {
  require_defined(a, "l2_norm");
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  const double norm = std::sqrt(acc);
  Tape* tape = active_tape({&a}, "l2_norm");
  return emit(tape, "l2_norm", {}, {norm}, {a}, [a, norm](std::span<const double> g) {
    InputGrads res(1);
    res[0].assign(a.size(), 0.0);
    // Subgradient 0 at the origin.
    if (norm > 0.0) {
      for (std::size_t i = 0; i < a.size(); ++i) res[0][i] = g[0] * a[i] / norm;
    }
    return res;
  });
}

Tensor inner_product(const Tensor& a, const Tensor& b) {
  require_defined(a, "inner_product");
  require_defined(b, "inner_product");
  if (a.shape() != b.shape()) {
    shape_error("inner_product", "incompatible shapes " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  Tape* tape = active_tape({&a, &b}, "inner_product");
  return emit(tape, "inner_product", {}, {acc}, {a, b}, [a, b](std::span<const double> g) {
    InputGrads res(2);
    if (a.requires_grad()) {
      res[0].resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) res[0][i] = g[0] * b[i];
    }
    if (b.requires_grad()) {
      res[1].resize(b.size());
      for (std::size_t i = 0; i < b.size(); ++i) res[1][i] = g[0] * a[i];
    }
    return res;
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels, Reduction reduction) {
  require_defined(logits, "softmax_cross_entropy");
  const std::size_t batch = rows_of(logits);
  const std::size_t k = cols_of(logits);
  if (logits.rank() > 2 || labels.size() != batch) {
    shape_error("softmax_cross_entropy", "logits " + shape_str(logits.shape()) + " vs " +
                                             std::to_string(labels.size()) + " labels");
  }
  const auto L = logits.data();
  auto probs = std::make_shared<std::vector<double>>(batch * k);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= k) {
      throw Error(ErrorKind::kShape, "softmax_cross_entropy: label " + std::to_string(labels[b]) + " out of range");
    }
    const double* row = &L[b * k];
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < k; ++j) (*probs)[b * k + j] = std::exp(row[j] - mx) / z;
    total += std::log(z) + mx - row[labels[b]];
  }
  const double factor = reduction == Reduction::kMean ? 1.0 / static_cast<double>(batch) : 1.0;
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  Tape* tape = active_tape({&logits}, "softmax_cross_entropy");
  return emit(tape, "softmax_cross_entropy", {}, {total * factor}, {logits},
              [probs, lab = std::move(lab), k, factor](std::span<const double> g) {
                InputGrads res(1);
                res[0] = *probs;
                for (std::size_t b = 0; b < lab.size(); ++b) res[0][b * k + lab[b]] -= 1.0;
                for (double& v : res[0]) v *= g[0] * factor;
                return res;
              });
}

Tensor stop_gradient(const Tensor& t) {
  require_defined(t, "stop_gradient");
  return Tensor::constant(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
}

namespace {

// (s cosh s - sinh s) / s^3, with its Taylor expansion near 0.
double cosh_sinh_ratio(double s) {
  if (s < 1e-3) {
    const double s2 = s * s;
    return 1.0 / 3.0 + s2 / 30.0 + s2 * s2 / 840.0;
  }
  return (s * std::cosh(s) - std::sinh(s)) / (s * s * s);
}

double sinhc(double s) { return s < 1e-8 ? 1.0 + s * s / 6.0 : std::sinh(s) / s; }

}  // namespace

Tensor prototype_logits(const Tensor& features, const Tensor& prototypes, double curvature, double logit_scale) {
  require_defined(features, "prototype_logits");
  require_defined(prototypes, "prototype_logits");
  if (features.rank() != 2 || prototypes.rank() != 2 || prototypes.shape()[1] != features.shape()[1] + 1) {
    shape_error("prototype_logits", "features " + shape_str(features.shape()) + " vs prototypes " +
                                        shape_str(prototypes.shape()));
  }
  if (!(curvature > 0.0)) throw Error(ErrorKind::kDomain, "prototype_logits: curvature must be positive");
  const std::size_t batch = features.shape()[0];
  const std::size_t d = features.shape()[1];
  const std::size_t k = prototypes.shape()[0];
  const double c = curvature;
  const double sc = std::sqrt(c);
  const auto H = features.data();
  const auto P = prototypes.data();

  // a = -c <exp_0(h), p>_L = sqrt(c) p0 cosh(s) - c S(s) <h, q>,
  // with s = sqrt(c)|h|, S(s) = sinh(s)/s and q the spatial part of p.
  std::vector<double> out(batch * k);
  auto args = std::make_shared<std::vector<double>>(batch * k);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* h = &H[b * d];
    double r2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) r2 += h[i] * h[i];
    const double s = sc * std::sqrt(r2);
    const double ch = std::cosh(s);
    const double S = sinhc(s);
    for (std::size_t j = 0; j < k; ++j) {
      const double* p = &P[j * (d + 1)];
      double hq = 0.0;
      for (std::size_t i = 0; i < d; ++i) hq += h[i] * p[i + 1];
      const double a = sc * p[0] * ch - c * S * hq;
      (*args)[b * k + j] = a;
      double z = a - 1.0;
      if (z < 0.0) {
        if (z < -1e-6) throw Error(ErrorKind::kDomain, "prototype_logits: arcosh argument below 1");
        z = 0.0;
      }
      out[b * k + j] = -logit_scale * std::log1p(z + std::sqrt(z * (z + 2.0))) / sc;
    }
  }

  Tape* tape = active_tape({&features, &prototypes}, "prototype_logits");
  return emit(tape, "prototype_logits", {batch, k}, std::move(out), {features, prototypes},
              [features, prototypes, args, batch, d, k, c, sc, logit_scale](std::span<const double> g) {
                InputGrads res(2);
                const auto H = features.data();
                const auto P = prototypes.data();
                const bool want_h = features.requires_grad();
                const bool want_p = prototypes.requires_grad();
                if (want_h) res[0].assign(batch * d, 0.0);
                if (want_p) res[1].assign(k * (d + 1), 0.0);
                for (std::size_t b = 0; b < batch; ++b) {
                  const double* h = &H[b * d];
                  double r2 = 0.0;
                  for (std::size_t i = 0; i < d; ++i) r2 += h[i] * h[i];
                  const double s = sc * std::sqrt(r2);
                  const double ch = std::cosh(s);
                  const double S = sinhc(s);
                  const double T = cosh_sinh_ratio(s);
                  for (std::size_t j = 0; j < k; ++j) {
                    const double a = (*args)[b * k + j];
                    const double a2m1 = a * a - 1.0;
                    // The distance is not differentiable where the point
                    // meets the prototype; use the zero subgradient there.
                    if (a2m1 <= 1e-12) continue;
                    const double dlogit_da = -logit_scale / (sc * std::sqrt(a2m1));
                    const double w = g[b * k + j] * dlogit_da;
                    if (w == 0.0) continue;
                    const double* p = &P[j * (d + 1)];
                    double hq = 0.0;
                    for (std::size_t i = 0; i < d; ++i) hq += h[i] * p[i + 1];
                    if (want_h) {
                      double* gh = &res[0][b * d];
                      const double coef_h = c * sc * p[0] * S - c * c * T * hq;
                      for (std::size_t i = 0; i < d; ++i) gh[i] += w * (coef_h * h[i] - c * S * p[i + 1]);
                    }
                    if (want_p) {
                      double* gp = &res[1][j * (d + 1)];
                      gp[0] += w * sc * ch;
                      for (std::size_t i = 0; i < d; ++i) gp[i + 1] += w * (-c * S * h[i]);
                    }
                  }
                }
                return res;
              });
}

Tensor vjp(const Tensor& h, std::span<const double> cotangent, const Tensor& x) {
  require_defined(h, "vjp");
  if (cotangent.size() != h.size()) {
    shape_error("vjp", "cotangent has " + std::to_string(cotangent.size()) + " elements, feature " +
                           shape_str(h.shape()));
  }
  std::vector<double> zeros(x.size(), 0.0);
  if (!h.requires_grad() || !x.requires_grad() || h.tape() != x.tape()) {
    return Tensor::constant(x.shape(), std::move(zeros));
  }
  const Tensor v = stop_gradient(Tensor::constant(h.shape(), std::vector<double>(cotangent.begin(), cotangent.end())));
  const Tensor objective = inner_product(h, v);
  const GradientMap grads = h.tape()->backward(objective);
  if (!grads.contains(x)) return Tensor::constant(x.shape(), std::move(zeros));
  return grads.at(x);
}

}  // namespace hyperadv::ad
