#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// double tensors.
//
// A Tape records every primitive whose inputs require gradients. Calling
// backward() walks the record in reverse creation order, which is a valid
// topological order because a node can only consume tensors that already
// exist. Gradients come back in a fresh GradientMap per call; tensors are
// never mutated.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "hyperadv/error.hpp"

namespace hyperadv::ad {

using Shape = std::vector<std::size_t>;
using TensorId = std::uint64_t;

class Tape;

class Tensor {
 public:
  Tensor() = default;

  /// A value that lives outside any tape and never requires gradients.
  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor scalar(double value) { return constant({}, {value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::span<const double> data() const noexcept {
    return data_ ? std::span<const double>(*data_) : std::span<const double>();
  }
  std::size_t size() const noexcept { return data_ ? data_->size() : 0; }
  std::size_t rank() const noexcept { return shape_.size(); }
  bool is_scalar() const noexcept { return size() == 1 && shape_.size() <= 1; }
  /// Value of a single-element tensor.
  double item() const;
  double operator[](std::size_t i) const { return (*data_)[i]; }

  bool requires_grad() const noexcept { return requires_grad_; }
  TensorId id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool defined() const noexcept { return static_cast<bool>(data_); }

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  TensorId id_ = 0;
  bool requires_grad_ = false;
  Tape* tape_ = nullptr;
};

/// Result of Tape::backward: d(output)/d(t) for every tensor t on the tape
/// that requires gradients and lies on a path to the output.
class GradientMap {
 public:
  bool contains(const Tensor& t) const { return grads_.count(t.id()) != 0 && t.tape() == tape_; }
  /// Throws kContract when t has no gradient entry.
  const Tensor& at(const Tensor& t) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::unordered_map<TensorId, Tensor> grads_;
};

/// Per-input gradient contributions produced by a node's backward rule. An
/// empty vector means "no contribution".
using InputGrads = std::vector<std::vector<double>>;
using BackwardFn = std::function<InputGrads(std::span<const double> grad_out)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that requires gradients.
  Tensor variable(Shape shape, std::vector<double> data);
  /// Leaf registered on this tape that never receives gradients.
  Tensor constant(Shape shape, std::vector<double> data);

  /// Records a primitive. Used by the op implementations.
  Tensor record(const char* op, Shape shape, std::vector<double> data,
                std::vector<Tensor> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar output.
  GradientMap backward(const Tensor& output) const;

  std::size_t num_nodes() const noexcept { return nodes_.size(); }

  /// When enabled, every recorded value is checked for NaN/Inf.
  void set_check_finite(bool on) noexcept { check_finite_ = on; }

 private:
  struct Node {
    const char* op;
    TensorId output;
    Shape output_shape;
    std::vector<Tensor> inputs;
    BackwardFn backward;
  };

  Tensor make(Shape shape, std::vector<double> data, bool requires_grad);

  std::vector<Node> nodes_;
  TensorId next_id_ = 1;
  bool check_finite_ = false;
};

// ---------------------------------------------------------------------------
// Primitives. Each records onto the tape of its gradient-requiring inputs and
// degrades to a plain computation when no input requires gradients.

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Elementwise sum of equal shapes, or [m,n] + [n] (row broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product of equal shapes.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
/// Sum of all elements -> scalar.
Tensor sum(const Tensor& a);
/// Euclidean norm of all elements -> scalar.
Tensor l2_norm(const Tensor& a);
/// Sum of elementwise products of equal shapes -> scalar.
Tensor inner_product(const Tensor& a, const Tensor& b);

enum class Reduction { kSum, kMean };

/// Softmax cross-entropy of [B,K] logits against B labels -> scalar.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                             Reduction reduction = Reduction::kMean);

/// Identity forward; gradients do not flow through the result.
Tensor stop_gradient(const Tensor& t);

/// Hyperbolic prototype head. Each row h_b of features [B,d] is lifted to the
/// tangent vector (0, h_b) at the Lorentz origin and mapped onto the
/// hyperboloid; the output [B,K] is -scale * d_L(exp_0(h_b), p_k) for the
/// prototypes [K, d+1] given in ambient coordinates.
Tensor prototype_logits(const Tensor& features, const Tensor& prototypes, double curvature,
                        double logit_scale);

/// (dh/dx)^T v: gradient of <h, stop_gradient(v)> with respect to x.
Tensor vjp(const Tensor& h, std::span<const double> cotangent, const Tensor& x);

}  // namespace hyperadv::ad
