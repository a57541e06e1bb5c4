#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vdnapr/nn/tensor.hpp"

namespace vdnapr::nn {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so a
/// reverse sweep is a valid topological order. Parameter leaves accumulate
/// their gradients into `Parameter::grad` on backward().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor value);
  Var parameter(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node. The loss must be
  /// a single-element tensor recorded on this tape; otherwise GraphError.
  void backward(const Var& loss);

  void clear();
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Concatenated branch decisions of every piecewise op recorded so far
  /// (ReLU masks, hinge activity, zero-norm rows). Two evaluations with equal
  /// patterns lie on the same smooth piece of the function.
  const std::vector<std::uint8_t>& branch_pattern() const noexcept { return pattern_; }

  // Op-author interface.
  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  /// Gradient buffer of node `id`, allocated on first use.
  Tensor& grad(std::size_t id);
  const Tensor& grad_or_empty(std::size_t id) const { return nodes_.at(id).grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  void record_branch(std::uint8_t bit) { pattern_.push_back(bit); }
  void check(const Var& v) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::uint8_t> pattern_;
};

// Differentiable ops. All inputs must live on the same tape.

/// x [B, Cin, L] or [Cin, L]; w [Cout, Cin, K]; b [Cout].
Var conv1d(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t padding);
/// x [B, in]; w [out, in]; b [out].
Var linear(const Var& x, const Var& w, const Var& b);
/// x [B, n]; w [n, d].
Var matmul(const Var& x, const Var& w);
Var relu(const Var& x);
/// Row-wise L2 normalization of a [B, n] tensor; rows with norm < 1e-12 map to zero.
Var l2_normalize_rows(const Var& x);
Var reshape(const Var& x, Shape shape);
/// Row `index` of a [B, n] tensor as a [n] vector.
Var row(const Var& x, std::size_t index);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var sum(const Var& x);
Var mean(std::span<const Var> scalars);

inline constexpr double kDefaultMargin = 0.1;

/// Mean over negatives of max(0, |a-p|^2 - |a-n|^2 + margin).
Var triplet_loss(const Var& anchor, const Var& positive, std::span<const Var> negatives, double margin = kDefaultMargin);

/// Forward-only evaluation of the same loss on plain vectors.
double triplet_loss_value(std::span<const double> anchor, std::span<const double> positive,
                          std::span<const std::span<const double>> negatives, double margin = kDefaultMargin);

}  // namespace vdnapr::nn
