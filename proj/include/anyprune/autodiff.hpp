#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "anyprune/tensor.hpp"

namespace anyprune {

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  std::size_t id = 0;
  Tape* tape = nullptr;
};

class Gradients;
Gradients backward(const Tape& tape, Var loss);

// Inputs are read-only views of the parent values; grads[i] is null when
// parent i does not need a gradient. Backward rules accumulate (+=).
using ForwardRule = std::function<Tensor(std::span<const Tensor* const> inputs)>;
using BackwardRule = std::function<void(std::span<const Tensor* const> inputs, const Tensor& output,
                                        const Tensor& grad_output, std::span<Tensor* const> grads)>;

// Ordered record of the primitive operations of one forward pass.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad);
  Var param(Tensor value) { return leaf(std::move(value), true); }
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var record(std::vector<Var> inputs, ForwardRule forward, BackwardRule backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  bool owns(Var v) const noexcept { return v.tape == this && v.id < nodes_.size(); }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Re-runs every recorded forward rule from the leaf values and reports
  // whether each output is reproduced bit-exactly.
  bool replay_matches() const;

 private:
  friend class Gradients;
  friend Gradients backward(const Tape& tape, Var loss);

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    ForwardRule forward;
    BackwardRule backward;
  };
  std::vector<Node> nodes_;
};

class Gradients {
 public:
  // Gradient of the loss with respect to v; zeros when v does not influence it.
  const Tensor& wrt(Var v) const&;
  Tensor wrt(Var v) && { return static_cast<const Gradients&>(*this).wrt(v); }

 private:
  friend Gradients backward(const Tape& tape, Var loss);
  const Tape* tape_ = nullptr;
  std::vector<std::optional<Tensor>> grads_;
  mutable std::vector<std::optional<Tensor>> zeros_;
};

// Reverse-mode sweep from a scalar loss.
Gradients backward(const Tape& tape, Var loss);

namespace ops {

Var matmul(Var a, Var b);
// x [n x m] + b [m] broadcast over rows.
Var add_bias(Var x, Var bias);
// x [n x c x h x w] + b [c] broadcast over batch and space.
Var add_channel_bias(Var x, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var sum(Var x);
Var relu(Var x);
Var reshape(Var x, Shape shape);
// Valid cross-correlation with zero padding.
Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding);
// Non-overlapping window x window mean pooling; trailing rows/cols dropped.
Var mean_pool2d(Var input, std::size_t window);
// Mean over the batch of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace ops

// Plain (untaped) kernels shared with tests and evaluation code.
namespace kernels {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);
Tensor relu(const Tensor& x);
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
}  // namespace kernels

}  // namespace anyprune
