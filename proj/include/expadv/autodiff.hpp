#pragma once

#include "expadv/tensor.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace expadv::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Backward rule of one node. `values[i]` is the forward value of input i.
/// `grads[i]` is null when input i does not need a gradient; otherwise the
/// function must add (never assign) into it.
using BackwardFn =
    std::function<void(const Tensor& output_grad, std::span<const Tensor* const> values, std::span<Tensor* const> grads)>;

/// Gradients with respect to every leaf that was registered with requires_grad.
class Gradients {
 public:
  const Tensor& operator[](Var leaf) const;
  bool contains(Var leaf) const;

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> by_node_;
};

class StaleRecordError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The computation record: an append-only, topologically ordered list of
/// primitive applications. Nodes are appended as ops execute, so reverse
/// insertion order is a valid backward schedule.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Replaces a leaf's value. Any values derived from it are now stale, so a
  /// later backward() on this record throws.
  void set_leaf_value(Var leaf, Tensor value);

  const Tensor& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).needs_grad; }
  std::string_view op_name(Var v) const { return node(v).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Gradients backward(Var output, const Tensor& seed) const;
  /// Seeds with ones; intended for scalar outputs.
  Gradients backward(Var output) const;

  /// Records a primitive application. Used by the op free functions.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool is_leaf = false;
    bool needs_grad = false;
  };
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool stale_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

// ---------------------------------------------------------------------------
// Primitive ops. Each records one node.

/// Elementwise sum. `b` may also be broadcast over the leading axes of `a`
/// when b's shape equals a trailing slice of a's shape (bias add).
Var add(Var a, Var b);
/// Elementwise product, same broadcasting rule as add.
Var mul(Var a, Var b);
/// [M,K] x [K,N]; with transpose_b, b is [N,K] and used transposed.
Var matmul(Var a, Var b, bool transpose_b = false);

struct Conv2dOptions {
  Index stride = 1;
  Index padding = 0;
};
/// x [B,C,H,W], weight [O,C,kh,kw], bias [O] -> [B,O,H',W'].
Var conv2d(Var x, Var weight, Var bias, Conv2dOptions options = {});
/// 2x2 window, stride 2, over the last two axes of [B,C,H,W]. H and W must be even.
Var max_pool2x2(Var x);
Var relu(Var x);
Var exp(Var x);
Var log(Var x);
/// Sum of all entries, returns a scalar.
Var sum(Var x);
Var scale(Var x, double factor);
Var reshape(Var x, Shape shape);
/// Fused, numerically stable softmax + cross-entropy. logits [B,C], labels
/// length B -> per-sample losses [B].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var x) { return scale(x, c); }

// ---------------------------------------------------------------------------
// Whole-graph helpers.

/// A graph description: given a tape and one leaf per input, builds the output.
using GraphFn = std::function<Var(Tape&, std::span<const Var>)>;

struct ForwardResult {
  Tensor output;
  std::unique_ptr<Tape> record;
  std::vector<Var> leaves;
  Var output_var;
};

ForwardResult forward(const GraphFn& graph, std::span<const Tensor> inputs);
std::vector<Tensor> backward(const ForwardResult& result, const Tensor& seed);

struct FiniteDiffOptions {
  double step = 1e-5;
  /// 0 probes every coordinate of every input; otherwise that many coordinates
  /// chosen uniformly at random across all inputs.
  std::size_t max_probes = 0;
  std::uint64_t seed = 0;
};

struct FiniteDiffReport {
  double max_relative_error = 0.0;
  std::size_t probed = 0;
  bool passed = true;
};

/// Compares backward() against central differences on a scalar-valued graph.
/// Relative error per coordinate is |analytic - numeric| / (|analytic| + 1e-8).
FiniteDiffReport finite_diff_check(const GraphFn& graph, std::span<const Tensor> inputs, double tolerance,
                                   FiniteDiffOptions options = {});

}  // namespace expadv::ad
