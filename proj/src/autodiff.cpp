#include "expadv/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace expadv::ad {

// ---------------------------------------------------------------------------
// Gradients

const Tensor& Gradients::operator[](Var leaf) const {
  if (!contains(leaf)) {
    throw std::out_of_range("gradients: node " + std::to_string(leaf.id()) + " is not a differentiable leaf");
  }
  return *by_node_[leaf.id()];
}

bool Gradients::contains(Var leaf) const {
  return leaf.id() < by_node_.size() && by_node_[leaf.id()].has_value();
}

// ---------------------------------------------------------------------------
// Tape

const Tape::Node& Tape::node(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw std::invalid_argument("tape: variable belongs to another record");
  return nodes_[v.id_];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.is_leaf = true;
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::set_leaf_value(Var leaf, Tensor value) {
  const Node& n = node(leaf);
  if (!n.is_leaf) throw std::invalid_argument("tape: set_leaf_value on a non-leaf node");
  if (n.value.shape() != value.shape()) {
    throw ShapeError("set_leaf_value", shape_str(n.value.shape()) + " vs " + shape_str(value.shape()));
  }
  nodes_[leaf.id_].value = std::move(value);
  // Anything recorded after this leaf was computed from the old value.
  if (leaf.id_ + 1 < nodes_.size()) stale_ = true;
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.backward = std::move(backward);
  n.inputs.reserve(inputs.size());
  for (Var in : inputs) {
    const Node& src = node(in);
    n.needs_grad = n.needs_grad || src.needs_grad;
    n.inputs.push_back(in.id_);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var output, const Tensor& seed) const {
  if (stale_) throw StaleRecordError("backward: record was mutated after ops were recorded; re-run forward");
  const Node& out = node(output);
  if (out.value.shape() != seed.shape()) {
    throw ShapeError("backward", "seed shape " + shape_str(seed.shape()) + " does not match output " +
                                     shape_str(out.value.shape()));
  }
  std::vector<std::optional<Tensor>> grads(nodes_.size());
  grads[output.id_] = seed;
  std::vector<Tensor*> slots;
  std::vector<const Tensor*> values;
  for (std::size_t i = output.id_ + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.is_leaf || !n.needs_grad || !grads[i]) continue;
    slots.assign(n.inputs.size(), nullptr);
    values.clear();
    for (std::size_t j : n.inputs) values.push_back(&nodes_[j].value);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const std::size_t j = n.inputs[k];
      if (!nodes_[j].needs_grad) continue;
      if (!grads[j]) grads[j] = Tensor::zeros(nodes_[j].value.shape());
      slots[k] = &*grads[j];
    }
    n.backward(*grads[i], values, slots);
    grads[i].reset();
  }
  Gradients result;
  result.by_node_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_leaf || !nodes_[i].needs_grad) continue;
    result.by_node_[i] = grads[i] ? std::move(*grads[i]) : Tensor::zeros(nodes_[i].value.shape());
  }
  return result;
}

Gradients Tape::backward(Var output) const {
  return backward(output, Tensor::filled(node(output).value.shape(), 1.0));
}

// ---------------------------------------------------------------------------
// Primitive ops

namespace {

// True when b's shape is a trailing slice of a's shape (including equal shapes).
bool broadcasts_over(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

void require_broadcast(std::string_view op, const Tensor& a, const Tensor& b) {
  if (!broadcasts_over(a.shape(), b.shape())) {
    throw ShapeError(op, "cannot combine " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_broadcast("add", x, y);
  const Index inner = y.size();
  const Index outer = x.size() / inner;
  Tensor out(x.shape());
  out.matrix(outer, inner) = x.matrix(outer, inner).rowwise() + y.matrix(1, inner).row(0);
  return a.tape().record("add", std::move(out), {a, b}, [outer, inner](const Tensor& g, std::span<const Tensor* const> /*values*/, std::span<Tensor* const> in) {
    if (in[0]) in[0]->data() += g.data();
    if (in[1]) in[1]->matrix(1, inner).row(0) += g.matrix(outer, inner).colwise().sum();
  });
}

Var mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_broadcast("mul", x, y);
  const Index inner = y.size();
  const Index outer = x.size() / inner;
  Tensor out(x.shape());
  out.matrix(outer, inner).array() = x.matrix(outer, inner).array().rowwise() * y.matrix(1, inner).row(0).array();
  return a.tape().record(
      "mul", std::move(out), {a, b},
      [outer, inner](const Tensor& g, std::span<const Tensor* const> v, std::span<Tensor* const> in) {
        const Tensor& xs = *v[0];
        const Tensor& ys = *v[1];
        if (in[0]) {
          in[0]->matrix(outer, inner).array() +=
              g.matrix(outer, inner).array().rowwise() * ys.matrix(1, inner).row(0).array();
        }
        if (in[1]) {
          in[1]->matrix(1, inner).row(0) +=
              (g.matrix(outer, inner).array() * xs.matrix(outer, inner).array()).matrix().colwise().sum();
        }
      });
}

Var matmul(Var a, Var b, bool transpose_b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 2 || y.rank() != 2) {
    throw ShapeError("matmul", "operands must be 2-D, got " + shape_str(x.shape()) + " and " + shape_str(y.shape()));
  }
  const Index m = x.dim(0), k = x.dim(1);
  const Index kb = transpose_b ? y.dim(1) : y.dim(0);
  const Index n = transpose_b ? y.dim(0) : y.dim(1);
  if (k != kb) {
    throw ShapeError("matmul", "inner dimensions differ: " + shape_str(x.shape()) + (transpose_b ? " x T" : " x ") +
                                   shape_str(y.shape()));
  }
  Tensor out({m, n});
  if (transpose_b) {
    out.matrix(m, n).noalias() = x.matrix(m, k) * y.matrix(n, k).transpose();
  } else {
    out.matrix(m, n).noalias() = x.matrix(m, k) * y.matrix(k, n);
  }
  return a.tape().record("matmul", std::move(out), {a, b},
                         [m, k, n, transpose_b](const Tensor& g, std::span<const Tensor* const> v,
                                                std::span<Tensor* const> in) {
                           const Tensor& xs = *v[0];
                           const Tensor& ys = *v[1];
                           const auto gm = g.matrix(m, n);
                           if (in[0]) {
                             if (transpose_b) {
                               in[0]->matrix(m, k).noalias() += gm * ys.matrix(n, k);
                             } else {
                               in[0]->matrix(m, k).noalias() += gm * ys.matrix(k, n).transpose();
                             }
                           }
                           if (in[1]) {
                             if (transpose_b) {
                               in[1]->matrix(n, k).noalias() += gm.transpose() * xs.matrix(m, k);
                             } else {
                               in[1]->matrix(k, n).noalias() += xs.matrix(m, k).transpose() * gm;
                             }
                           }
                         });
}

namespace {

struct ConvGeometry {
  Index batch, channels, height, width;
  Index out_channels, kernel_h, kernel_w;
  Index stride, padding;
  Index out_h, out_w;

  Index patch() const { return channels * kernel_h * kernel_w; }
  Index positions() const { return out_h * out_w; }
};

// cols is [C*kh*kw, out_h*out_w] for one image.
void im2col(const ConvGeometry& g, const double* image, RowMatrix<double>& cols) {
  cols.setZero(g.patch(), g.positions());
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        const Index row = (c * g.kernel_h + ki) * g.kernel_w + kj;
        double* dst = cols.row(row).data();
        for (Index oi = 0; oi < g.out_h; ++oi) {
          const Index ii = oi * g.stride + ki - g.padding;
          if (ii < 0 || ii >= g.height) continue;
          const double* src = image + (c * g.height + ii) * g.width;
          for (Index oj = 0; oj < g.out_w; ++oj) {
            const Index jj = oj * g.stride + kj - g.padding;
            if (jj >= 0 && jj < g.width) dst[oi * g.out_w + oj] = src[jj];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const RowMatrix<double>& cols, double* image) {
  for (Index c = 0; c < g.channels; ++c) {
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        const Index row = (c * g.kernel_h + ki) * g.kernel_w + kj;
        const double* src = cols.row(row).data();
        for (Index oi = 0; oi < g.out_h; ++oi) {
          const Index ii = oi * g.stride + ki - g.padding;
          if (ii < 0 || ii >= g.height) continue;
          double* dst = image + (c * g.height + ii) * g.width;
          for (Index oj = 0; oj < g.out_w; ++oj) {
            const Index jj = oj * g.stride + kj - g.padding;
            if (jj >= 0 && jj < g.width) dst[jj] += src[oi * g.out_w + oj];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var weight, Var bias, Conv2dOptions options) {
  const Tensor& in = x.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  if (in.rank() != 4 || w.rank() != 4 || b.rank() != 1 || w.dim(1) != in.dim(1) || b.dim(0) != w.dim(0)) {
    throw ShapeError("conv2d", "input " + shape_str(in.shape()) + ", weight " + shape_str(w.shape()) + ", bias " +
                                   shape_str(b.shape()));
  }
  if (options.stride < 1 || options.padding < 0) throw ShapeError("conv2d", "invalid stride/padding");
  ConvGeometry g{in.dim(0), in.dim(1), in.dim(2), in.dim(3), w.dim(0), w.dim(2), w.dim(3),
                 options.stride, options.padding, 0, 0};
  g.out_h = (g.height + 2 * g.padding - g.kernel_h) / g.stride + 1;
  g.out_w = (g.width + 2 * g.padding - g.kernel_w) / g.stride + 1;
  if (g.out_h <= 0 || g.out_w <= 0) throw ShapeError("conv2d", "kernel larger than padded input " + shape_str(in.shape()));

  Tensor out({g.batch, g.out_channels, g.out_h, g.out_w});
  const auto wm = w.matrix(g.out_channels, g.patch());
  const auto bv = b.matrix(g.out_channels, 1).col(0);
  const Index image_size = g.channels * g.height * g.width;
  const Index out_size = g.out_channels * g.positions();
  RowMatrix<double> cols;
  for (Index n = 0; n < g.batch; ++n) {
    im2col(g, in.raw() + n * image_size, cols);
    Eigen::Map<RowMatrix<double>> o(out.raw() + n * out_size, g.out_channels, g.positions());
    o.noalias() = wm * cols;
    o.colwise() += bv;
  }
  return x.tape().record(
      "conv2d", std::move(out), {x, weight, bias},
      [g, image_size, out_size](const Tensor& grad, std::span<const Tensor* const> v, std::span<Tensor* const> in) {
        const Tensor& xs = *v[0];
        const Tensor& ws = *v[1];
        const auto wm = ws.matrix(g.out_channels, g.patch());
        RowMatrix<double> cols;
        RowMatrix<double> dcols;
        for (Index n = 0; n < g.batch; ++n) {
          Eigen::Map<const RowMatrix<double>> go(grad.raw() + n * out_size, g.out_channels, g.positions());
          if (in[1]) {
            im2col(g, xs.raw() + n * image_size, cols);
            in[1]->matrix(g.out_channels, g.patch()).noalias() += go * cols.transpose();
          }
          if (in[2]) in[2]->matrix(g.out_channels, 1).col(0) += go.rowwise().sum();
          if (in[0]) {
            dcols.noalias() = wm.transpose() * go;
            col2im_add(g, dcols, in[0]->raw() + n * image_size);
          }
        }
      });
}

Var max_pool2x2(Var x) {
  const Tensor& in = x.value();
  if (in.rank() != 4 || in.dim(2) % 2 != 0 || in.dim(3) % 2 != 0) {
    throw ShapeError("max_pool2x2", "expects [B,C,H,W] with even H and W, got " + shape_str(in.shape()));
  }
  const Index planes = in.dim(0) * in.dim(1);
  const Index h = in.dim(2), w = in.dim(3);
  const Index oh = h / 2, ow = w / 2;
  Tensor out({in.dim(0), in.dim(1), oh, ow});
  std::vector<Index> argmax(static_cast<std::size_t>(out.size()));
  for (Index p = 0; p < planes; ++p) {
    const double* src = in.raw() + p * h * w;
    for (Index i = 0; i < oh; ++i) {
      for (Index j = 0; j < ow; ++j) {
        Index best = (2 * i) * w + 2 * j;
        for (Index di = 0; di < 2; ++di) {
          for (Index dj = 0; dj < 2; ++dj) {
            const Index idx = (2 * i + di) * w + 2 * j + dj;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const Index o = (p * oh + i) * ow + j;
        out[o] = src[best];
        argmax[static_cast<std::size_t>(o)] = p * h * w + best;
      }
    }
  }
  return x.tape().record("max_pool2x2", std::move(out), {x},
                         [argmax = std::move(argmax)](const Tensor& g, std::span<const Tensor* const> /*values*/, std::span<Tensor* const> in) {
                           if (!in[0]) return;
                           for (std::size_t o = 0; o < argmax.size(); ++o) {
                             (*in[0])[argmax[o]] += g[static_cast<Index>(o)];
                           }
                         });
}

Var relu(Var x) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  out.data() = in.data().cwiseMax(0.0);
  Tensor mask(in.shape());
  mask.data() = (in.data().array() > 0.0).cast<double>().matrix();
  return x.tape().record("relu", std::move(out), {x}, [mask = std::move(mask)](const Tensor& g, std::span<const Tensor* const> /*values*/, std::span<Tensor* const> in) {
    if (in[0]) in[0]->data().array() += g.data().array() * mask.data().array();
  });
}

Var exp(Var x) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  out.data() = in.data().array().exp().matrix();
  Tensor saved = out;
  return x.tape().record("exp", std::move(out), {x}, [saved = std::move(saved)](const Tensor& g, std::span<const Tensor* const> /*values*/, std::span<Tensor* const> in) {
    if (in[0]) in[0]->data().array() += g.data().array() * saved.data().array();
  });
}

Var log(Var x) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  out.data() = in.data().array().log().matrix();
  return x.tape().record("log", std::move(out), {x}, [](const Tensor& g, std::span<const Tensor* const> v, std::span<Tensor* const> in) {
    if (in[0]) in[0]->data().array() += g.data().array() / v[0]->data().array();
  });
}

Var sum(Var x) {
  return x.tape().record("sum", Tensor::scalar(x.value().data().sum()), {x},
                         [](const Tensor& g, std::span<const Tensor* const> /*values*/, std::span<Tensor* const> in) {
                           if (in[0]) in[0]->data().array() += g.item();
                         });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  out.data() *= factor;
  return x.tape().record("scale", std::move(out), {x}, [factor](const Tensor& g, std::span<const Tensor* const> /*values*/, std::span<Tensor* const> in) {
    if (in[0]) in[0]->data() += factor * g.data();
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x}, [](const Tensor& g, std::span<const Tensor* const> /*values*/, std::span<Tensor* const> in) {
    if (in[0]) in[0]->data() += g.data();
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || z.dim(0) != static_cast<Index>(labels.size())) {
    throw ShapeError("softmax_cross_entropy", "logits " + shape_str(z.shape()) + " with " +
                                                  std::to_string(labels.size()) + " labels");
  }
  const Index batch = z.dim(0), classes = z.dim(1);
  Tensor probs({batch, classes});
  Tensor losses({batch});
  std::vector<int> targets(labels.begin(), labels.end());
  const auto zm = z.matrix(batch, classes);
  auto pm = probs.matrix(batch, classes);
  for (Index b = 0; b < batch; ++b) {
    const int y = targets[static_cast<std::size_t>(b)];
    if (y < 0 || y >= classes) throw std::out_of_range("softmax_cross_entropy: label out of range");
    const double top = zm.row(b).maxCoeff();
    pm.row(b) = (zm.row(b).array() - top).exp().matrix();
    const double total = pm.row(b).sum();
    pm.row(b) /= total;
    losses[b] = top + std::log(total) - zm(b, y);
  }
  return logits.tape().record(
      "softmax_cross_entropy", std::move(losses), {logits},
      [probs = std::move(probs), targets = std::move(targets), batch, classes](const Tensor& g,
                                                                                 std::span<const Tensor* const> /*values*/, std::span<Tensor* const> in) {
        if (!in[0]) return;
        auto dz = in[0]->matrix(batch, classes);
        const auto pm = probs.matrix(batch, classes);
        for (Index b = 0; b < batch; ++b) {
          dz.row(b) += g[b] * pm.row(b);
          dz(b, targets[static_cast<std::size_t>(b)]) -= g[b];
        }
      });
}

// ---------------------------------------------------------------------------
// Whole-graph helpers

ForwardResult forward(const GraphFn& graph, std::span<const Tensor> inputs) {
  ForwardResult result;
  result.record = std::make_unique<Tape>();
  for (const Tensor& t : inputs) result.leaves.push_back(result.record->leaf(t, true));
  result.output_var = graph(*result.record, result.leaves);
  result.output = result.output_var.value();
  return result;
}

std::vector<Tensor> backward(const ForwardResult& result, const Tensor& seed) {
  const Gradients grads = result.record->backward(result.output_var, seed);
  std::vector<Tensor> out;
  out.reserve(result.leaves.size());
  for (Var leaf : result.leaves) out.push_back(grads[leaf]);
  return out;
}

namespace {

double evaluate_scalar(const GraphFn& graph, std::span<const Tensor> inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t, false));
  return graph(tape, leaves).value().item();
}

}  // namespace

FiniteDiffReport finite_diff_check(const GraphFn& graph, std::span<const Tensor> inputs, double tolerance,
                                   FiniteDiffOptions options) {
  ForwardResult fwd = forward(graph, inputs);
  if (fwd.output.size() != 1) throw ShapeError("finite_diff_check", "graph output must be scalar, got " + shape_str(fwd.output.shape()));
  const std::vector<Tensor> analytic = backward(fwd, Tensor::filled(fwd.output.shape(), 1.0));

  std::vector<std::pair<std::size_t, Index>> coords;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Index j = 0; j < inputs[i].size(); ++j) coords.emplace_back(i, j);
  }
  if (options.max_probes != 0 && options.max_probes < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::vector<std::pair<std::size_t, Index>> picked;
    std::sample(coords.begin(), coords.end(), std::back_inserter(picked), options.max_probes, rng);
    coords = std::move(picked);
  }

  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  FiniteDiffReport report;
  for (auto [i, j] : coords) {
    const double original = probe[i][j];
    probe[i][j] = original + options.step;
    const double up = evaluate_scalar(graph, probe);
    probe[i][j] = original - options.step;
    const double down = evaluate_scalar(graph, probe);
    probe[i][j] = original;
    const double numeric = (up - down) / (2.0 * options.step);
    const double exact = analytic[i][j];
    const double err = std::abs(exact - numeric) / (std::abs(exact) + 1e-8);
    report.max_relative_error = std::max(report.max_relative_error, err);
    ++report.probed;
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace expadv::ad
