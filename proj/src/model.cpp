#include "expadv/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace expadv::model {

std::string_view to_string(Architecture arch) { return arch == Architecture::convnet ? "convnet" : "mlp"; }

Architecture parse_architecture(std::string_view text) {
  if (text == "convnet") return Architecture::convnet;
  if (text == "mlp") return Architecture::mlp;
  throw std::invalid_argument("unknown architecture '" + std::string(text) + "' (expected convnet or mlp)");
}

std::vector<std::pair<std::string, Shape>> layout(Architecture arch) {
  if (arch == Architecture::convnet) {
    return {{"conv1.weight", {32, 1, 5, 5}}, {"conv1.bias", {32}},
            {"conv2.weight", {64, 32, 5, 5}}, {"conv2.bias", {64}},
            {"fc1.weight", {1024, 64 * 7 * 7}}, {"fc1.bias", {1024}},
            {"fc2.weight", {10, 1024}}, {"fc2.bias", {10}}};
  }
  return {{"fc1.weight", {256, 784}}, {"fc1.bias", {256}}, {"fc2.weight", {10, 256}}, {"fc2.bias", {10}}};
}

ModelParams::ModelParams(Architecture arch, std::vector<Tensor> tensors) : arch_(arch), tensors_(std::move(tensors)) {
  const auto spec = layout(arch);
  if (spec.size() != tensors_.size()) {
    throw ShapeError("model", std::string(to_string(arch)) + " expects " + std::to_string(spec.size()) + " tensors");
  }
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (spec[i].second != tensors_[i].shape()) {
      throw ShapeError("model", spec[i].first + " must be " + shape_str(spec[i].second) + ", got " +
                                    shape_str(tensors_[i].shape()));
    }
    if (!tensors_[i].all_finite()) throw std::invalid_argument("model: non-finite values in " + spec[i].first);
    names_.push_back(spec[i].first);
  }
}

const Tensor& ModelParams::operator[](std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return tensors_[i];
  }
  throw std::out_of_range("model: no parameter named " + std::string(name));
}

Tensor& ModelParams::operator[](std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ModelParams&>(*this)[name]);
}

ModelParams zeros(Architecture arch) {
  std::vector<Tensor> tensors;
  for (auto& [name, shape] : layout(arch)) tensors.emplace_back(shape);
  return ModelParams(arch, std::move(tensors));
}

ModelParams init(const ModelConfig& config) {
  std::mt19937_64 rng(config.seed);
  std::vector<Tensor> tensors;
  for (auto& [name, shape] : layout(config.arch)) {
    Tensor t(shape);
    if (shape.size() > 1) {
      const Index fan_in = numel(shape) / shape[0];
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (double& v : t.values()) v = normal(rng);
    }
    tensors.push_back(std::move(t));
  }
  return ModelParams(config.arch, std::move(tensors));
}

BoundParams bind(ad::Tape& tape, const ModelParams& params, bool requires_grad) {
  BoundParams bound{params.arch(), {}};
  for (const Tensor& t : params.tensors()) bound.vars.push_back(tape.leaf(t, requires_grad));
  return bound;
}

ad::Var logits(const BoundParams& p, ad::Var images) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != mnist::kRows || s[3] != mnist::kCols) {
    throw ShapeError("logits", "expected images [B,1,28,28], got " + shape_str(s));
  }
  const Index batch = s[0];
  const auto& v = p.vars;
  if (p.arch == Architecture::mlp) {
    ad::Var x = ad::reshape(images, {batch, mnist::kPixels});
    ad::Var h = ad::relu(ad::matmul(x, v[0], true) + v[1]);
    return ad::matmul(h, v[2], true) + v[3];
  }
  const ad::Conv2dOptions same{1, 2};
  ad::Var h = ad::max_pool2x2(ad::relu(ad::conv2d(images, v[0], v[1], same)));
  h = ad::max_pool2x2(ad::relu(ad::conv2d(h, v[2], v[3], same)));
  h = ad::reshape(h, {batch, 64 * 7 * 7});
  h = ad::relu(ad::matmul(h, v[4], true) + v[5]);
  return ad::matmul(h, v[6], true) + v[7];
}

Tensor logits(const ModelParams& params, const Tensor& images) {
  ad::Tape tape;
  const BoundParams bound = bind(tape, params, false);
  return logits(bound, tape.constant(images)).value();
}

ad::Var loss(const BoundParams& params, ad::Var images, std::span<const int> labels) {
  ad::Var per_sample = ad::softmax_cross_entropy(logits(params, images), labels);
  return ad::scale(ad::sum(per_sample), 1.0 / static_cast<double>(labels.size()));
}

double loss(const ModelParams& params, const mnist::Batch& batch) {
  ad::Tape tape;
  const BoundParams bound = bind(tape, params, false);
  return loss(bound, tape.constant(batch.images), batch.labels).value().item();
}

std::vector<int> predict(const ModelParams& params, const Tensor& images) {
  const Tensor z = logits(params, images);
  const Index rows = z.dim(0);
  std::vector<int> out(static_cast<std::size_t>(rows));
  const auto m = z.matrix(rows, z.dim(1));
  for (Index r = 0; r < rows; ++r) {
    Index best = 0;
    m.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace expadv::model
