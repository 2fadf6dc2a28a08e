#pragma once

#include "expadv/autodiff.hpp"
#include "expadv/mnist.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace expadv::model {

enum class Architecture { convnet, mlp };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view text);

struct ModelConfig {
  Architecture arch = Architecture::mlp;
  std::uint64_t seed = 0;
};

/// Parameter names and shapes, in the canonical (checkpoint) order.
std::vector<std::pair<std::string, Shape>> layout(Architecture arch);

/// Named weight/bias tensors of one classifier.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(Architecture arch, std::vector<Tensor> tensors);

  Architecture arch() const noexcept { return arch_; }
  std::size_t count() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& operator[](std::size_t i) { return tensors_.at(i); }
  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  const Tensor& operator[](std::string_view name) const;
  Tensor& operator[](std::string_view name);
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  std::vector<Tensor>& tensors() noexcept { return tensors_; }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.arch_ == b.arch_ && a.tensors_ == b.tensors_;
  }

 private:
  Architecture arch_ = Architecture::mlp;
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
ModelParams init(const ModelConfig& config);
ModelParams zeros(Architecture arch);

/// Parameters recorded as leaves on a tape.
struct BoundParams {
  Architecture arch;
  std::vector<ad::Var> vars;
};

BoundParams bind(ad::Tape& tape, const ModelParams& params, bool requires_grad);

/// images: [B,1,28,28] -> logits [B,10].
ad::Var logits(const BoundParams& params, ad::Var images);
Tensor logits(const ModelParams& params, const Tensor& images);

/// Mean softmax cross-entropy over the batch.
ad::Var loss(const BoundParams& params, ad::Var images, std::span<const int> labels);
double loss(const ModelParams& params, const mnist::Batch& batch);

/// Per-sample argmax of the logits.
std::vector<int> predict(const ModelParams& params, const Tensor& images);

}  // namespace expadv::model
