#pragma once

#include "expadv/attacks.hpp"
#include "expadv/mnist.hpp"
#include "expadv/model.hpp"
#include "expadv/samplers.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace expadv::training {

enum class Objective { natural, madry, exp_integral };
enum class Stabilization { softmax_weighted, raw_exp };

std::string_view to_string(Objective objective);
std::string_view to_string(Stabilization stabilization);
Objective parse_objective(std::string_view text);
Stabilization parse_stabilization(std::string_view text);

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
};

struct TrainConfig {
  model::Architecture arch = model::Architecture::mlp;
  Objective objective = Objective::exp_integral;
  /// Training budget: the Madry attack radius and the per-epoch PGD evaluation radius.
  double epsilon = 0.3;
  double lambda = 1.0;
  int samples_per_image = 100;
  samplers::SamplerSpec sampler;
  /// Attack used by the madry objective; its epsilon is replaced by `epsilon`.
  attacks::AttackConfig attack;
  OptimizerConfig optimizer;
  int epochs = 1;
  int batch_size = 50;
  std::uint64_t seed = 0;
  Stabilization stabilization = Stabilization::softmax_weighted;
  /// Test images used for the per-epoch PGD accuracy; 0 uses all, negative skips it.
  Index eval_limit = 1000;
  bool record_wall_time = false;

  void validate() const;
};

/// SGD with heavy-ball momentum: v <- mu v + g, theta <- theta - lr v.
class SgdMomentum {
 public:
  SgdMomentum() = default;
  explicit SgdMomentum(const model::ModelParams& params);

  void step(model::ModelParams& params, std::span<const Tensor> grads, const OptimizerConfig& config);
  std::vector<Tensor>& velocity() noexcept { return velocity_; }
  const std::vector<Tensor>& velocity() const noexcept { return velocity_; }

 private:
  std::vector<Tensor> velocity_;
};

/// Everything that evolves during training.
struct TrainState {
  model::ModelParams params;
  SgdMomentum optimizer;
  std::mt19937_64 rng;
  int epoch = 0;
  std::uint64_t iteration = 0;
};

TrainState initial_state(const TrainConfig& config);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepResult {
  double objective = 0.0;
  double weight_entropy = 0.0;
};

/// One SGD-momentum step on the batch-mean cross-entropy.
StepResult natural_step(TrainState& state, const mnist::Batch& batch, const TrainConfig& config);
/// PGD-attacks the batch with the current parameters, then takes a natural step on it.
StepResult madry_adv_step(TrainState& state, const mnist::Batch& batch, const TrainConfig& config);
/// Monte-Carlo exponential-integral step over `samples_per_image` perturbed copies per image.
StepResult exp_objective_step(TrainState& state, const mnist::Batch& batch, const TrainConfig& config);
StepResult step(TrainState& state, const mnist::Batch& batch, const TrainConfig& config);

// --- building blocks -------------------------------------------------------

struct LossGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

/// Mean cross-entropy and its parameter gradient.
LossGradient loss_gradient(const model::ModelParams& params, const mnist::Batch& batch);

/// softmax over j of lambda * losses[j].
std::vector<double> softmax_weights(std::span<const double> losses, double lambda);

struct ExpObjective {
  /// softmax_weighted: mean over images of logsumexp_j(lambda L_j) - log k.
  /// raw_exp: mean over images of (1/k) sum_j exp(lambda L_j).
  double objective = 0.0;
  /// Mean over images of the entropy of the per-image softmax weights.
  double weight_entropy = 0.0;
  std::vector<double> losses;   // per copy, image-major
  std::vector<double> weights;  // per copy, image-major
  std::vector<Tensor> grads;
};

/// Objective and gradient for copies laid out image-major: rows
/// [i*k, (i+1)*k) are the k perturbed versions of image i. In softmax_weighted
/// mode the gradient is mean_i sum_j w_ij grad L_ij with the weights held
/// constant; in raw_exp mode it is the exact gradient of the raw objective.
ExpObjective exp_objective(const model::ModelParams& params, const mnist::Batch& copies, std::size_t k, double lambda,
                           Stabilization stabilization);

/// k perturbed copies of every image of the batch, image-major.
mnist::Batch draw_copies(const samplers::SamplerSpec& spec, const mnist::Batch& batch, std::size_t k,
                         std::uint64_t stream);

/// The attack the madry objective runs: config.attack with the training epsilon.
attacks::AttackConfig training_attack(const TrainConfig& config, std::uint64_t seed);

// --- loop ------------------------------------------------------------------

struct IterationMetrics {
  std::uint64_t iteration = 0;
  int epoch = 0;
  double objective = 0.0;
  double weight_entropy = 0.0;
  double wall_time_ms = 0.0;
};

struct EpochMetrics {
  int epoch = 0;
  double clean_accuracy = 0.0;
  double pgd_accuracy = 0.0;
  Index evaluated = 0;
};

struct TrainCallbacks {
  std::function<void(const IterationMetrics&)> on_iteration;
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Runs one epoch over `train_set` and, if `test_set` is given, evaluates it.
void run_epoch(TrainState& state, const TrainConfig& config, const mnist::Dataset& train_set,
               const mnist::Dataset* test_set, const TrainCallbacks& callbacks = {});

/// Trains from `resume` (or a fresh state) until config.epochs epochs are done.
TrainState train(const TrainConfig& config, const mnist::Dataset& train_set, const mnist::Dataset* test_set,
                 const TrainCallbacks& callbacks = {}, std::optional<TrainState> resume = std::nullopt);

}  // namespace expadv::training
