#include "expadv/training.hpp"

#include "expadv/numeric.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace expadv::training {

namespace {

// Stream tags keep the training RNG, the sampler and evaluation draws apart.
constexpr std::uint64_t kTrainStream = 0x747261696e;
constexpr std::uint64_t kEvalStream = 0x6576616c;
constexpr double kRawExpLimit = 500.0;

Index chunk_rows(model::Architecture arch) { return arch == model::Architecture::convnet ? 64 : 1024; }

void require_finite(double value, std::string_view what, const TrainState& state) {
  if (!std::isfinite(value)) {
    throw TrainingError("train: non-finite " + std::string(what) + " at epoch " + std::to_string(state.epoch) +
                        ", iteration " + std::to_string(state.iteration));
  }
}

void require_finite(std::span<const Tensor> grads, const TrainState& state) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].all_finite()) {
      throw TrainingError("train: non-finite gradient for " + state.params.name(i) + " at epoch " +
                          std::to_string(state.epoch) + ", iteration " + std::to_string(state.iteration));
    }
  }
}

std::vector<Tensor> zero_like(const model::ModelParams& params) {
  std::vector<Tensor> out;
  out.reserve(params.count());
  for (const Tensor& t : params.tensors()) out.emplace_back(t.shape());
  return out;
}

mnist::Batch slice(const mnist::Batch& batch, Index begin, Index end) {
  const Index per = batch.images.size() / std::max<Index>(batch.size(), 1);
  Shape shape = batch.images.shape();
  shape[0] = end - begin;
  Tensor::Storage data = batch.images.data().segment(begin * per, (end - begin) * per);
  return {Tensor(std::move(shape), std::move(data)),
          std::vector<int>(batch.labels.begin() + begin, batch.labels.begin() + end)};
}

struct Accuracy {
  double clean = 0.0;
  double attacked = 0.0;
  Index evaluated = 0;
};

Accuracy evaluate(const model::ModelParams& params, const mnist::Dataset& test_set, const TrainConfig& config) {
  const mnist::Dataset subset = test_set.head(config.eval_limit);
  const auto attack = attacks::AttackConfig::standard(attacks::AttackFamily::pgd, config.epsilon,
                                                      samplers::stream_seed(config.seed, kEvalStream));
  Index clean = 0, robust = 0;
  for (const auto& indices : mnist::batches(static_cast<std::size_t>(subset.size()), 500)) {
    const mnist::Batch batch = subset.gather(indices);
    const auto natural = model::predict(params, batch.images);
    const auto adversarial = model::predict(params, attacks::pgd(params, batch, attack));
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      clean += natural[i] == batch.labels[i];
      robust += adversarial[i] == batch.labels[i];
    }
  }
  const double n = static_cast<double>(std::max<Index>(subset.size(), 1));
  return {static_cast<double>(clean) / n, static_cast<double>(robust) / n, subset.size()};
}

}  // namespace

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::natural: return "natural";
    case Objective::madry: return "madry";
    case Objective::exp_integral: return "exp_integral";
  }
  return "?";
}

std::string_view to_string(Stabilization stabilization) {
  switch (stabilization) {
    case Stabilization::softmax_weighted: return "softmax_weighted";
    case Stabilization::raw_exp: return "raw_exp";
  }
  return "?";
}

Objective parse_objective(std::string_view text) {
  if (text == "natural") return Objective::natural;
  if (text == "madry") return Objective::madry;
  if (text == "exp_integral" || text == "exp") return Objective::exp_integral;
  throw std::invalid_argument("unknown objective '" + std::string(text) + "' (expected natural, madry or exp_integral)");
}

Stabilization parse_stabilization(std::string_view text) {
  if (text == "softmax_weighted") return Stabilization::softmax_weighted;
  if (text == "raw_exp") return Stabilization::raw_exp;
  throw std::invalid_argument("unknown stabilization '" + std::string(text) +
                              "' (expected softmax_weighted or raw_exp)");
}

void TrainConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("train: epsilon must be >= 0");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("train: lambda must be > 0");
  if (samples_per_image < 1) throw std::invalid_argument("train: samples_per_image must be >= 1");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate)) {
    throw std::invalid_argument("train: learning rate must be >= 0");
  }
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) {
    throw std::invalid_argument("train: momentum must lie in [0, 1)");
  }
  if (objective == Objective::exp_integral) sampler.validate();
  if (objective == Objective::madry) training_attack(*this, seed).validate();
}

SgdMomentum::SgdMomentum(const model::ModelParams& params) : velocity_(zero_like(params)) {}

void SgdMomentum::step(model::ModelParams& params, std::span<const Tensor> grads, const OptimizerConfig& config) {
  if (velocity_.empty()) velocity_ = zero_like(params);
  if (grads.size() != params.count() || velocity_.size() != params.count()) {
    throw std::invalid_argument("sgd: expected " + std::to_string(params.count()) + " gradients, got " +
                                std::to_string(grads.size()));
  }
  for (std::size_t i = 0; i < params.count(); ++i) {
    if (grads[i].shape() != params[i].shape()) {
      throw ShapeError("sgd", params.name(i) + ": gradient " + shape_str(grads[i].shape()) + " vs parameter " +
                                  shape_str(params[i].shape()));
    }
    velocity_[i].data() = config.momentum * velocity_[i].data() + grads[i].data();
    params[i].data() -= config.learning_rate * velocity_[i].data();
  }
}

TrainState initial_state(const TrainConfig& config) {
  TrainState state;
  state.params = model::init({config.arch, config.seed});
  state.optimizer = SgdMomentum(state.params);
  state.rng.seed(samplers::stream_seed(config.seed, kTrainStream));
  return state;
}

LossGradient loss_gradient(const model::ModelParams& params, const mnist::Batch& batch) {
  ad::Tape tape;
  const auto bound = model::bind(tape, params, true);
  ad::Var l = model::loss(bound, tape.constant(batch.images), batch.labels);
  const auto grads = tape.backward(l);
  LossGradient out{l.value().item(), {}};
  out.grads.reserve(bound.vars.size());
  for (const ad::Var& v : bound.vars) out.grads.push_back(grads[v]);
  return out;
}

std::vector<double> softmax_weights(std::span<const double> losses, double lambda) {
  std::vector<double> scaled(losses.begin(), losses.end());
  for (double& v : scaled) v *= lambda;
  return softmax(scaled);
}

ExpObjective exp_objective(const model::ModelParams& params, const mnist::Batch& copies, std::size_t k, double lambda,
                           Stabilization stabilization) {
  const Index kk = static_cast<Index>(k);
  if (k == 0 || copies.size() % kk != 0) {
    throw std::invalid_argument("exp_objective: " + std::to_string(copies.size()) +
                                " rows are not a whole number of groups of " + std::to_string(k));
  }
  const Index images = copies.size() / kk;
  const Index per_chunk = std::max<Index>(1, chunk_rows(params.arch()) / kk);
  const double inv_images = 1.0 / static_cast<double>(images);
  const double log_k = std::log(static_cast<double>(k));

  ExpObjective out;
  out.grads = zero_like(params);
  out.losses.reserve(static_cast<std::size_t>(copies.size()));
  out.weights.reserve(static_cast<std::size_t>(copies.size()));

  for (Index first = 0; first < images; first += per_chunk) {
    const Index last = std::min(images, first + per_chunk);
    const mnist::Batch chunk = slice(copies, first * kk, last * kk);
    ad::Tape tape;
    const auto bound = model::bind(tape, params, true);
    ad::Var per_copy = ad::softmax_cross_entropy(model::logits(bound, tape.constant(chunk.images)), chunk.labels);
    const Tensor& losses = per_copy.value();

    Tensor weights(losses.shape());
    for (Index i = 0; i < last - first; ++i) {
      const auto group = losses.values().subspan(static_cast<std::size_t>(i * kk), k);
      const auto w = softmax_weights(group, lambda);
      std::copy(w.begin(), w.end(), weights.raw() + i * kk);
      out.weight_entropy += entropy(w) * inv_images;
      if (stabilization == Stabilization::softmax_weighted) {
        std::vector<double> scaled(group.begin(), group.end());
        for (double& v : scaled) v *= lambda;
        out.objective += (log_sum_exp(scaled) - log_k) * inv_images;
      }
    }
    out.losses.insert(out.losses.end(), losses.values().begin(), losses.values().end());
    out.weights.insert(out.weights.end(), weights.values().begin(), weights.values().end());

    ad::Var total;
    if (stabilization == Stabilization::softmax_weighted) {
      total = ad::scale(ad::sum(ad::mul(per_copy, tape.constant(weights))), inv_images);
    } else {
      const double top = lambda * losses.data().maxCoeff();
      if (top > kRawExpLimit) {
        throw TrainingError("exp_objective: raw_exp overflow risk, max lambda*loss = " + std::to_string(top) +
                            " exceeds " + std::to_string(kRawExpLimit));
      }
      total = ad::scale(ad::sum(ad::exp(ad::scale(per_copy, lambda))), inv_images / static_cast<double>(k));
      out.objective += total.value().item();
    }
    const auto grads = tape.backward(total);
    for (std::size_t p = 0; p < bound.vars.size(); ++p) out.grads[p].data() += grads[bound.vars[p]].data();
  }
  return out;
}

mnist::Batch draw_copies(const samplers::SamplerSpec& spec, const mnist::Batch& batch, std::size_t k,
                         std::uint64_t stream) {
  const Index n = batch.size();
  const Index kk = static_cast<Index>(k);
  const Index per = batch.images.size() / std::max<Index>(n, 1);
  Shape shape = batch.images.shape();
  shape[0] = n * kk;
  mnist::Batch out{Tensor(shape), {}};
  out.labels.reserve(static_cast<std::size_t>(n * kk));
  samplers::SamplerSpec local = spec;
  local.seed = samplers::stream_seed(spec.seed, stream);
  for (Index i = 0; i < n; ++i) {
    Tensor image({1, mnist::kRows, mnist::kCols}, batch.images.data().segment(i * per, per));
    const auto drawn = samplers::perturbed_copies(local, image, k, static_cast<std::uint64_t>(i));
    for (Index j = 0; j < kk; ++j) {
      out.images.data().segment((i * kk + j) * per, per) = drawn[static_cast<std::size_t>(j)].data();
      out.labels.push_back(batch.labels[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

attacks::AttackConfig training_attack(const TrainConfig& config, std::uint64_t seed) {
  attacks::AttackConfig attack = config.attack;
  attack.family = attacks::AttackFamily::pgd;
  attack.epsilon = config.epsilon;
  attack.seed = seed;
  return attack;
}

StepResult natural_step(TrainState& state, const mnist::Batch& batch, const TrainConfig& config) {
  LossGradient lg = loss_gradient(state.params, batch);
  require_finite(lg.loss, "loss", state);
  require_finite(lg.grads, state);
  state.optimizer.step(state.params, lg.grads, config.optimizer);
  return {lg.loss, 0.0};
}

StepResult madry_adv_step(TrainState& state, const mnist::Batch& batch, const TrainConfig& config) {
  const auto attack = training_attack(config, state.rng());
  mnist::Batch adversarial{attacks::pgd(state.params, batch, attack), batch.labels};
  return natural_step(state, adversarial, config);
}

StepResult exp_objective_step(TrainState& state, const mnist::Batch& batch, const TrainConfig& config) {
  const auto k = static_cast<std::size_t>(config.samples_per_image);
  const mnist::Batch copies = draw_copies(config.sampler, batch, k, state.rng());
  ExpObjective obj = exp_objective(state.params, copies, k, config.lambda, config.stabilization);
  require_finite(obj.objective, "objective", state);
  require_finite(obj.grads, state);
  state.optimizer.step(state.params, obj.grads, config.optimizer);
  return {obj.objective, obj.weight_entropy};
}

StepResult step(TrainState& state, const mnist::Batch& batch, const TrainConfig& config) {
  switch (config.objective) {
    case Objective::natural: return natural_step(state, batch, config);
    case Objective::madry: return madry_adv_step(state, batch, config);
    case Objective::exp_integral: return exp_objective_step(state, batch, config);
  }
  throw std::invalid_argument("train: unknown objective");
}

void run_epoch(TrainState& state, const TrainConfig& config, const mnist::Dataset& train_set,
               const mnist::Dataset* test_set, const TrainCallbacks& callbacks) {
  using Clock = std::chrono::steady_clock;
  const auto order = mnist::batches(static_cast<std::size_t>(train_set.size()),
                                    static_cast<std::size_t>(config.batch_size), state.rng);
  for (const auto& indices : order) {
    const auto start = Clock::now();
    const StepResult r = step(state, train_set.gather(indices), config);
    ++state.iteration;
    if (callbacks.on_iteration) {
      const double ms = config.record_wall_time
                            ? std::chrono::duration<double, std::milli>(Clock::now() - start).count()
                            : 0.0;
      callbacks.on_iteration({state.iteration, state.epoch, r.objective, r.weight_entropy, ms});
    }
  }
  ++state.epoch;
  if (test_set && config.eval_limit >= 0 && !test_set->empty()) {
    const Accuracy acc = evaluate(state.params, *test_set, config);
    if (callbacks.on_epoch) callbacks.on_epoch({state.epoch, acc.clean, acc.attacked, acc.evaluated});
  } else if (callbacks.on_epoch) {
    callbacks.on_epoch({state.epoch, 0.0, 0.0, 0});
  }
}

TrainState train(const TrainConfig& config, const mnist::Dataset& train_set, const mnist::Dataset* test_set,
                 const TrainCallbacks& callbacks, std::optional<TrainState> resume) {
  config.validate();
  TrainState state = resume ? std::move(*resume) : initial_state(config);
  if (state.params.arch() != config.arch) throw std::invalid_argument("train: resumed state has a different architecture");
  while (state.epoch < config.epochs) run_epoch(state, config, train_set, test_set, callbacks);
  return state;
}

}  // namespace expadv::training
