#include "expadv/attacks.hpp"

#include "expadv/numeric.hpp"

#include <cassert>
#include <cmath>
#include <random>

namespace expadv::attacks {

std::string_view to_string(AttackFamily family) {
  switch (family) {
    case AttackFamily::fgsm: return "fgsm";
    case AttackFamily::pgd: return "pgd";
    case AttackFamily::cw_margin_pgd: return "cw_margin_pgd";
  }
  return "?";
}

AttackFamily parse_family(std::string_view text) {
  if (text == "fgsm") return AttackFamily::fgsm;
  if (text == "pgd") return AttackFamily::pgd;
  if (text == "cw_margin_pgd" || text == "cw") return AttackFamily::cw_margin_pgd;
  throw std::invalid_argument("unknown attack '" + std::string(text) + "' (expected fgsm, pgd or cw_margin_pgd)");
}

AttackConfig AttackConfig::standard(AttackFamily family, double epsilon, std::uint64_t seed) {
  AttackConfig c;
  c.family = family;
  c.epsilon = epsilon;
  c.steps = 40;
  c.step_size = epsilon > 0.0 ? epsilon / 30.0 : 0.01;
  c.random_start = true;
  c.seed = seed;
  return c;
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("attack: epsilon must be >= 0");
  if (steps < 1) throw std::invalid_argument("attack: steps must be >= 1");
  if (!(step_size > 0.0)) throw std::invalid_argument("attack: step size must be > 0");
}

namespace {

void check_feasible([[maybe_unused]] const Tensor& attacked, [[maybe_unused]] const Tensor& original,
                    [[maybe_unused]] double epsilon) {
#ifndef NDEBUG
  for (Index i = 0; i < attacked.size(); ++i) {
    assert(std::abs(attacked[i] - original[i]) <= epsilon + 1e-9);
    assert(attacked[i] >= 0.0 && attacked[i] <= 1.0);
  }
#endif
}

Tensor signed_step(const Tensor& x, const Tensor& grad, double size) {
  Tensor out = x;
  for (Index i = 0; i < out.size(); ++i) out[i] += size * sign(grad[i]);
  return out;
}

// Shared iteration for pgd and cw_margin_pgd. `ascent` returns the direction to
// move in (already signed so that following it strengthens the attack).
template <typename Direction>
Tensor projected_iteration(const mnist::Batch& batch, const AttackConfig& config, Direction ascent) {
  config.validate();
  const Tensor& x = batch.images;
  Tensor current = x;
  if (config.random_start) {
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> start(-config.epsilon, config.epsilon);
    for (double& v : current.values()) v += start(rng);
    project(current, x, config.epsilon);
  }
  for (int t = 0; t < config.steps; ++t) {
    current = signed_step(current, ascent(current), config.step_size);
    project(current, x, config.epsilon);
  }
  check_feasible(current, x, config.epsilon);
  return current;
}

}  // namespace

void project(Tensor& candidate, const Tensor& original, double epsilon) {
  if (candidate.shape() != original.shape()) {
    throw ShapeError("project", shape_str(candidate.shape()) + " vs " + shape_str(original.shape()));
  }
  for (Index i = 0; i < candidate.size(); ++i) {
    const double lo = original[i] - epsilon;
    const double hi = original[i] + epsilon;
    candidate[i] = std::clamp(std::clamp(candidate[i], lo, hi), 0.0, 1.0);
  }
}

Tensor input_gradient(const model::ModelParams& params, const Tensor& images, std::span<const int> labels) {
  ad::Tape tape;
  const auto bound = model::bind(tape, params, false);
  ad::Var x = tape.leaf(images, true);
  ad::Var l = model::loss(bound, x, labels);
  return tape.backward(l)[x];
}

std::vector<double> margins(const Tensor& logits, std::span<const int> labels, double kappa) {
  const Index rows = logits.dim(0), classes = logits.dim(1);
  const auto z = logits.matrix(rows, classes);
  std::vector<double> out(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    double other = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < classes; ++j) {
      if (j != y) other = std::max(other, z(r, j));
    }
    out[static_cast<std::size_t>(r)] = std::max(z(r, y) - other, -kappa);
  }
  return out;
}

Tensor margin_gradient(const model::ModelParams& params, const Tensor& images, std::span<const int> labels,
                       double kappa) {
  ad::Tape tape;
  const auto bound = model::bind(tape, params, false);
  ad::Var x = tape.leaf(images, true);
  ad::Var z = model::logits(bound, x);
  const Tensor& zv = z.value();
  const Index rows = zv.dim(0), classes = zv.dim(1);
  const auto zm = zv.matrix(rows, classes);
  // d margin / d logits is e_y - e_{j*} while unclamped, zero once clamped.
  Tensor seed(zv.shape());
  auto sm = seed.matrix(rows, classes);
  for (Index r = 0; r < rows; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    Index best = y == 0 ? 1 : 0;
    for (Index j = 0; j < classes; ++j) {
      if (j != y && zm(r, j) > zm(r, best)) best = j;
    }
    if (zm(r, y) - zm(r, best) > -kappa) {
      sm(r, y) = 1.0;
      sm(r, best) = -1.0;
    }
  }
  return tape.backward(z, seed)[x];
}

Tensor fgsm(const model::ModelParams& params, const mnist::Batch& batch, const AttackConfig& config) {
  config.validate();
  const Tensor g = input_gradient(params, batch.images, batch.labels);
  Tensor out = signed_step(batch.images, g, config.epsilon);
  project(out, batch.images, config.epsilon);
  check_feasible(out, batch.images, config.epsilon);
  return out;
}

Tensor pgd(const model::ModelParams& params, const mnist::Batch& batch, const AttackConfig& config) {
  return projected_iteration(batch, config, [&](const Tensor& current) {
    return input_gradient(params, current, batch.labels);
  });
}

Tensor cw_margin_pgd(const model::ModelParams& params, const mnist::Batch& batch, const AttackConfig& config) {
  return projected_iteration(batch, config, [&](const Tensor& current) {
    Tensor g = margin_gradient(params, current, batch.labels, 0.0);
    g.data() = -g.data();
    return g;
  });
}

Tensor run(const model::ModelParams& params, const mnist::Batch& batch, const AttackConfig& config) {
  switch (config.family) {
    case AttackFamily::fgsm: return fgsm(params, batch, config);
    case AttackFamily::pgd: return pgd(params, batch, config);
    case AttackFamily::cw_margin_pgd: return cw_margin_pgd(params, batch, config);
  }
  throw std::invalid_argument("attack: unknown family");
}

PerturbationField extract_perturbations(const mnist::Batch& original, const Tensor& attacked, double epsilon) {
  if (attacked.shape() != original.images.shape()) {
    throw ShapeError("extract_perturbations", shape_str(attacked.shape()) + " vs " + shape_str(original.images.shape()));
  }
  PerturbationField field{Tensor(attacked.shape()), epsilon};
  field.delta.data() = attacked.data() - original.images.data();
  for (Index i = 0; i < attacked.size(); ++i) {
    if (std::abs(field.delta[i]) > epsilon + 1e-9) {
      throw InfeasiblePerturbation("extract_perturbations: |delta| = " + std::to_string(std::abs(field.delta[i])) +
                                   " exceeds epsilon " + std::to_string(epsilon) + " at index " + std::to_string(i));
    }
    if (attacked[i] < 0.0 || attacked[i] > 1.0) {
      throw InfeasiblePerturbation("extract_perturbations: attacked pixel outside [0,1] at index " + std::to_string(i));
    }
  }
  return field;
}

}  // namespace expadv::attacks
