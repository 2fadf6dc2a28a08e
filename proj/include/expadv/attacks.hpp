#pragma once

#include "expadv/mnist.hpp"
#include "expadv/model.hpp"

#include <cstdint>
#include <string_view>

namespace expadv::attacks {

enum class AttackFamily { fgsm, pgd, cw_margin_pgd };

std::string_view to_string(AttackFamily family);
AttackFamily parse_family(std::string_view text);

/// An l-infinity attack. The feasible set is {delta : |delta|_inf <= epsilon}
/// intersected with x + delta in [0,1]^n.
struct AttackConfig {
  AttackFamily family = AttackFamily::pgd;
  double epsilon = 0.3;
  int steps = 40;
  double step_size = 0.01;
  bool random_start = true;
  std::uint64_t seed = 0;

  /// 40 steps, step size epsilon/30, random start.
  static AttackConfig standard(AttackFamily family, double epsilon, std::uint64_t seed = 0);
  void validate() const;
};

/// x' = clip(x + eps * sign(grad_x L)).
Tensor fgsm(const model::ModelParams& params, const mnist::Batch& batch, const AttackConfig& config);
/// Iterated signed-gradient ascent on the cross-entropy with projection.
Tensor pgd(const model::ModelParams& params, const mnist::Batch& batch, const AttackConfig& config);
/// Same iteration, but driving the margin Z_y - max_{j!=y} Z_j down until it
/// clamps at 0 (the sample is misclassified).
Tensor cw_margin_pgd(const model::ModelParams& params, const mnist::Batch& batch, const AttackConfig& config);
/// Dispatches on config.family.
Tensor run(const model::ModelParams& params, const mnist::Batch& batch, const AttackConfig& config);

/// Gradient of the batch-mean cross-entropy with respect to the images.
Tensor input_gradient(const model::ModelParams& params, const Tensor& images, std::span<const int> labels);
/// Gradient of the summed clamped margin max(Z_y - max_{j!=y} Z_j, -kappa) w.r.t. the images.
Tensor margin_gradient(const model::ModelParams& params, const Tensor& images, std::span<const int> labels,
                       double kappa = 0.0);
/// Per-sample clamped margins max(Z_y - max_{j!=y} Z_j, -kappa).
std::vector<double> margins(const Tensor& logits, std::span<const int> labels, double kappa = 0.0);

/// Projects onto the epsilon box around `original`, then onto [0,1].
void project(Tensor& candidate, const Tensor& original, double epsilon);

struct PerturbationField {
  Tensor delta;
  double epsilon = 0.0;
};

class InfeasiblePerturbation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// delta = attacked - original; throws when the result leaves the feasible set.
PerturbationField extract_perturbations(const mnist::Batch& original, const Tensor& attacked, double epsilon);

}  // namespace expadv::attacks
