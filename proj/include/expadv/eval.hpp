#pragma once

#include "expadv/attacks.hpp"
#include "expadv/mnist.hpp"
#include "expadv/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace expadv::eval {

/// Fraction of samples whose argmax logit matches the label, after the attack
/// when one is given. Batches of 500; batch b attacks with seed stream b.
double accuracy(const model::ModelParams& params, const mnist::Dataset& dataset,
                const std::optional<attacks::AttackConfig>& attack = std::nullopt);

struct ReportRow {
  double epsilon = 0.0;
  std::string attack;
  double accuracy = 0.0;
  Index n = 0;
  std::string model_id;
  std::uint64_t seed = 0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::string config_hash;
  std::string timestamp;

  void validate() const;
};

inline constexpr std::string_view kReportHeader = "epsilon,attack,accuracy,n,model_id,seed";

/// One row per epsilon with the standard attack of `family` (40 steps, step
/// eps/30, random start). Epsilon 0 is evaluated without an attack.
EvalReport sweep(const model::ModelParams& params, const mnist::Dataset& dataset, std::span<const double> epsilons,
                 attacks::AttackFamily family, std::uint64_t seed, std::string model_id = "model");

/// CSV text; floats as fixed-point with six decimals, LF line endings.
std::string format_report(const EvalReport& report);
EvalReport parse_report(std::string_view text);
/// Writes the CSV and, when metadata is present, a `<path>.meta` sidecar.
void emit_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);

/// "start:stop:step" (inclusive of stop when it lies on the grid) or a
/// comma-separated list. Result must be nonempty and ascending.
std::vector<double> parse_eps_grid(std::string_view text);

}  // namespace expadv::eval
