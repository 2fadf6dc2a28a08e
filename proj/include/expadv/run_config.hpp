#pragma once

#include "expadv/attacks.hpp"
#include "expadv/samplers.hpp"
#include "expadv/training.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace expadv::cli {

/// Bad or missing user input; the CLI maps it to exit code 1.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct KeySpec {
  std::string name;
  std::string default_value;
  std::string help;
  std::vector<std::string> aliases;
};

/// Flat key=value configuration. Every key has a default; unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<KeySpec>& keys();
  static bool known(std::string_view key);

  const std::string& get(std::string_view key) const;
  void set(std::string_view key, std::string value);
  /// Applies "key=value" lines; blank lines and lines starting with '#' are skipped.
  void merge_text(std::string_view text, std::string_view origin);
  void merge_file(const std::filesystem::path& path);

  double number(std::string_view key) const;
  long long integer(std::string_view key) const;
  std::uint64_t unsigned_integer(std::string_view key) const;
  bool flag(std::string_view key) const;

  /// Every key in declaration order, one "key=value" per line.
  std::string format() const;
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// FNV-1a of format(), as 16 hex digits.
  std::string hash() const;

  /// Fills data_dir from EXPADV_DATA_DIR when unset and makes paths absolute.
  void resolve();

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

training::TrainConfig train_config(const RunConfig& config);
attacks::AttackConfig attack_config(const RunConfig& config, double epsilon);

}  // namespace expadv::cli
