#pragma once

#include "expadv/training.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace expadv::checkpoint {

inline constexpr char kMagic[8] = {'E', 'X', 'P', 'A', 'D', 'V', '0', '1'};
inline constexpr int kVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, version, corrupt };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Training state plus the settings that produced it.
struct Checkpoint {
  model::ModelParams params;
  std::vector<Tensor> velocity;
  int epoch = 0;
  std::uint64_t iteration = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, std::string>> config;
};

Checkpoint capture(const training::TrainState& state, std::vector<std::pair<std::string, std::string>> config = {});
training::TrainState restore(const Checkpoint& checkpoint);

/// Layout: 8-byte magic, u64 header length, key=value header text, then every
/// parameter and velocity tensor as little-endian float64 in header order.
std::string encode(const Checkpoint& checkpoint);
Checkpoint decode(std::string_view bytes);

void save(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);
/// Parameters only; works for any checkpoint file.
model::ModelParams load_params(const std::filesystem::path& path);

}  // namespace expadv::checkpoint
