#pragma once

#include "expadv/mnist.hpp"
#include "expadv/tensor.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <random>
#include <string>

namespace testing_support {

using expadv::Index;
using expadv::Shape;
using expadv::Tensor;

/// MNIST directory from EXPADV_DATA_DIR or the default location, if the files are there.
inline std::optional<std::filesystem::path> mnist_dir() {
  std::filesystem::path dir = EXPADV_DEFAULT_DATA_DIR;
  if (const char* env = std::getenv("EXPADV_DATA_DIR"); env && *env) dir = env;
  if (std::filesystem::exists(dir / "train-images-idx3-ubyte") && std::filesystem::exists(dir / "t10k-images-idx3-ubyte")) {
    return dir;
  }
  return std::nullopt;
}

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

/// A fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("expadv_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Images in [0,1] with labels 0..9, enough structure for quick model checks.
inline expadv::mnist::Dataset synthetic_dataset(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  expadv::RowMatrix<double> pixels(n, expadv::mnist::kPixels);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 10);
    labels[static_cast<std::size_t>(i)] = label;
    for (Index p = 0; p < expadv::mnist::kPixels; ++p) {
      const bool lit = (p / 78) == label;
      pixels(i, p) = lit ? 0.6 + 0.4 * u(rng) : 0.2 * u(rng);
    }
  }
  return expadv::mnist::Dataset(std::move(pixels), std::move(labels));
}

}  // namespace testing_support
