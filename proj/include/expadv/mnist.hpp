#pragma once

#include "expadv/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace expadv::mnist {

inline constexpr Index kRows = 28;
inline constexpr Index kCols = 28;
inline constexpr Index kPixels = kRows * kCols;
inline constexpr std::uint32_t kImagesMagic = 0x00000803;
inline constexpr std::uint32_t kLabelsMagic = 0x00000801;

struct LabeledImage {
  Tensor pixels;  // [1,28,28], values in [0,1]
  int label = 0;
};

struct Batch {
  Tensor images;  // [B,1,28,28]
  std::vector<int> labels;

  Index size() const { return static_cast<Index>(labels.size()); }
};

class IdxError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch, bad_label };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// An in-memory MNIST split: one row of 784 normalized pixels per sample.
class Dataset {
 public:
  Dataset() = default;
  Dataset(RowMatrix<double> pixels, std::vector<int> labels);

  Index size() const { return static_cast<Index>(labels_.size()); }
  bool empty() const { return labels_.empty(); }
  const RowMatrix<double>& pixels() const { return pixels_; }
  const std::vector<int>& labels() const { return labels_; }

  LabeledImage at(Index i) const;
  Batch gather(std::span<const std::size_t> indices) const;
  Batch all() const;
  /// First `limit` samples (all when limit is 0 or exceeds the size).
  Dataset head(Index limit) const;

 private:
  RowMatrix<double> pixels_;
  std::vector<int> labels_;
};

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Loads `<dir>/{train,t10k}-images-idx3-ubyte` with the matching labels file.
Dataset load_split(const std::filesystem::path& dir, bool train);

/// Batch index lists covering [0, n) exactly once; the last batch may be short.
/// Without a seed the order is sequential.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed = std::nullopt);
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng);

/// Concatenates images along the batch axis (all must be [*,1,28,28]).
Batch concat(std::span<const Batch> parts);

}  // namespace expadv::mnist
