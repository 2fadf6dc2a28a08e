#include "expadv/mnist.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>

namespace expadv::mnist {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw IdxError(IdxError::Kind::truncated, path.string() + ": header truncated");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

Dataset::Dataset(RowMatrix<double> pixels, std::vector<int> labels) : pixels_(std::move(pixels)), labels_(std::move(labels)) {
  if (pixels_.rows() != static_cast<Index>(labels_.size()) || (pixels_.rows() > 0 && pixels_.cols() != kPixels)) {
    throw ShapeError("dataset", "pixel matrix " + std::to_string(pixels_.rows()) + "x" + std::to_string(pixels_.cols()) +
                                    " with " + std::to_string(labels_.size()) + " labels");
  }
}

LabeledImage Dataset::at(Index i) const {
  Tensor t({1, kRows, kCols});
  t.matrix(1, kPixels) = pixels_.row(i);
  return {std::move(t), labels_.at(static_cast<std::size_t>(i))};
}

Batch Dataset::gather(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw std::invalid_argument("gather: empty index list");
  const auto b = static_cast<Index>(indices.size());
  Batch out{Tensor({b, 1, kRows, kCols}), {}};
  auto m = out.images.matrix(b, kPixels);
  out.labels.reserve(indices.size());
  for (Index r = 0; r < b; ++r) {
    const std::size_t i = indices[static_cast<std::size_t>(r)];
    m.row(r) = pixels_.row(static_cast<Index>(i));
    out.labels.push_back(labels_.at(i));
  }
  return out;
}

Batch Dataset::all() const {
  std::vector<std::size_t> idx(labels_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return gather(idx);
}

Dataset Dataset::head(Index limit) const {
  if (limit <= 0 || limit >= size()) return *this;
  return Dataset(pixels_.topRows(limit), std::vector<int>(labels_.begin(), labels_.begin() + limit));
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  if (read_be32(img, 0, images) != kImagesMagic) throw IdxError(IdxError::Kind::bad_magic, images.string() + ": not an IDX image file");
  if (read_be32(lab, 0, labels) != kLabelsMagic) throw IdxError(IdxError::Kind::bad_magic, labels.string() + ": not an IDX label file");
  const std::size_t count = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t label_count = read_be32(lab, 4, labels);
  if (rows != kRows || cols != kCols) {
    throw IdxError(IdxError::Kind::bad_magic, images.string() + ": expected 28x28 images, got " + std::to_string(rows) +
                                                  "x" + std::to_string(cols));
  }
  if (img.size() < 16 + count * rows * cols) throw IdxError(IdxError::Kind::truncated, images.string() + ": pixel data truncated");
  if (lab.size() < 8 + label_count) throw IdxError(IdxError::Kind::truncated, labels.string() + ": label data truncated");
  if (count != label_count) {
    throw IdxError(IdxError::Kind::count_mismatch, "image count " + std::to_string(count) + " != label count " +
                                                       std::to_string(label_count));
  }
  RowMatrix<double> pixels(static_cast<Index>(count), kPixels);
  const unsigned char* p = img.data() + 16;
  for (Index r = 0; r < pixels.rows(); ++r) {
    for (Index c = 0; c < kPixels; ++c) pixels(r, c) = static_cast<double>(*p++) / 255.0;
  }
  std::vector<int> ys(count);
  for (std::size_t i = 0; i < count; ++i) {
    ys[i] = lab[8 + i];
    if (ys[i] > 9) throw IdxError(IdxError::Kind::bad_label, labels.string() + ": label out of range at " + std::to_string(i));
  }
  return Dataset(std::move(pixels), std::move(ys));
}

Dataset load_split(const std::filesystem::path& dir, bool train) {
  const std::string prefix = train ? "train" : "t10k";
  return load_idx(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"));
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
  if (batch_size == 0) throw std::invalid_argument("batches: batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed) {
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    return batches(n, batch_size, rng);
  }
  if (batch_size == 0) throw std::invalid_argument("batches: batch size must be >= 1");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> b(std::min(n, start + batch_size) - start);
    std::iota(b.begin(), b.end(), start);
    out.push_back(std::move(b));
  }
  return out;
}

Batch concat(std::span<const Batch> parts) {
  Index total = 0;
  for (const Batch& p : parts) total += p.size();
  if (total == 0) throw std::invalid_argument("concat: no samples");
  Batch out{Tensor({total, 1, kRows, kCols}), {}};
  auto m = out.images.matrix(total, kPixels);
  Index row = 0;
  for (const Batch& p : parts) {
    m.middleRows(row, p.size()) = p.images.matrix(p.size(), kPixels);
    row += p.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

}  // namespace expadv::mnist
