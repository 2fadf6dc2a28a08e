#include "expadv/mnist.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

using namespace expadv;
using mnist::IdxError;

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxPair {
  std::filesystem::path images, labels;
};

// Writes a tiny IDX pair whose pixel bytes are (i * 7 + p) mod 256.
IdxPair write_idx(const std::string& name, std::uint32_t count, std::uint32_t label_count,
                  std::uint32_t image_magic = mnist::kImagesMagic, std::size_t drop_bytes = 0) {
  const auto dir = testing_support::scratch_dir(name);
  IdxPair p{dir / "images", dir / "labels"};
  {
    std::ofstream out(p.images, std::ios::binary);
    put_u32(out, image_magic);
    put_u32(out, count);
    put_u32(out, 28);
    put_u32(out, 28);
    const std::size_t n = count * 784 - drop_bytes;
    for (std::size_t i = 0; i < n; ++i) out.put(static_cast<char>((i / 784 * 7 + i % 784) % 256));
  }
  {
    std::ofstream out(p.labels, std::ios::binary);
    put_u32(out, mnist::kLabelsMagic);
    put_u32(out, label_count);
    for (std::uint32_t i = 0; i < label_count; ++i) out.put(static_cast<char>(i % 10));
  }
  return p;
}

}  // namespace

TEST(Idx, BytesAreNormalized) {
  const auto p = write_idx("norm", 3, 3);
  const auto ds = mnist::load_idx(p.images, p.labels);
  ASSERT_EQ(ds.size(), 3);
  EXPECT_EQ(ds.pixels()(0, 0), 0.0);
  EXPECT_EQ(ds.pixels()(0, 255), 1.0);
  EXPECT_DOUBLE_EQ(ds.pixels()(1, 3), 10.0 / 255.0);
  EXPECT_EQ(ds.labels()[2], 2);
  const auto item = ds.at(1);
  EXPECT_EQ(item.pixels.shape(), (Shape{1, 28, 28}));
  EXPECT_EQ(item.label, 1);
}

TEST(Idx, ErrorsAreDistinct) {
  auto kind_of = [](const IdxPair& p) {
    try {
      mnist::load_idx(p.images, p.labels);
    } catch (const IdxError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "expected IdxError";
    return IdxError::Kind::io;
  };
  EXPECT_EQ(kind_of(write_idx("magic", 2, 2, 0x00000802)), IdxError::Kind::bad_magic);
  EXPECT_EQ(kind_of(write_idx("trunc", 2, 2, mnist::kImagesMagic, 10)), IdxError::Kind::truncated);
  EXPECT_EQ(kind_of(write_idx("count", 2, 3)), IdxError::Kind::count_mismatch);
  EXPECT_EQ(kind_of({"/nonexistent/images", "/nonexistent/labels"}), IdxError::Kind::io);
}

TEST(Idx, PixelSumMatchesByteSum) {
  const auto p = write_idx("hist", 4, 4);
  const auto ds = mnist::load_idx(p.images, p.labels);
  double bytes = 0.0;
  for (std::size_t i = 0; i < 4 * 784; ++i) bytes += static_cast<double>((i / 784 * 7 + i % 784) % 256);
  EXPECT_NEAR(ds.pixels().sum(), bytes / 255.0, 1e-9);
}

TEST(Batches, SizesAndCoverage) {
  const auto b = mnist::batches(10, 3);
  ASSERT_EQ(b.size(), 4u);
  EXPECT_EQ(b[0].size(), 3u);
  EXPECT_EQ(b[3].size(), 1u);
  EXPECT_EQ(b[0][0], 0u);
}

TEST(Batches, SeededShuffleIsDeterministicPermutation) {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto a = mnist::batches(103, 10, seed);
    const auto b = mnist::batches(103, 10, seed);
    EXPECT_EQ(a, b);
    std::vector<std::size_t> all;
    for (const auto& batch : a) all.insert(all.end(), batch.begin(), batch.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(103);
    std::iota(expected.begin(), expected.end(), 0u);
    EXPECT_EQ(all, expected);
  }
  EXPECT_NE(mnist::batches(103, 10, 1u), mnist::batches(103, 10));
}

TEST(Dataset, GatherBuildsBatches) {
  const auto ds = testing_support::synthetic_dataset(20, 1);
  const std::vector<std::size_t> idx{3, 7};
  const auto batch = ds.gather(idx);
  EXPECT_EQ(batch.images.shape(), (Shape{2, 1, 28, 28}));
  EXPECT_EQ(batch.labels, (std::vector<int>{3, 7}));
  EXPECT_EQ(batch.images[784 + 5], ds.pixels()(7, 5));
  EXPECT_EQ(ds.head(5).size(), 5);
  EXPECT_EQ(ds.head(0).size(), 20);
}

TEST(Idx, StandardFilesHaveStandardCounts) {
  const auto dir = testing_support::mnist_dir();
  if (!dir) GTEST_SKIP() << "MNIST not available";
  const auto train = mnist::load_split(*dir, true);
  const auto test = mnist::load_split(*dir, false);
  EXPECT_EQ(train.size(), 60000);
  EXPECT_EQ(test.size(), 10000);
  EXPECT_GE(test.pixels().minCoeff(), 0.0);
  EXPECT_LE(test.pixels().maxCoeff(), 1.0);
  for (int y : test.labels()) ASSERT_TRUE(y >= 0 && y <= 9);
}
