#include "expadv/dct.hpp"
#include "expadv/samplers.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace expadv;
using samplers::Histogram;
using samplers::SamplerKind;
using samplers::SamplerSpec;

namespace {

double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, std::abs(static_cast<double>(i + 1) / n - f), std::abs(f - static_cast<double>(i) / n)});
  }
  return d;
}

SamplerSpec uniform_spec(double eps, std::uint64_t seed = 1) {
  SamplerSpec s;
  s.kind = SamplerKind::uniform;
  s.epsilon = eps;
  s.seed = seed;
  return s;
}

SamplerSpec laplacian_spec(double mu, double b, std::uint64_t seed = 1) {
  SamplerSpec s;
  s.kind = SamplerKind::dct_laplacian;
  s.epsilon = 0.3;
  s.laplacian = samplers::LaplacianParams{mu, b};
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Uniform, ZeroEpsilonGivesZeros) {
  for (const Tensor& t : samplers::uniform_sample(uniform_spec(0.0), {1, 28, 28}, 3)) {
    EXPECT_EQ(t.data().cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Uniform, MomentsMatch) {
  const double eps = 0.3;
  const auto draws = samplers::uniform_sample(uniform_spec(eps, 9), {1000}, 1000);
  double sum = 0.0, sq = 0.0, n = 0.0;
  for (const Tensor& t : draws) {
    sum += t.data().sum();
    sq += t.data().squaredNorm();
    n += static_cast<double>(t.size());
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  EXPECT_LT(std::abs(mean), 3.0 * (2.0 * eps / std::sqrt(12.0)) / 1e3);
  EXPECT_NEAR(var, eps * eps / 3.0, 0.02 * eps * eps / 3.0);
  for (const Tensor& t : draws) ASSERT_LE(t.data().cwiseAbs().maxCoeff(), eps);
}

TEST(Uniform, DeterministicPerSeedAndStream) {
  const auto a = samplers::uniform_sample(uniform_spec(0.1, 4), {5}, 2, 7);
  const auto b = samplers::uniform_sample(uniform_spec(0.1, 4), {5}, 2, 7);
  const auto c = samplers::uniform_sample(uniform_spec(0.1, 4), {5}, 2, 8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Histogram, AllZeroValuesGoToOneBin) {
  const std::vector<double> v(100, 0.0);
  const auto h = Histogram::fit(v);
  EXPECT_EQ(h.bins(), 256u);
  EXPECT_EQ(h.mass()[0], 1.0);
  EXPECT_EQ(*std::max_element(h.mass().begin() + 1, h.mass().end()), 0.0);
}

TEST(Histogram, TwoValuesTwoBins) {
  std::vector<double> v(50, -0.3);
  v.insert(v.end(), 50, 0.0);
  const auto h = Histogram::fit(v);
  EXPECT_DOUBLE_EQ(h.mass().front(), 0.5);
  EXPECT_DOUBLE_EQ(h.mass().back(), 0.5);
  int nonzero = 0;
  for (double m : h.mass()) nonzero += m > 0.0;
  EXPECT_EQ(nonzero, 2);
  EXPECT_NEAR(h.cumulative().back(), 1.0, 1e-9);
  EXPECT_TRUE(std::is_sorted(h.cumulative().begin(), h.cumulative().end()));
}

TEST(Histogram, InverseCdfAtZeroIsLeftEdgeOfFirstNonemptyBin) {
  std::vector<double> mass(4, 0.0);
  mass[2] = 0.25;
  mass[3] = 0.75;
  const Histogram h(0.0, 4.0, mass);
  EXPECT_DOUBLE_EQ(h.inverse_cdf(0.0), 2.0);
  EXPECT_DOUBLE_EQ(h.inverse_cdf(0.125), 2.5);
  EXPECT_DOUBLE_EQ(h.inverse_cdf(1.0), 4.0);
  EXPECT_THROW(Histogram(0.0, 1.0, {0.5, 0.4}), std::invalid_argument);
}

TEST(Empirical, SingleBinGivesConstantField) {
  SamplerSpec s;
  s.kind = SamplerKind::empirical_pixel;
  s.histogram = Histogram::fit(std::vector<double>(10, 0.07));
  for (const Tensor& t : samplers::empirical_sample(s, {1, 28, 28}, 2)) {
    EXPECT_NEAR(t.data().minCoeff(), 0.07, 1e-15);
    EXPECT_NEAR(t.data().maxCoeff(), 0.07, 1e-15);
  }
}

TEST(Empirical, KolmogorovSmirnovAgainstSourceHistogram) {
  std::mt19937_64 rng(3);
  std::vector<double> source;
  std::normal_distribution<double> n(0.0, 0.1);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int i = 0; i < 20000; ++i) source.push_back(i % 3 ? std::clamp(n(rng), -0.3, 0.3) : u(rng));
  SamplerSpec s;
  s.kind = SamplerKind::empirical_pixel;
  s.epsilon = 0.3;
  s.histogram = Histogram::fit(source);
  s.seed = 12;
  const auto draws = samplers::empirical_sample(s, {1000}, 100);
  std::vector<double> pooled;
  for (const Tensor& t : draws) pooled.insert(pooled.end(), t.values().begin(), t.values().end());
  ASSERT_EQ(pooled.size(), 100000u);
  EXPECT_LE(ks_distance(pooled, [&](double x) { return s.histogram->cdf(x); }), 0.01);
}

TEST(Empirical, MissingHistogramIsRejected) {
  SamplerSpec s;
  s.kind = SamplerKind::empirical_pixel;
  EXPECT_THROW(samplers::empirical_sample(s, {4}, 1), samplers::MissingPayload);
  SamplerSpec l;
  l.kind = SamplerKind::dct_laplacian;
  EXPECT_THROW(samplers::dct_laplacian_sample(l, Tensor({1, 28, 28}), 1), samplers::MissingPayload);
}

TEST(Laplacian, DegenerateAndHandComputedFits) {
  const std::vector<double> same(7, 0.4);
  const auto a = samplers::fit_laplacian(same);
  EXPECT_EQ(a.location, 0.4);
  EXPECT_EQ(a.scale, 1e-12);
  const std::vector<double> three{-1.0, 0.0, 1.0};
  const auto b = samplers::fit_laplacian(three);
  EXPECT_EQ(b.location, 0.0);
  EXPECT_NEAR(b.scale, 2.0 / 3.0, 1e-15);
  EXPECT_THROW(samplers::fit_laplacian(std::span<const double>{}), std::invalid_argument);
}

TEST(Laplacian, RecoversSyntheticScale) {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> e(1.0 / 0.05);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> v(100000);
  for (double& x : v) x = coin(rng) ? e(rng) : -e(rng);
  const auto fit = samplers::fit_laplacian(v);
  EXPECT_NEAR(fit.scale, 0.05, 0.02 * 0.05);
  EXPECT_NEAR(fit.location, 0.0, 0.002);
}

TEST(Laplacian, InverseCdfIsSymmetric) {
  const samplers::LaplacianParams p{0.1, 0.2};
  EXPECT_DOUBLE_EQ(samplers::laplacian_inverse_cdf(p, 0.5), 0.1);
  EXPECT_NEAR(samplers::laplacian_inverse_cdf(p, 0.75) - 0.1, 0.1 - samplers::laplacian_inverse_cdf(p, 0.25), 1e-15);
  // P(X <= mu + b ln 2) = 3/4 for a Laplacian.
  EXPECT_NEAR(samplers::laplacian_inverse_cdf(p, 0.75), 0.1 + 0.2 * std::log(2.0), 1e-14);
}

TEST(DctLaplacian, ZeroNoiseReturnsInput) {
  std::mt19937_64 rng(6);
  const Tensor image = testing_support::random_tensor({1, 28, 28}, rng, 0.1, 0.9);
  for (const Tensor& t : samplers::dct_laplacian_sample(laplacian_spec(0.0, 1e-12), image, 3)) {
    EXPECT_LT(max_abs_difference(t, image), 1e-9);
  }
}

TEST(DctLaplacian, OutputsInUnitIntervalAndDistortionGrowsWithScale) {
  std::mt19937_64 rng(7);
  const Tensor image = testing_support::random_tensor({1, 28, 28}, rng, 0.0, 1.0);
  double previous = 0.0;
  for (double b : {0.01, 0.05, 0.1}) {
    const auto copies = samplers::dct_laplacian_sample(laplacian_spec(0.0, b, 3), image, 100);
    double mean_l2 = 0.0;
    for (const Tensor& t : copies) {
      ASSERT_GE(t.data().minCoeff(), 0.0);
      ASSERT_LE(t.data().maxCoeff(), 1.0);
      mean_l2 += (t.data() - image.data()).norm() / 100.0;
    }
    EXPECT_GT(mean_l2, previous) << "b = " << b;
    previous = mean_l2;
  }
}

TEST(DctLaplacian, OptionalLinfProjection) {
  std::mt19937_64 rng(8);
  const Tensor image = testing_support::random_tensor({1, 28, 28}, rng, 0.0, 1.0);
  auto spec = laplacian_spec(0.0, 0.2, 2);
  spec.epsilon = 0.1;
  spec.project_linf = true;
  for (const Tensor& t : samplers::perturbed_copies(spec, image, 5)) {
    EXPECT_LE((t.data() - image.data()).cwiseAbs().maxCoeff(), 0.1 + 1e-12);
  }
}

TEST(PerturbedCopies, PixelKindsRespectBudgetAndRange) {
  std::mt19937_64 rng(9);
  const Tensor image = testing_support::random_tensor({1, 28, 28}, rng, 0.0, 1.0);
  SamplerSpec wide;
  wide.kind = SamplerKind::empirical_pixel;
  wide.epsilon = 0.1;
  wide.histogram = Histogram(-0.5, 0.5, std::vector<double>(10, 0.1));
  for (const SamplerSpec& s : {uniform_spec(0.1, 3), wide}) {
    const auto a = samplers::perturbed_copies(s, image, 10, 4);
    EXPECT_EQ(a, samplers::perturbed_copies(s, image, 10, 4));
    for (const Tensor& t : a) {
      EXPECT_LE((t.data() - image.data()).cwiseAbs().maxCoeff(), 0.1 + 1e-12);
      EXPECT_GE(t.data().minCoeff(), 0.0);
      EXPECT_LE(t.data().maxCoeff(), 1.0);
    }
  }
}

TEST(DctEmpirical, DrawsLiveInCoefficientDomain) {
  std::mt19937_64 rng(10);
  const Tensor image = testing_support::random_tensor({1, 28, 28}, rng, 0.2, 0.8);
  SamplerSpec s;
  s.kind = SamplerKind::dct_empirical;
  s.epsilon = 0.3;
  s.histogram = Histogram::fit(std::vector<double>(5, 0.0));
  for (const Tensor& t : samplers::perturbed_copies(s, image, 2)) EXPECT_LT(max_abs_difference(t, image), 1e-9);
}

TEST(Serialization, RoundTripIsExact) {
  SamplerSpec s;
  s.kind = SamplerKind::dct_empirical;
  s.epsilon = 0.3;
  s.seed = 77;
  s.project_linf = true;
  s.histogram = Histogram(-0.123456789, 0.3, {0.1, 0.2, 0.3, 0.4});
  s.laplacian = samplers::LaplacianParams{0.01, 0.05};
  const auto t = samplers::deserialize(samplers::serialize(s));
  EXPECT_EQ(t.kind, s.kind);
  EXPECT_EQ(t.epsilon, s.epsilon);
  EXPECT_EQ(t.seed, s.seed);
  EXPECT_EQ(t.project_linf, true);
  EXPECT_EQ(t.histogram->lower(), s.histogram->lower());
  EXPECT_EQ(t.histogram->mass(), s.histogram->mass());
  EXPECT_EQ(t.laplacian->scale, 0.05);

  const auto dir = testing_support::scratch_dir("sampler");
  samplers::save(s, dir / "a.sampler");
  EXPECT_EQ(samplers::serialize(samplers::load(dir / "a.sampler")), samplers::serialize(s));
  EXPECT_THROW(samplers::deserialize("kind=uniform\nflavour=vanilla\n"), std::invalid_argument);
}

TEST(StreamSeed, DistinctStreams) {
  EXPECT_NE(samplers::stream_seed(1, 0), samplers::stream_seed(1, 1));
  EXPECT_NE(samplers::stream_seed(1, 0), samplers::stream_seed(2, 0));
  EXPECT_EQ(samplers::stream_seed(5, 9), samplers::stream_seed(5, 9));
}
