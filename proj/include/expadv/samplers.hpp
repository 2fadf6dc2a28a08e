#pragma once

#include "expadv/attacks.hpp"
#include "expadv/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace expadv::samplers {

enum class SamplerKind { uniform, empirical_pixel, dct_laplacian, dct_empirical };

std::string_view to_string(SamplerKind kind);
SamplerKind parse_kind(std::string_view text);
/// True for kinds whose draws live in the DCT coefficient domain.
bool is_dct(SamplerKind kind);

inline constexpr std::size_t kDefaultBins = 256;

/// Equal-width histogram over [lower, upper] with normalized bin masses.
class Histogram {
 public:
  Histogram() = default;
  Histogram(double lower, double upper, std::vector<double> mass);

  /// Pools the values into `bins` bins spanning [min, max]. The maximum lands
  /// in the last bin. When min == max all mass goes to the first bin.
  static Histogram fit(std::span<const double> values, std::size_t bins = kDefaultBins);

  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }
  std::size_t bins() const noexcept { return mass_.size(); }
  double width() const noexcept { return (upper_ - lower_) / static_cast<double>(mass_.size()); }
  const std::vector<double>& mass() const noexcept { return mass_; }
  const std::vector<double>& cumulative() const noexcept { return cumulative_; }

  /// Piecewise-uniform inverse CDF: picks the bin by cumulative mass and
  /// places the value uniformly inside it. u in [0,1].
  double inverse_cdf(double u) const;
  /// CDF of the same piecewise-uniform density.
  double cdf(double x) const;

 private:
  double lower_ = 0.0;
  double upper_ = 0.0;
  std::vector<double> mass_;
  std::vector<double> cumulative_;
};

struct LaplacianParams {
  double location = 0.0;
  double scale = 1e-12;
};

/// Prior over perturbations.
struct SamplerSpec {
  SamplerKind kind = SamplerKind::uniform;
  double epsilon = 0.3;
  std::optional<Histogram> histogram;
  std::optional<LaplacianParams> laplacian;
  std::uint64_t seed = 0;
  /// DCT kinds only: additionally clamp the pixel-domain change to the epsilon box.
  bool project_linf = false;

  void validate() const;
};

class MissingPayload : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Engine seeded from (seed, stream); every sampler draw is a pure function of both.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

// --- fitting ---------------------------------------------------------------

Histogram fit_empirical(std::span<const attacks::PerturbationField> fields, std::size_t bins = kDefaultBins);
Histogram fit_empirical(std::span<const Tensor> values, std::size_t bins = kDefaultBins);
/// Maximum-likelihood Laplacian: location = median, scale = mean |x - median|
/// floored at 1e-12.
LaplacianParams fit_laplacian(std::span<const double> values);
LaplacianParams fit_laplacian(std::span<const Tensor> coefficients);

/// DCT-domain perturbations dct2(attacked) - dct2(original), image by image.
Tensor dct_perturbations(const Tensor& original, const Tensor& attacked);

// --- drawing ---------------------------------------------------------------

/// k raw perturbation tensors of `shape`, i.i.d. Uniform[-eps, eps] per element.
std::vector<Tensor> uniform_sample(const SamplerSpec& spec, const Shape& shape, std::size_t k, std::uint64_t stream = 0);
/// k raw tensors drawn element-wise from the histogram (pixel values or DCT
/// coefficients depending on the kind).
std::vector<Tensor> empirical_sample(const SamplerSpec& spec, const Shape& shape, std::size_t k,
                                     std::uint64_t stream = 0);
double laplacian_inverse_cdf(const LaplacianParams& params, double u);
/// k perturbed copies of one [1,28,28] (or [28,28]) image: coefficients drawn
/// from the Laplacian are added in the DCT domain, mapped back and clipped.
std::vector<Tensor> dct_laplacian_sample(const SamplerSpec& spec, const Tensor& image, std::size_t k,
                                         std::uint64_t stream = 0);

/// Generic entry point used by training: k perturbed copies of `image`, each
/// in [0,1]. Pixel-domain kinds also keep |x' - x|_inf <= epsilon.
std::vector<Tensor> perturbed_copies(const SamplerSpec& spec, const Tensor& image, std::size_t k,
                                     std::uint64_t stream = 0);

// --- serialization ---------------------------------------------------------

std::string serialize(const SamplerSpec& spec);
SamplerSpec deserialize(std::string_view text);
void save(const SamplerSpec& spec, const std::filesystem::path& path);
SamplerSpec load(const std::filesystem::path& path);

}  // namespace expadv::samplers
