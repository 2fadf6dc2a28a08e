#include "expadv/samplers.hpp"

#include "expadv/dct.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace expadv::samplers {

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::uniform: return "uniform";
    case SamplerKind::empirical_pixel: return "empirical_pixel";
    case SamplerKind::dct_laplacian: return "dct_laplacian";
    case SamplerKind::dct_empirical: return "dct_empirical";
  }
  return "?";
}

SamplerKind parse_kind(std::string_view text) {
  if (text == "uniform") return SamplerKind::uniform;
  if (text == "empirical_pixel") return SamplerKind::empirical_pixel;
  if (text == "dct_laplacian") return SamplerKind::dct_laplacian;
  if (text == "dct_empirical") return SamplerKind::dct_empirical;
  throw std::invalid_argument("unknown sampler kind '" + std::string(text) + "'");
}

bool is_dct(SamplerKind kind) { return kind == SamplerKind::dct_laplacian || kind == SamplerKind::dct_empirical; }

// ---------------------------------------------------------------------------
// Histogram

Histogram::Histogram(double lower, double upper, std::vector<double> mass)
    : lower_(lower), upper_(upper), mass_(std::move(mass)) {
  if (mass_.empty()) throw std::invalid_argument("histogram: no bins");
  if (!(upper_ >= lower_)) throw std::invalid_argument("histogram: upper bound below lower bound");
  cumulative_.resize(mass_.size());
  double running = 0.0;
  for (std::size_t i = 0; i < mass_.size(); ++i) {
    if (!(mass_[i] >= 0.0)) throw std::invalid_argument("histogram: negative bin mass");
    running += mass_[i];
    cumulative_[i] = running;
  }
  if (std::abs(running - 1.0) > 1e-9) {
    throw std::invalid_argument("histogram: bin masses sum to " + std::to_string(running) + ", not 1");
  }
}

Histogram Histogram::fit(std::span<const double> values, std::size_t bins) {
  if (values.empty()) throw std::invalid_argument("fit_empirical: no values");
  if (bins == 0) throw std::invalid_argument("fit_empirical: bin count must be >= 1");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> counts(bins, 0.0);
  if (hi == lo) {
    counts[0] = 1.0;
    return Histogram(lo, hi, std::move(counts));
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    auto idx = static_cast<std::size_t>(std::floor((v - lo) / width));
    counts[std::min(idx, bins - 1)] += 1.0;
  }
  const double n = static_cast<double>(values.size());
  for (double& c : counts) c /= n;
  return Histogram(lo, hi, std::move(counts));
}

double Histogram::inverse_cdf(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) {
    // u at (or numerically past) the total mass: right edge of the last nonempty bin.
    std::size_t last = mass_.size();
    while (last > 0 && mass_[last - 1] == 0.0) --last;
    return lower_ + static_cast<double>(last) * width();
  }
  const auto i = static_cast<std::size_t>(it - cumulative_.begin());
  const double before = i == 0 ? 0.0 : cumulative_[i - 1];
  const double frac = std::clamp((u - before) / mass_[i], 0.0, 1.0);
  return lower_ + (static_cast<double>(i) + frac) * width();
}

double Histogram::cdf(double x) const {
  if (x < lower_) return 0.0;
  if (x >= upper_) return 1.0;
  const double w = width();
  const auto i = std::min(static_cast<std::size_t>(std::floor((x - lower_) / w)), mass_.size() - 1);
  const double before = i == 0 ? 0.0 : cumulative_[i - 1];
  const double edge = lower_ + static_cast<double>(i) * w;
  return before + mass_[i] * (x - edge) / w;
}

// ---------------------------------------------------------------------------
// Spec

void SamplerSpec::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("sampler: epsilon must be >= 0");
  switch (kind) {
    case SamplerKind::uniform: break;
    case SamplerKind::empirical_pixel:
    case SamplerKind::dct_empirical:
      if (!histogram) throw MissingPayload("sampler: " + std::string(to_string(kind)) + " needs a histogram");
      break;
    case SamplerKind::dct_laplacian:
      if (!laplacian) throw MissingPayload("sampler: dct_laplacian needs Laplacian parameters");
      if (!(laplacian->scale > 0.0)) throw std::invalid_argument("sampler: Laplacian scale must be > 0");
      break;
  }
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the pair.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Fitting

Histogram fit_empirical(std::span<const Tensor> values, std::size_t bins) {
  std::vector<double> pooled;
  for (const Tensor& t : values) pooled.insert(pooled.end(), t.values().begin(), t.values().end());
  if (pooled.empty()) throw std::invalid_argument("fit_empirical: no perturbation fields");
  return Histogram::fit(pooled, bins);
}

Histogram fit_empirical(std::span<const attacks::PerturbationField> fields, std::size_t bins) {
  std::vector<Tensor> deltas;
  deltas.reserve(fields.size());
  for (const auto& f : fields) deltas.push_back(f.delta);
  return fit_empirical(std::span<const Tensor>(deltas), bins);
}

LaplacianParams fit_laplacian(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("fit_laplacian: no values");
  std::vector<double> sorted(values.begin(), values.end());
  const std::size_t n = sorted.size();
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  double median = *mid;
  if (n % 2 == 0) median = 0.5 * (median + *std::max_element(sorted.begin(), mid));
  double deviation = 0.0;
  for (double v : values) deviation += std::abs(v - median);
  deviation /= static_cast<double>(n);
  return {median, std::max(deviation, 1e-12)};
}

LaplacianParams fit_laplacian(std::span<const Tensor> coefficients) {
  std::vector<double> pooled;
  for (const Tensor& t : coefficients) pooled.insert(pooled.end(), t.values().begin(), t.values().end());
  return fit_laplacian(std::span<const double>(pooled));
}

Tensor dct_perturbations(const Tensor& original, const Tensor& attacked) {
  if (original.shape() != attacked.shape()) {
    throw ShapeError("dct_perturbations", shape_str(original.shape()) + " vs " + shape_str(attacked.shape()));
  }
  Tensor out = dct::dct2(attacked);
  out.data() -= dct::dct2(original).data();
  return out;
}

// ---------------------------------------------------------------------------
// Drawing

namespace {

Shape plane_shape_of(const Tensor& image) {
  const Shape& s = image.shape();
  if (!(s == Shape{28, 28} || s == Shape{1, 28, 28})) {
    throw ShapeError("sampler", "expects one [1,28,28] or [28,28] image, got " + shape_str(s));
  }
  return s;
}

void clip_unit(Tensor& t) { t.data() = t.data().cwiseMax(0.0).cwiseMin(1.0); }

}  // namespace

std::vector<Tensor> uniform_sample(const SamplerSpec& spec, const Shape& shape, std::size_t k, std::uint64_t stream) {
  std::mt19937_64 rng(stream_seed(spec.seed, stream));
  std::uniform_real_distribution<double> dist(-spec.epsilon, spec.epsilon);
  std::vector<Tensor> out;
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    Tensor t(shape);
    if (spec.epsilon > 0.0) {
      for (double& v : t.values()) v = dist(rng);
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Tensor> empirical_sample(const SamplerSpec& spec, const Shape& shape, std::size_t k, std::uint64_t stream) {
  if (spec.kind != SamplerKind::empirical_pixel && spec.kind != SamplerKind::dct_empirical) {
    throw std::invalid_argument("empirical_sample: sampler kind is " + std::string(to_string(spec.kind)));
  }
  if (!spec.histogram) throw MissingPayload("empirical_sample: sampler has no histogram");
  const Histogram& h = *spec.histogram;
  std::mt19937_64 rng(stream_seed(spec.seed, stream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Tensor> out;
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    Tensor t(shape);
    for (double& v : t.values()) v = h.inverse_cdf(unit(rng));
    out.push_back(std::move(t));
  }
  return out;
}

double laplacian_inverse_cdf(const LaplacianParams& params, double u) {
  // u in (0,1); centered at 1/2.
  const double c = u - 0.5;
  const double s = c < 0.0 ? -1.0 : 1.0;
  return params.location - params.scale * s * std::log1p(-2.0 * std::abs(c));
}

std::vector<Tensor> dct_laplacian_sample(const SamplerSpec& spec, const Tensor& image, std::size_t k,
                                         std::uint64_t stream) {
  if (!spec.laplacian) throw MissingPayload("dct_laplacian_sample: sampler has no Laplacian parameters");
  SamplerSpec as_laplacian = spec;
  as_laplacian.kind = SamplerKind::dct_laplacian;
  return perturbed_copies(as_laplacian, image, k, stream);
}

std::vector<Tensor> perturbed_copies(const SamplerSpec& spec, const Tensor& image, std::size_t k, std::uint64_t stream) {
  spec.validate();
  const Shape shape = plane_shape_of(image);
  std::vector<Tensor> copies;
  switch (spec.kind) {
    case SamplerKind::uniform:
    case SamplerKind::empirical_pixel: {
      copies = spec.kind == SamplerKind::uniform ? uniform_sample(spec, shape, k, stream)
                                                 : empirical_sample(spec, shape, k, stream);
      for (Tensor& c : copies) {
        c.data() = (image.data() + c.data().cwiseMax(-spec.epsilon).cwiseMin(spec.epsilon)).eval();
        clip_unit(c);
      }
      return copies;
    }
    case SamplerKind::dct_laplacian:
    case SamplerKind::dct_empirical: {
      if (spec.kind == SamplerKind::dct_empirical) {
        copies = empirical_sample(spec, shape, k, stream);
      } else {
        std::mt19937_64 rng(stream_seed(spec.seed, stream));
        // Open interval keeps log1p finite.
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::size_t j = 0; j < k; ++j) {
          Tensor t(shape);
          for (double& v : t.values()) {
            double u = unit(rng);
            while (u == 0.0) u = unit(rng);
            v = laplacian_inverse_cdf(*spec.laplacian, u);
          }
          copies.push_back(std::move(t));
        }
      }
      const Tensor base = dct::dct2(image);
      for (Tensor& c : copies) {
        c.data() += base.data();
        c = dct::idct2(c);
        if (spec.project_linf) attacks::project(c, image, spec.epsilon);
        clip_unit(c);
      }
      return copies;
    }
  }
  throw std::invalid_argument("sampler: unknown kind");
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty()) throw std::invalid_argument("sampler file: bad number for " + key + ": '" + text + "'");
  return v;
}

}  // namespace

std::string serialize(const SamplerSpec& spec) {
  std::ostringstream out;
  out << "kind=" << to_string(spec.kind) << '\n';
  out << "epsilon=" << format_double(spec.epsilon) << '\n';
  out << "seed=" << spec.seed << '\n';
  out << "project_linf=" << (spec.project_linf ? 1 : 0) << '\n';
  out << "mu=" << (spec.laplacian ? format_double(spec.laplacian->location) : "none") << '\n';
  out << "b=" << (spec.laplacian ? format_double(spec.laplacian->scale) : "none") << '\n';
  if (spec.histogram) {
    const Histogram& h = *spec.histogram;
    out << "lower=" << format_double(h.lower()) << '\n';
    out << "upper=" << format_double(h.upper()) << '\n';
    out << "bins=" << h.bins() << '\n';
    out << "masses=";
    for (std::size_t i = 0; i < h.bins(); ++i) out << (i ? "," : "") << format_double(h.mass()[i]);
    out << '\n';
  } else {
    out << "lower=none\nupper=none\nbins=0\nmasses=\n";
  }
  return out.str();
}

SamplerSpec deserialize(std::string_view text) {
  std::map<std::string, std::string> fields;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("sampler file: malformed line '" + line + "'");
    fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  static const char* required[] = {"kind", "epsilon", "seed", "project_linf", "mu", "b", "lower", "upper", "bins", "masses"};
  for (const char* key : required) {
    if (!fields.count(key)) throw std::invalid_argument(std::string("sampler file: missing key ") + key);
  }
  if (fields.size() != std::size(required)) throw std::invalid_argument("sampler file: unknown keys present");

  SamplerSpec spec;
  spec.kind = parse_kind(fields["kind"]);
  spec.epsilon = parse_double("epsilon", fields["epsilon"]);
  spec.seed = std::stoull(fields["seed"]);
  spec.project_linf = fields["project_linf"] == "1";
  if (fields["mu"] != "none") {
    spec.laplacian = LaplacianParams{parse_double("mu", fields["mu"]), parse_double("b", fields["b"])};
  }
  const std::size_t bins = std::stoul(fields["bins"]);
  if (bins > 0) {
    std::vector<double> mass;
    std::istringstream parts(fields["masses"]);
    std::string item;
    while (std::getline(parts, item, ',')) mass.push_back(parse_double("masses", item));
    if (mass.size() != bins) {
      throw std::invalid_argument("sampler file: expected " + std::to_string(bins) + " masses, got " +
                                  std::to_string(mass.size()));
    }
    spec.histogram = Histogram(parse_double("lower", fields["lower"]), parse_double("upper", fields["upper"]), std::move(mass));
  }
  spec.validate();
  return spec;
}

void save(const SamplerSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize(spec);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

SamplerSpec load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace expadv::samplers
