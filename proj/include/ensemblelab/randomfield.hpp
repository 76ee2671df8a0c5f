#pragma once

// Homogeneous, isotropic Gaussian random fields on a periodic lattice and the
// fractional-volume estimators built on them: indicator fields, the nested
// 3^dim cell hierarchy, one-point and two-point probabilities, and a
// direction-class isotropy report.
//
// Lattice layout is row-major with the last axis fastest. A lattice of side
// s in dimension d has s^d points; s must be 2^a * 3^b so that both the FFT
// and the ternary hierarchy fit.

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ensemblelab/common.hpp"

namespace ensemblelab::field {

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

struct White {};
struct PowerLaw {
  double index = -2.0;  // P(k) = |k|^index
};
struct GaussianBump {
  double center = 0.0;  // P(k) = exp(-(|k| - center)^2 / (2 width^2))
  double width = 0.5;
};

using SpectrumKind = std::variant<White, PowerLaw, GaussianBump>;

/// Covariance of a homogeneous Gaussian field, specified through its
/// (unnormalized) isotropic power spectrum. Wavenumbers are angular, in
/// radians per unit length; modes with |k| > cutoff carry no power. The
/// spectrum is rescaled so the field variance equals `variance`.
struct CovarianceSpec {
  double mean = 0.0;
  double variance = 1.0;
  SpectrumKind spectrum = White{};
  double cutoff = std::numeric_limits<double>::infinity();

  double shape(double k) const {
    if (k > cutoff) return 0.0;
    return std::visit(
        [k](const auto& s) -> double {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, White>) {
            return 1.0;
          } else if constexpr (std::is_same_v<T, PowerLaw>) {
            return std::pow(k, s.index);
          } else {
            const double z = (k - s.center) / s.width;
            return std::exp(-0.5 * z * z);
          }
        },
        spectrum);
  }

  void validate() const {
    if (!std::isfinite(mean)) throw ValidationError("field mean must be finite");
    if (!std::isfinite(variance) || variance < 0.0) {
      throw ValidationError("field variance must be finite and non-negative");
    }
    if (!(cutoff > 0.0)) throw ValidationError("spectral cutoff must be positive");
    if (const auto* p = std::get_if<PowerLaw>(&spectrum); p && !std::isfinite(p->index)) {
      throw ValidationError("power-law index must be finite");
    }
    if (const auto* g = std::get_if<GaussianBump>(&spectrum)) {
      if (!std::isfinite(g->center) || g->center < 0.0 || !std::isfinite(g->width) ||
          !(g->width > 0.0)) {
        throw ValidationError("gaussian bump needs center >= 0 and width > 0");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Lattice geometry
// ---------------------------------------------------------------------------

inline bool is_smooth_side(std::size_t side) {
  if (side < 2) return false;
  while (side % 2 == 0) side /= 2;
  while (side % 3 == 0) side /= 3;
  return side == 1;
}

inline constexpr std::size_t kMaxPoints = std::size_t{1} << 27;

inline std::size_t lattice_points(int dim, std::size_t side) {
  if (dim < 1 || dim > 3) throw ValidationError("dimension must be 1, 2 or 3");
  if (!is_smooth_side(side)) {
    throw ValidationError("unsupported side " + std::to_string(side) +
                          ": must be 2^a * 3^b and at least 2");
  }
  std::size_t n = 1;
  for (int a = 0; a < dim; ++a) {
    if (n > kMaxPoints / side) throw ValidationError("lattice too large");
    n *= side;
  }
  return n;
}

/// Signed lattice mode index for FFT bin m.
inline long signed_mode(std::size_t m, std::size_t side) {
  return 2 * m <= side ? static_cast<long>(m) : static_cast<long>(m) - static_cast<long>(side);
}

struct FieldSample {
  int dim = 2;
  std::size_t side = 0;
  double spacing = 1.0;
  std::uint64_t seed = 0;
  /// Empty for fields built from explicit values or a custom spectrum.
  std::optional<CovarianceSpec> spec;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }

  /// Wrap explicit values (e.g. a constant field) into a sample.
  static FieldSample from_values(int dim, std::size_t side, std::vector<double> values,
                                 double spacing = 1.0) {
    const std::size_t n = lattice_points(dim, side);
    if (values.size() != n) throw ValidationError("value count does not match side^dim");
    for (double v : values) {
      if (!std::isfinite(v)) throw ValidationError("field values must be finite");
    }
    if (!(spacing > 0.0) || !std::isfinite(spacing)) {
      throw ValidationError("spacing must be positive");
    }
    FieldSample f;
    f.dim = dim;
    f.side = side;
    f.spacing = spacing;
    f.values = std::move(values);
    return f;
  }
};

namespace detail {

struct FftwPlan {
  fftw_plan plan = nullptr;
  explicit FftwPlan(fftw_plan p) : plan(p) {}
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
  ~FftwPlan() {
    if (plan) fftw_destroy_plan(plan);
  }
};

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (!p) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

}  // namespace detail

/// Spectral synthesis with an arbitrary power function of the wavevector.
/// `power(k)` receives the angular wavevector (unused trailing components are
/// zero) and must be even in k and non-negative. White noise drawn in real
/// space from stream 0 of `seed` is filtered by sqrt(power), which yields
/// independent complex Gaussian modes with Hermitian symmetry; the DC mode is
/// replaced by `mean`. The result has ensemble variance exactly `variance`.
template <class PowerFn>
std::vector<double> synthesize(int dim, std::size_t side, double spacing, std::uint64_t seed,
                               double mean, double variance, PowerFn&& power) {
  const std::size_t n = lattice_points(dim, side);
  if (!(spacing > 0.0) || !std::isfinite(spacing)) {
    throw ValidationError("spacing must be positive");
  }
  if (variance == 0.0) return std::vector<double>(n, mean);

  const double dk = kTwoPi / (static_cast<double>(side) * spacing);
  const std::size_t half = side / 2 + 1;
  const std::size_t outer = n / side;  // points in all axes but the last
  const std::size_t n_complex = outer * half;

  // Power on the full grid fixes the normalization; the half grid is what the
  // r2c transform stores.
  auto wavevector = [&](std::size_t flat) {
    std::array<double, 3> k{0.0, 0.0, 0.0};
    for (int a = dim - 1; a >= 0; --a) {
      k[a] = dk * static_cast<double>(signed_mode(flat % side, side));
      flat /= side;
    }
    return k;
  };
  CompensatedSum total_power;
  for (std::size_t m = 1; m < n; ++m) {
    const double p = power(wavevector(m));
    if (!std::isfinite(p) || p < 0.0) {
      throw ValidationError("invalid spectrum: power must be finite and non-negative");
    }
    total_power.add(p);
  }
  if (!(total_power.value() > 0.0)) {
    throw ValidationError("invalid spectrum: no power on any non-DC mode");
  }
  const double norm = static_cast<double>(n) * variance / total_power.value();

  auto real = detail::fftw_buffer<double>(n);
  auto spec = detail::fftw_buffer<fftw_complex>(n_complex);
  std::array<int, 3> dims{};
  for (int a = 0; a < dim; ++a) dims[a] = static_cast<int>(side);

  detail::FftwPlan forward(
      fftw_plan_dft_r2c(dim, dims.data(), real.get(), spec.get(), FFTW_ESTIMATE));
  detail::FftwPlan backward(
      fftw_plan_dft_c2r(dim, dims.data(), spec.get(), real.get(), FFTW_ESTIMATE));
  if (!forward.plan || !backward.plan) throw NumericsError("FFTW planning failed");

  auto rng = make_rng(seed, 0);
  for (std::size_t i = 0; i < n; ++i) real[i] = standard_normal(rng);
  fftw_execute(forward.plan);

  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t m = 0; m < half; ++m) {
      const std::size_t c = o * half + m;
      const std::size_t full = o * side + m;
      double amp = 0.0;
      if (full != 0) amp = std::sqrt(norm * power(wavevector(full)));
      spec[c][0] *= amp;
      spec[c][1] *= amp;
    }
  }
  fftw_execute(backward.plan);

  std::vector<double> out(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = mean + real[i] * inv_n;
  return out;
}

/// Gaussian field with the isotropic spectrum of `spec`.
inline FieldSample generate(const CovarianceSpec& spec, int dim, std::size_t side,
                            std::uint64_t seed, double spacing = 1.0) {
  spec.validate();
  FieldSample f;
  f.dim = dim;
  f.side = side;
  f.spacing = spacing;
  f.seed = seed;
  f.spec = spec;
  f.values = synthesize(dim, side, spacing, seed, spec.mean, spec.variance,
                        [&spec](const std::array<double, 3>& k) {
                          return spec.shape(std::sqrt(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]));
                        });
  return f;
}

// ---------------------------------------------------------------------------
// Indicators and the cell hierarchy
// ---------------------------------------------------------------------------

/// Half-open interval [lo, hi). Either end may be infinite.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  void validate() const {
    if (std::isnan(lo) || std::isnan(hi) || !(lo < hi)) {
      throw ValidationError("interval needs lo < hi");
    }
  }
  bool contains(double v) const { return lo <= v && v < hi; }
};

struct IndicatorField {
  int dim = 2;
  std::size_t side = 0;
  Interval interval;
  std::vector<std::uint8_t> bits;

  std::size_t ones() const {
    std::size_t c = 0;
    for (auto b : bits) c += b;
    return c;
  }
  double mean() const { return static_cast<double>(ones()) / static_cast<double>(bits.size()); }
};

inline IndicatorField indicator(const FieldSample& field, const Interval& interval) {
  interval.validate();
  IndicatorField ind;
  ind.dim = field.dim;
  ind.side = field.side;
  ind.interval = interval;
  ind.bits.resize(field.values.size());
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    ind.bits[i] = interval.contains(field.values[i]) ? 1 : 0;
  }
  return ind;
}

/// Per-level cell means of an indicator. Level 0 cells are lattice points;
/// each level-(n+1) cell is the 3^dim block of level-n cells centered on its
/// middle child. epsilon[n] is the largest pairwise difference of cell means
/// at level n, reported only for levels with at least 9 cells.
struct HierarchyReport {
  int dim = 2;
  std::vector<std::size_t> level_side;         // cells per axis at each level
  std::vector<std::vector<double>> cell_means;  // per level, row-major
  std::vector<std::optional<double>> epsilon;

  std::size_t levels() const { return cell_means.size(); }

  double global_mean(std::size_t level) const {
    return compensated_sum(cell_means.at(level)) /
           static_cast<double>(cell_means.at(level).size());
  }
};

inline constexpr std::size_t kMinCellsForEpsilon = 9;

inline HierarchyReport hierarchical_average(const IndicatorField& ind, int max_level) {
  if (max_level < 0) throw GridError("max_level must be non-negative");
  std::size_t factor = 1;
  for (int l = 0; l < max_level; ++l) factor *= 3;
  if (ind.side % factor != 0) {
    throw GridError("side " + std::to_string(ind.side) + " is not divisible by 3^" +
                    std::to_string(max_level));
  }

  HierarchyReport report;
  report.dim = ind.dim;
  // Integer counts keep every level's total identical.
  std::vector<std::uint64_t> counts(ind.bits.begin(), ind.bits.end());
  std::size_t side = ind.side;
  std::uint64_t cell_volume = 1;

  auto record = [&](const std::vector<std::uint64_t>& c) {
    std::vector<double> means(c.size());
    const double vol = static_cast<double>(cell_volume);
    for (std::size_t i = 0; i < c.size(); ++i) means[i] = static_cast<double>(c[i]) / vol;
    report.level_side.push_back(side);
    report.cell_means.push_back(std::move(means));
    if (c.size() >= kMinCellsForEpsilon) {
      const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
      report.epsilon.push_back(static_cast<double>(*hi - *lo) / vol);
    } else {
      report.epsilon.push_back(std::nullopt);
    }
  };
  record(counts);

  for (int level = 0; level < max_level; ++level) {
    const std::size_t parent_side = side / 3;
    std::size_t parent_n = 1;
    for (int a = 0; a < ind.dim; ++a) parent_n *= parent_side;
    std::vector<std::uint64_t> parent(parent_n, 0);
    std::size_t child_n = counts.size();
    for (std::size_t flat = 0; flat < child_n; ++flat) {
      std::size_t rem = flat;
      std::size_t pidx = 0, stride = 1;
      for (int a = ind.dim - 1; a >= 0; --a) {
        const std::size_t coord = rem % side;
        rem /= side;
        pidx += (coord / 3) * stride;
        stride *= parent_side;
      }
      parent[pidx] += counts[flat];
    }
    counts = std::move(parent);
    side = parent_side;
    for (int a = 0; a < ind.dim; ++a) cell_volume *= 3;
    record(counts);
  }
  return report;
}

/// Fractional volume where the field lies in `interval`.
inline double one_point_prob(const FieldSample& field, const Interval& interval) {
  return indicator(field, interval).mean();
}

// ---------------------------------------------------------------------------
// Two-point estimators
// ---------------------------------------------------------------------------

using Offset = std::array<long, 3>;

inline long norm2(const Offset& y) { return y[0] * y[0] + y[1] * y[1] + y[2] * y[2]; }

/// Lattice offsets with |y| * spacing in [r - spacing/2, r + spacing/2).
/// Components stay strictly inside half the torus so no offset aliases its
/// mirror image.
inline std::vector<Offset> shell_offsets(int dim, std::size_t side, double spacing, double r) {
  std::vector<Offset> out;
  if (!std::isfinite(r)) return out;
  const double lo = r / spacing - 0.5;
  const double hi = r / spacing + 0.5;
  if (hi <= 0.0) return out;
  const long reach = static_cast<long>(std::ceil(hi));
  const long limit = static_cast<long>((side - 1) / 2);
  const long bound = std::min(reach, limit);
  Offset y{0, 0, 0};
  const long b1 = dim >= 2 ? bound : 0;
  const long b2 = dim >= 3 ? bound : 0;
  for (y[0] = -bound; y[0] <= bound; ++y[0]) {
    for (y[1] = -b1; y[1] <= b1; ++y[1]) {
      for (y[2] = -b2; y[2] <= b2; ++y[2]) {
        const double len = std::sqrt(static_cast<double>(norm2(y)));
        if (len >= lo && len < hi) out.push_back(y);
      }
    }
  }
  return out;
}

namespace detail {

// Number of points x with a(x) = 1 and b(x + y) = 1, periodic.
inline std::uint64_t pair_count(const IndicatorField& a, const IndicatorField& b, const Offset& y) {
  const std::size_t side = a.side;
  const int dim = a.dim;
  std::array<std::vector<std::size_t>, 3> shifted;
  for (int ax = 0; ax < dim; ++ax) {
    shifted[ax].resize(side);
    const long s = static_cast<long>(side);
    for (std::size_t i = 0; i < side; ++i) {
      long j = (static_cast<long>(i) + y[ax]) % s;
      if (j < 0) j += s;
      shifted[ax][i] = static_cast<std::size_t>(j);
    }
  }
  std::uint64_t count = 0;
  if (dim == 1) {
    for (std::size_t i = 0; i < side; ++i) count += a.bits[i] & b.bits[shifted[0][i]];
  } else if (dim == 2) {
    for (std::size_t i = 0; i < side; ++i) {
      const std::uint8_t* ra = &a.bits[i * side];
      const std::uint8_t* rb = &b.bits[shifted[0][i] * side];
      for (std::size_t j = 0; j < side; ++j) count += ra[j] & rb[shifted[1][j]];
    }
  } else {
    for (std::size_t i = 0; i < side; ++i) {
      for (std::size_t j = 0; j < side; ++j) {
        const std::uint8_t* ra = &a.bits[(i * side + j) * side];
        const std::uint8_t* rb = &b.bits[(shifted[0][i] * side + shifted[1][j]) * side];
        for (std::size_t k = 0; k < side; ++k) count += ra[k] & rb[shifted[2][k]];
      }
    }
  }
  return count;
}

}  // namespace detail

struct TwoPointEstimate {
  double estimate = 0.0;
  std::size_t n_offsets = 0;
  std::uint64_t n_pairs = 0;  // points x offsets averaged over
};

/// Fraction of (point, offset) pairs with the field in `a` at x and in `b`
/// at x + y, averaged over every lattice offset in the separation shell
/// around r.
inline TwoPointEstimate two_point_prob(const FieldSample& field, const Interval& a,
                                       const Interval& b, double r) {
  const auto ia = indicator(field, a);
  const auto ib = indicator(field, b);
  const auto offsets = shell_offsets(field.dim, field.side, field.spacing, r);
  if (offsets.empty()) {
    throw EmptySeparationError("no lattice offset within half a spacing of r = " +
                               std::to_string(r));
  }
  std::uint64_t hits = 0;
  for (const auto& y : offsets) hits += detail::pair_count(ia, ib, y);
  TwoPointEstimate est;
  est.n_offsets = offsets.size();
  est.n_pairs = static_cast<std::uint64_t>(offsets.size()) * field.values.size();
  est.estimate = static_cast<double>(hits) / static_cast<double>(est.n_pairs);
  return est;
}

enum class DirectionClass { axis, face_diagonal, body_diagonal, oblique };

inline const char* to_string(DirectionClass c) {
  switch (c) {
    case DirectionClass::axis: return "axis";
    case DirectionClass::face_diagonal: return "face_diagonal";
    case DirectionClass::body_diagonal: return "body_diagonal";
    case DirectionClass::oblique: return "oblique";
  }
  return "?";
}

inline DirectionClass classify(const Offset& y) {
  int nonzero = 0;
  long first = 0;
  bool equal = true;
  for (long c : y) {
    if (c == 0) continue;
    const long m = c < 0 ? -c : c;
    if (nonzero == 0) first = m;
    else if (m != first) equal = false;
    ++nonzero;
  }
  if (nonzero <= 1) return DirectionClass::axis;
  if (!equal) return DirectionClass::oblique;
  return nonzero == 2 ? DirectionClass::face_diagonal : DirectionClass::body_diagonal;
}

struct DirectionEstimate {
  DirectionClass direction = DirectionClass::axis;
  double estimate = 0.0;
  std::size_t n_offsets = 0;
};

/// Direction classes compared at one exact lattice separation.
struct MatchedComparison {
  long norm2 = 0;  // squared offset length in lattice units
  std::vector<DirectionEstimate> by_class;
  double spread = 0.0;
};

/// Two-point estimates split by offset direction class. `by_class` pools the
/// whole separation shell. Because the shell mixes slightly different
/// lengths, the spread statistic compares classes only at exactly equal
/// offset lengths (`matched`); `spread` is the largest of those.
struct IsotropyReport {
  double r = 0.0;
  std::vector<DirectionEstimate> by_class;
  std::vector<MatchedComparison> matched;
  double spread = 0.0;
};

inline IsotropyReport isotropy_report(const FieldSample& field, const Interval& a,
                                      const Interval& b, double r) {
  const auto ia = indicator(field, a);
  const auto ib = indicator(field, b);
  const auto offsets = shell_offsets(field.dim, field.side, field.spacing, r);
  if (offsets.empty()) {
    throw EmptySeparationError("no lattice offset within half a spacing of r = " +
                               std::to_string(r));
  }
  const double n_points = static_cast<double>(field.values.size());

  struct Acc {
    std::uint64_t hits = 0;
    std::size_t n = 0;
  };
  std::map<DirectionClass, Acc> pooled;
  std::map<long, std::map<DirectionClass, Acc>> by_length;
  for (const auto& y : offsets) {
    const auto hits = detail::pair_count(ia, ib, y);
    const auto cls = classify(y);
    auto& p = pooled[cls];
    p.hits += hits;
    ++p.n;
    auto& l = by_length[norm2(y)][cls];
    l.hits += hits;
    ++l.n;
  }
  auto to_estimate = [n_points](DirectionClass c, const Acc& acc) {
    return DirectionEstimate{c, static_cast<double>(acc.hits) / (n_points * double(acc.n)),
                             acc.n};
  };

  IsotropyReport report;
  report.r = r;
  for (const auto& [cls, acc] : pooled) report.by_class.push_back(to_estimate(cls, acc));
  for (const auto& [len2, classes] : by_length) {
    if (classes.size() < 2) continue;
    MatchedComparison m;
    m.norm2 = len2;
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& [cls, acc] : classes) {
      m.by_class.push_back(to_estimate(cls, acc));
      lo = std::min(lo, m.by_class.back().estimate);
      hi = std::max(hi, m.by_class.back().estimate);
    }
    m.spread = hi - lo;
    report.spread = std::max(report.spread, m.spread);
    report.matched.push_back(std::move(m));
  }
  if (report.matched.empty()) {
    throw DomainError("no separation near r = " + std::to_string(r) +
                      " is shared by two direction classes");
  }
  return report;
}

}  // namespace ensemblelab::field
