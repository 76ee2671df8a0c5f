#pragma once

// Ideal measurement in a cosmological ensemble of apparatus microstates.
//
// The apparatus macrostate is a distribution {p_i} over M microstates. A
// measured system with coefficients c_k over K outcomes premeasures into
// sum_k c_k |k, j(k,i)>, where j(k,i) = k*M + i labels an apparatus state
// that is orthonormal to every other (k', i') label. Each (k, i) carries an
// independent uniform phase theta[k][i]; those phases are the only place the
// apparatus's lack of relative-phase information enters.
//
// The combined K*M dimensional density operator is never built. Ensemble
// averages are evaluated term by term from the K x M phase table.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ensemblelab/common.hpp"
#include "ensemblelab/probcore.hpp"
#include "ensemblelab/quantum.hpp"

namespace ensemblelab::measure {

using Complex = std::complex<double>;

// Stream indices under a seed.
inline constexpr std::uint64_t kPhaseStream = 1;
inline constexpr std::uint64_t kOutcomeStream = 2;

/// Coefficients c_k of the measured system over the outcome eigenbasis.
class SystemState {
 public:
  explicit SystemState(std::vector<Complex> c) : c_(std::move(c)) {
    if (c_.size() < 2) throw ValidationError("a measurement needs at least two outcomes");
    double norm2 = 0.0;
    for (const auto& x : c_) {
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) {
        throw ValidationError("coefficients must be finite");
      }
      norm2 += std::norm(x);
    }
    if (std::abs(norm2 - 1.0) > 1e-12) {
      throw ValidationError("sum |c_k|^2 is " + std::to_string(norm2) + ", not 1");
    }
  }

  static SystemState real(const std::vector<double>& c) {
    return SystemState(std::vector<Complex>(c.begin(), c.end()));
  }

  const std::vector<Complex>& coefficients() const { return c_; }
  std::size_t outcomes() const { return c_.size(); }

  std::vector<double> weights() const {
    std::vector<double> w;
    w.reserve(c_.size());
    for (const auto& x : c_) w.push_back(std::norm(x));
    return w;
  }

 private:
  std::vector<Complex> c_;
};

class ApparatusEnsemble {
 public:
  ApparatusEnsemble(prob::DiscreteDistribution probs, std::size_t outcomes,
                    std::vector<double> phases, std::uint64_t seed)
      : probs_(std::move(probs)), outcomes_(outcomes), phases_(std::move(phases)), seed_(seed) {
    if (outcomes_ < 2) throw ValidationError("apparatus needs at least two outcomes");
    if (phases_.size() != outcomes_ * probs_.size()) {
      throw ValidationError("phase table must be outcomes x microstates");
    }
  }

  const prob::DiscreteDistribution& probs() const { return probs_; }
  std::size_t microstates() const { return probs_.size(); }
  std::size_t outcomes() const { return outcomes_; }
  std::uint64_t seed() const { return seed_; }

  double phase(std::size_t k, std::size_t i) const { return phases_[k * microstates() + i]; }

  /// Index of the apparatus state |j(k,i)> in the block-indexed basis.
  std::size_t pointer_state(std::size_t k, std::size_t i) const { return k * microstates() + i; }

 private:
  prob::DiscreteDistribution probs_;
  std::size_t outcomes_;
  std::vector<double> phases_;  // row k, column i
  std::uint64_t seed_;
};

/// Apparatus with M microstates (uniform unless `probs` is given) and
/// independent uniform phases on [0, 2pi), drawn row by row from the phase
/// stream of `seed`.
inline ApparatusEnsemble build_apparatus(std::size_t micro_count,
                                         std::optional<prob::DiscreteDistribution> probs,
                                         std::size_t outcomes, std::uint64_t seed) {
  if (micro_count == 0) throw ValidationError("apparatus needs at least one microstate");
  if (outcomes < 2) throw ValidationError("apparatus needs at least two outcomes");
  if (probs && probs->size() != micro_count) {
    throw ValidationError("microstate distribution has the wrong length");
  }
  auto p = probs ? std::move(*probs) : prob::DiscreteDistribution::uniform(micro_count);
  auto rng = make_rng(seed, kPhaseStream);
  std::vector<double> phases(outcomes * micro_count);
  for (auto& t : phases) t = uniform_phase(rng);
  return ApparatusEnsemble(std::move(p), outcomes, std::move(phases), seed);
}

struct CombinedEntry {
  std::size_t outcome = 0;
  std::size_t pointer_state = 0;  // j(k, i)
  Complex amplitude;
};

/// sum_k c_k e^{i theta[k][i]} |k, j(k,i)> for one apparatus microstate i.
struct CombinedState {
  std::size_t microstate = 0;
  std::vector<CombinedEntry> entries;

  double norm() const {
    double s = 0.0;
    for (const auto& e : entries) s += std::norm(e.amplitude);
    return std::sqrt(s);
  }
};

namespace detail {

inline void check_outcomes(const SystemState& system, const ApparatusEnsemble& app) {
  if (system.outcomes() != app.outcomes()) {
    throw ValidationError("system and apparatus disagree on the number of outcomes");
  }
}

}  // namespace detail

inline CombinedState premeasure(const SystemState& system, const ApparatusEnsemble& app,
                                std::size_t microstate) {
  detail::check_outcomes(system, app);
  if (microstate >= app.microstates()) {
    throw ValidationError("microstate index " + std::to_string(microstate) + " out of range");
  }
  CombinedState out;
  out.microstate = microstate;
  const auto& c = system.coefficients();
  for (std::size_t k = 0; k < c.size(); ++k) {
    out.entries.push_back({k, app.pointer_state(k, microstate),
                           c[k] * std::polar(1.0, app.phase(k, microstate))});
  }
  return out;
}

/// sum_i p_i exp(i (theta[k][i] - theta[k'][i])), the factor multiplying every
/// (k', k) cross term of an ensemble average.
inline Complex phase_average(const ApparatusEnsemble& app, std::size_t k, std::size_t k2) {
  if (k >= app.outcomes() || k2 >= app.outcomes()) throw ValidationError("outcome out of range");
  double re = 0.0, im = 0.0;
  const auto p = app.probs().probs();
  for (std::size_t i = 0; i < app.microstates(); ++i) {
    const double d = app.phase(k, i) - app.phase(k2, i);
    re += p[i] * std::cos(d);
    im += p[i] * std::sin(d);
  }
  return {re, im};
}

/// Magnitude of the phase-averaged cross term between outcomes k != k'.
inline double offdiag_suppression(const ApparatusEnsemble& app, std::size_t k, std::size_t k2) {
  if (k == k2) throw DomainError("suppression is defined only for k != k'");
  return std::abs(phase_average(app, k, k2));
}

/// Ensemble average of an observable on the combined system whose matrix
/// elements depend only on the outcome pair (k', k). Evaluated member by
/// member: sum_i p_i a_i^dagger O a_i with a_i = (c_k e^{i theta[k][i]})_k.
inline double ensemble_expectation(const SystemState& system, const ApparatusEnsemble& app,
                                   const quantum::Observable& obs) {
  detail::check_outcomes(system, app);
  if (obs.dim() != system.outcomes()) {
    throw ValidationError("observable must be indexed by outcome pairs");
  }
  const std::size_t K = system.outcomes();
  const auto& c = system.coefficients();
  const auto& o = obs.matrix();
  const auto p = app.probs().probs();
  std::vector<Complex> a(K);
  CompensatedSum re, im;
  for (std::size_t i = 0; i < app.microstates(); ++i) {
    for (std::size_t k = 0; k < K; ++k) a[k] = c[k] * std::polar(1.0, app.phase(k, i));
    Complex member{0.0, 0.0};
    for (std::size_t k2 = 0; k2 < K; ++k2) {
      Complex row{0.0, 0.0};
      for (std::size_t k = 0; k < K; ++k) row += o(Eigen::Index(k2), Eigen::Index(k)) * a[k];
      member += std::conj(a[k2]) * row;
    }
    re.add(p[i] * member.real());
    im.add(p[i] * member.imag());
  }
  const Complex total{re.value(), im.value()};
  if (std::abs(total.imag()) > quantum::kImaginaryResidue) {
    throw NumericsError("ensemble average has imaginary residue " + std::to_string(total.imag()));
  }
  return total.real();
}

/// Fraction of ensemble members in each outcome macrostate (k, k): the trace
/// of the ensemble density operator against the outcome projectors, which
/// reduces to |c_k|^2 sum_i p_i.
inline prob::DiscreteDistribution outcome_fractions(const SystemState& system,
                                                    const ApparatusEnsemble& app) {
  detail::check_outcomes(system, app);
  const double mass = compensated_sum(app.probs().probs());
  auto w = system.weights();
  for (auto& x : w) x *= mass;
  return prob::DiscreteDistribution(std::move(w));
}

/// Outcome counts for n ensemble members, each registering a definite outcome
/// drawn from {|c_k|^2} (inverse CDF on the outcome stream of `seed`).
inline std::vector<std::uint64_t> sample_outcomes(const SystemState& system,
                                                  const ApparatusEnsemble& app,
                                                  std::uint64_t n_members, std::uint64_t seed) {
  detail::check_outcomes(system, app);
  if (n_members == 0) throw ValidationError("need at least one ensemble member");
  const auto w = system.weights();
  std::vector<double> cdf(w.size());
  std::partial_sum(w.begin(), w.end(), cdf.begin());
  auto rng = make_rng(seed, kOutcomeStream);
  std::vector<std::uint64_t> counts(w.size(), 0);
  for (std::uint64_t m = 0; m < n_members; ++m) {
    const double u = uniform01(rng) * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t k = static_cast<std::size_t>(it - cdf.begin());
    if (k >= w.size()) k = w.size() - 1;
    // Skip zero-weight outcomes that share a CDF value with their neighbour.
    while (w[k] == 0.0 && k > 0) --k;
    ++counts[k];
  }
  return counts;
}

/// Entropy bookkeeping for a measurement on n equally likely apparatus
/// microstates.
struct EntropyLedger {
  std::uint64_t n_micro = 0;
  double initial_total = 0.0;   // ln n
  double final_coarse = 0.0;    // -sum |c_k|^2 ln |c_k|^2
  double final_residual = 0.0;  // sum (n_k / n) ln n_k
  double final_total = 0.0;     // final_coarse + final_residual
  double rounding_defect = 0.0; // |final_total - ln n|
  std::vector<std::uint64_t> allocation;  // n_k, largest-remainder rounding
  /// Entropy of the microstate distribution, unchanged by premeasurement.
  double gibbs_entropy = 0.0;
  /// Coarse entropy of the rounded masses n_k / n; with final_residual this
  /// sums to ln n exactly.
  double final_coarse_rounded = 0.0;
};

/// Largest-remainder apportionment of n among weights that sum to 1. Ties in
/// the remainder go to the lower index.
inline std::vector<std::uint64_t> largest_remainder(const std::vector<double>& weights,
                                                    std::uint64_t n) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::uint64_t> alloc(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::uint64_t used = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double quota = weights[k] / total * static_cast<double>(n);
    const double fl = std::floor(quota);
    alloc[k] = static_cast<std::uint64_t>(fl);
    used += alloc[k];
    rem.emplace_back(quota - fl, k);
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; used < n && r < rem.size(); ++r, ++used) ++alloc[rem[r].second];
  // Floating quotas can only undershoot by less than one unit per entry.
  while (used > n) {
    for (std::size_t k = alloc.size(); k-- > 0 && used > n;) {
      if (alloc[k] > 0) {
        --alloc[k];
        --used;
      }
    }
  }
  return alloc;
}

inline EntropyLedger entropy_ledger(const SystemState& system, std::uint64_t n_micro) {
  if (n_micro < system.outcomes()) {
    throw ValidationError("need at least one microstate per outcome");
  }
  EntropyLedger led;
  led.n_micro = n_micro;
  const double n = static_cast<double>(n_micro);
  led.initial_total = std::log(n);
  led.gibbs_entropy = std::log(n);

  const auto w = system.weights();
  led.final_coarse = prob::entropy_of(w);
  led.allocation = largest_remainder(w, n_micro);

  CompensatedSum residual;
  std::vector<double> rounded;
  for (auto nk : led.allocation) {
    const double share = static_cast<double>(nk) / n;
    rounded.push_back(share);
    if (nk > 0) residual.add(share * std::log(static_cast<double>(nk)));
  }
  led.final_residual = residual.value();
  led.final_total = led.final_coarse + led.final_residual;
  led.rounding_defect = std::abs(led.final_total - led.initial_total);
  led.final_coarse_rounded = prob::entropy_of(rounded);
  return led;
}

struct SuppressionSummary {
  std::size_t micro_count = 0;
  double median = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
  std::vector<double> magnitudes;  // one per trial, in trial order
};

inline double empirical_quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// offdiag_suppression(0, 1) for `trials` uniform two-outcome apparatus
/// ensembles of M microstates. Trial t uses apparatus seed
/// derive_seed(seed, t).
inline SuppressionSummary suppression_statistics(std::size_t micro_count, std::size_t trials,
                                                 std::uint64_t seed) {
  if (trials == 0) throw ValidationError("need at least one trial");
  SuppressionSummary s;
  s.micro_count = micro_count;
  s.magnitudes.reserve(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto app = build_apparatus(micro_count, std::nullopt, 2, derive_seed(seed, t));
    s.magnitudes.push_back(offdiag_suppression(app, 0, 1));
  }
  s.median = empirical_quantile(s.magnitudes, 0.5);
  s.p95 = empirical_quantile(s.magnitudes, 0.95);
  s.p99 = empirical_quantile(s.magnitudes, 0.99);
  return s;
}

/// Least-squares exponent p of median ~ M^p over a suppression curve.
inline double fitted_exponent(const std::vector<SuppressionSummary>& curve) {
  if (curve.size() < 2) throw ValidationError("need at least two points to fit");
  double mx = 0.0, my = 0.0;
  for (const auto& s : curve) {
    mx += std::log(static_cast<double>(s.micro_count));
    my += std::log(s.median);
  }
  mx /= static_cast<double>(curve.size());
  my /= static_cast<double>(curve.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& s : curve) {
    const double x = std::log(static_cast<double>(s.micro_count)) - mx;
    sxy += x * (std::log(s.median) - my);
    sxx += x * x;
  }
  return sxy / sxx;
}

}  // namespace ensemblelab::measure
