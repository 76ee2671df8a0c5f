#pragma once

// Classical phase-oscillator model of the spin echo. Each spin precesses
// freely at its own frequency; an instantaneous pulse negates every
// accumulated phase, so after a second interval of the same length every
// phase returns to zero.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "ensemblelab/common.hpp"
#include "ensemblelab/probcore.hpp"

namespace ensemblelab::echo {

/// Frequencies uniform on [center - half_width, center + half_width).
struct UniformSpread {
  double center = 0.0;
  double half_width = 0.0;
};

/// Frequencies normal with mean `center` and standard deviation `sigma`.
struct NormalSpread {
  double center = 0.0;
  double sigma = 0.0;
};

using FrequencySpread = std::variant<UniformSpread, NormalSpread>;

inline void validate(const FrequencySpread& spread) {
  std::visit(
      [](const auto& s) {
        double width;
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, UniformSpread>) {
          width = s.half_width;
        } else {
          width = s.sigma;
        }
        if (!std::isfinite(s.center) || !std::isfinite(width) || width < 0.0) {
          throw ValidationError("frequency spread must be finite and non-negative");
        }
      },
      spread);
}

/// Phases are stored unwrapped.
struct SpinEnsemble {
  std::vector<double> frequencies;
  std::vector<double> phases;
  std::uint64_t seed = 0;

  std::size_t size() const { return phases.size(); }
};

/// All phases zero; frequencies drawn i.i.d. on stream 0 of `seed`.
inline SpinEnsemble init_ensemble(std::size_t n, const FrequencySpread& spread,
                                  std::uint64_t seed) {
  if (n == 0) throw ValidationError("need at least one spin");
  validate(spread);
  SpinEnsemble e;
  e.seed = seed;
  e.phases.assign(n, 0.0);
  e.frequencies.resize(n);
  auto rng = make_rng(seed, 0);
  if (const auto* u = std::get_if<UniformSpread>(&spread)) {
    for (auto& w : e.frequencies) {
      w = u->half_width == 0.0 ? u->center
                               : uniform(rng, u->center - u->half_width, u->center + u->half_width);
    }
  } else {
    const auto& g = std::get<NormalSpread>(spread);
    for (auto& w : e.frequencies) {
      w = g.sigma == 0.0 ? g.center : g.center + g.sigma * standard_normal(rng);
    }
  }
  return e;
}

/// phi_i += omega_i t.
inline SpinEnsemble evolve(SpinEnsemble e, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("evolution time must be >= 0");
  for (std::size_t i = 0; i < e.size(); ++i) e.phases[i] += e.frequencies[i] * t;
  return e;
}

/// phi_i = -phi_i.
inline SpinEnsemble apply_pulse(SpinEnsemble e) {
  for (auto& p : e.phases) p = -p;
  return e;
}

/// |sum_i exp(i phi_i)| / n.
inline double magnetization(const std::vector<double>& phases) {
  if (phases.empty()) throw ValidationError("empty ensemble");
  CompensatedSum re, im;
  for (double p : phases) {
    re.add(std::cos(p));
    im.add(std::sin(p));
  }
  const double m = std::hypot(re.value(), im.value()) / static_cast<double>(phases.size());
  return std::min(m, 1.0);
}

/// Occupation of n_bins equal-width bins of [0, 2pi).
inline std::vector<double> phase_histogram(const std::vector<double>& phases, std::size_t n_bins) {
  if (n_bins < 2) throw ValidationError("need at least two phase bins");
  std::vector<double> counts(n_bins, 0.0);
  const double w = kTwoPi / static_cast<double>(n_bins);
  for (double p : phases) {
    auto b = static_cast<std::size_t>(wrap_angle(p) / w);
    if (b >= n_bins) b = n_bins - 1;
    counts[b] += 1.0;
  }
  for (auto& c : counts) c /= static_cast<double>(phases.size());
  return counts;
}

/// Shannon entropy of the binned phase distribution.
inline double binned_entropy(const std::vector<double>& phases, std::size_t n_bins) {
  return prob::entropy_of(phase_histogram(phases, n_bins));
}

/// Expected magnetization after a further free interval as predicted from
/// the binned phase distribution alone: phases spread evenly within bins and
/// carrying no correlation with frequency. The result is the resultant of the
/// bin-centre phasors, times sinc(w/2) for the in-bin spread, times the
/// spread's own dephasing factor |mean exp(i omega t)|.
inline double coarse_grained_prediction(const SpinEnsemble& e, std::size_t n_bins, double t) {
  const auto hist = phase_histogram(e.phases, n_bins);
  const double w = kTwoPi / static_cast<double>(n_bins);
  std::complex<double> r{0.0, 0.0};
  for (std::size_t b = 0; b < n_bins; ++b) {
    r += hist[b] * std::polar(1.0, (static_cast<double>(b) + 0.5) * w);
  }
  const double smear = std::sin(0.5 * w) / (0.5 * w);
  std::vector<double> free_phases(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) free_phases[i] = e.frequencies[i] * t;
  return std::abs(r) * smear * magnetization(free_phases);
}

struct EchoReport {
  double tau = 0.0;
  double echo_time = 0.0;
  std::size_t n_bins = 0;
  std::vector<double> times;
  std::vector<double> magnetization;   // M(t)
  std::vector<double> binned_entropy;  // S_b(t)
  std::size_t pulse_index = 0;         // index of t = tau in the series
  double maxent_echo_prediction = 0.0; // coarse_grained_prediction at tau over tau
};

/// Free precession for tau, pulse, free precession for tau, sampled at
/// samples_per_half + 1 points per half (t = tau j / h, shared at t = tau).
/// Phases at each sample are computed directly from t rather than
/// accumulated, so the echo at 2 tau is exact.
inline EchoReport run_protocol(std::size_t n, const FrequencySpread& spread, double tau,
                               std::size_t n_bins, std::uint64_t seed,
                               std::size_t samples_per_half = 100) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("tau must be positive");
  if (n_bins < 2) throw ValidationError("need at least two phase bins");
  if (samples_per_half == 0) throw ValidationError("need at least one sample per half");
  const auto initial = init_ensemble(n, spread, seed);

  EchoReport rep;
  rep.tau = tau;
  rep.echo_time = 2.0 * tau;
  rep.n_bins = n_bins;
  rep.pulse_index = samples_per_half;
  const double h = static_cast<double>(samples_per_half);

  auto record = [&](double t, const std::vector<double>& phases) {
    rep.times.push_back(t);
    rep.magnetization.push_back(magnetization(phases));
    rep.binned_entropy.push_back(binned_entropy(phases, n_bins));
  };

  for (std::size_t j = 0; j <= samples_per_half; ++j) {
    const double t = tau * (static_cast<double>(j) / h);
    record(t, evolve(initial, t).phases);
  }
  const auto flipped = apply_pulse(evolve(initial, tau));
  rep.maxent_echo_prediction = coarse_grained_prediction(flipped, n_bins, tau);
  for (std::size_t j = 1; j <= samples_per_half; ++j) {
    const double s = tau * (static_cast<double>(j) / h);
    record(tau + s, evolve(flipped, s).phases);
  }
  return rep;
}

}  // namespace ensemblelab::echo
