#pragma once

// Ensemble of balanced bodies falling from an unstable equilibrium.
//
// Surrogate dynamics: inverted spherical pendulum (point mass on a rigid
// massless rod). With tilt theta from the upward vertical and azimuth phi,
//   H = p_theta^2 / (2 m l^2) + p_phi^2 / (2 m l^2 sin^2 theta) + m g l cos theta.
// The polar chart is singular at the equilibrium itself, so trajectories are
// integrated in the regular horizontal coordinates q = sin(theta) (cos phi,
// sin phi) with conjugate momenta p, where
//   H = (|p|^2 - (q.p)^2) / (2 m l^2) + m g l sqrt(1 - |q|^2).
// This is a point transformation, so (q, p) is canonical and phase volume is
// measured directly in it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ensemblelab/common.hpp"
#include "ensemblelab/probcore.hpp"

namespace ensemblelab::cone {

/// Point in the polar chart. tilt in [0, pi/2], azimuth in [0, 2pi).
struct PhaseState {
  double tilt = 0.0;
  double azimuth = 0.0;
  double tilt_momentum = 0.0;
  double azimuth_momentum = 0.0;
};

/// Point in the regular chart.
struct CanonicalState {
  std::array<double, 2> q{};
  std::array<double, 2> p{};
};

struct ConeParams {
  double gravity = 1.0;
  double length = 1.0;
  double mass = 1.0;
  /// Linear momentum damping. Zero for the physical system; nonzero only as a
  /// dissipative control.
  double damping = 0.0;

  void validate() const {
    if (!(gravity > 0.0) || !(length > 0.0) || !(mass > 0.0) || !std::isfinite(gravity) ||
        !std::isfinite(length) || !std::isfinite(mass)) {
      throw ValidationError("gravity, length and mass must be positive and finite");
    }
    if (!(damping >= 0.0) || !std::isfinite(damping)) {
      throw ValidationError("damping must be non-negative");
    }
  }
};

namespace detail {

inline constexpr double kMaxStepTravel = 0.05;

inline void check_finite(const CanonicalState& s) {
  for (double x : {s.q[0], s.q[1], s.p[0], s.p[1]}) {
    if (!std::isfinite(x)) throw NumericsError("non-finite phase-space state");
  }
}

inline double q_norm2(const CanonicalState& s) { return s.q[0] * s.q[0] + s.q[1] * s.q[1]; }

}  // namespace detail

/// Polar chart to regular chart. A negative tilt is read as the reflected
/// point (|theta|, phi + pi, -p_theta).
inline CanonicalState to_canonical(PhaseState s) {
  if (!std::isfinite(s.tilt) || !std::isfinite(s.azimuth) || !std::isfinite(s.tilt_momentum) ||
      !std::isfinite(s.azimuth_momentum)) {
    throw NumericsError("non-finite phase-space state");
  }
  if (s.tilt < 0.0) {
    s.tilt = -s.tilt;
    s.azimuth += std::numbers::pi;
    s.tilt_momentum = -s.tilt_momentum;
  }
  if (s.tilt >= std::numbers::pi / 2) {
    throw ValidationError("tilt must be below pi/2");
  }
  const double st = std::sin(s.tilt), ct = std::cos(s.tilt);
  const double c = std::cos(s.azimuth), sn = std::sin(s.azimuth);
  double p_radial = s.tilt_momentum / ct;
  double p_azim = 0.0;
  if (st > 0.0) {
    p_azim = s.azimuth_momentum / st;
  } else if (s.azimuth_momentum != 0.0) {
    throw ValidationError("azimuthal momentum must vanish at zero tilt");
  }
  CanonicalState out;
  out.q = {st * c, st * sn};
  out.p = {p_radial * c - p_azim * sn, p_radial * sn + p_azim * c};
  return out;
}

/// Regular chart to polar chart. At q = 0 the azimuth is taken from
/// `azimuth_hint`.
inline PhaseState from_canonical(const CanonicalState& s, double azimuth_hint = 0.0) {
  detail::check_finite(s);
  const double r2 = detail::q_norm2(s);
  if (r2 >= 1.0) throw NumericsError("trajectory left the upper hemisphere");
  const double st = std::sqrt(r2);
  PhaseState out;
  out.tilt = std::asin(st);
  out.azimuth = st > 0.0 ? wrap_angle(std::atan2(s.q[1], s.q[0])) : wrap_angle(azimuth_hint);
  const double c = std::cos(out.azimuth), sn = std::sin(out.azimuth);
  const double ct = std::sqrt(1.0 - r2);
  out.tilt_momentum = ct * (s.p[0] * c + s.p[1] * sn);
  out.azimuth_momentum = s.q[0] * s.p[1] - s.q[1] * s.p[0];
  return out;
}

inline double energy(const CanonicalState& s, const ConeParams& par) {
  const double ml2 = par.mass * par.length * par.length;
  const double qp = s.q[0] * s.p[0] + s.q[1] * s.p[1];
  const double pp = s.p[0] * s.p[0] + s.p[1] * s.p[1];
  return 0.5 * (pp - qp * qp) / ml2 +
         par.mass * par.gravity * par.length * std::sqrt(1.0 - detail::q_norm2(s));
}

/// Time derivative of (q, p) under Hamilton's equations plus damping.
inline CanonicalState derivative(const CanonicalState& s, const ConeParams& par) {
  const double ml2 = par.mass * par.length * par.length;
  const double mgl = par.mass * par.gravity * par.length;
  const double r2 = detail::q_norm2(s);
  if (r2 >= 1.0) throw NumericsError("trajectory left the upper hemisphere");
  const double qp = s.q[0] * s.p[0] + s.q[1] * s.p[1];
  const double push = mgl / std::sqrt(1.0 - r2);
  CanonicalState d;
  for (int a = 0; a < 2; ++a) {
    d.q[a] = (s.p[a] - qp * s.q[a]) / ml2;
    d.p[a] = qp * s.p[a] / ml2 + push * s.q[a] - par.damping * s.p[a];
  }
  return d;
}

/// One classical fourth-order Runge-Kutta step.
inline CanonicalState rk4_step(const CanonicalState& s, double dt, const ConeParams& par) {
  auto axpy = [](const CanonicalState& x, double h, const CanonicalState& d) {
    CanonicalState y;
    for (int a = 0; a < 2; ++a) {
      y.q[a] = x.q[a] + h * d.q[a];
      y.p[a] = x.p[a] + h * d.p[a];
    }
    return y;
  };
  const auto k1 = derivative(s, par);
  const auto k2 = derivative(axpy(s, 0.5 * dt, k1), par);
  const auto k3 = derivative(axpy(s, 0.5 * dt, k2), par);
  const auto k4 = derivative(axpy(s, dt, k3), par);
  CanonicalState out;
  for (int a = 0; a < 2; ++a) {
    out.q[a] = s.q[a] + dt / 6.0 * (k1.q[a] + 2.0 * k2.q[a] + 2.0 * k3.q[a] + k4.q[a]);
    out.p[a] = s.p[a] + dt / 6.0 * (k1.p[a] + 2.0 * k2.p[a] + 2.0 * k3.p[a] + k4.p[a]);
  }
  detail::check_finite(out);
  return out;
}

inline CanonicalState integrate(CanonicalState s, double dt, std::uint64_t steps,
                                const ConeParams& par = {}) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be positive");
  par.validate();
  detail::check_finite(s);
  for (std::uint64_t n = 0; n < steps; ++n) s = rk4_step(s, dt, par);
  return s;
}

inline PhaseState integrate(const PhaseState& state, double dt, std::uint64_t steps,
                            const ConeParams& par = {}) {
  return from_canonical(integrate(to_canonical(state), dt, steps, par), state.azimuth);
}

/// Uniform distribution on a box in the polar chart.
struct InitialMacrostate {
  PhaseState center;
  std::array<double, 4> radii{};  // tilt, azimuth, tilt momentum, azimuth momentum

  void validate() const {
    for (double r : radii) {
      if (!(r > 0.0) || !std::isfinite(r)) {
        throw ValidationError("support half-widths must be positive and finite");
      }
    }
    if (std::abs(center.tilt) + radii[0] >= std::numbers::pi / 2) {
      throw ValidationError("tilt support must stay below pi/2");
    }
  }

  /// Same box rotated about the vertical by `angle`.
  InitialMacrostate rotated(double angle) const {
    auto out = *this;
    out.center.azimuth += angle;
    return out;
  }
};

/// One uniform draw from the support box, on stream 0 of `seed`, coordinates
/// drawn in the order tilt, azimuth, tilt momentum, azimuth momentum. The raw
/// draw may have negative tilt; see to_canonical.
inline PhaseState sample_box(const InitialMacrostate& macro, std::uint64_t seed) {
  macro.validate();
  auto rng = make_rng(seed, 0);
  const auto& c = macro.center;
  const auto& r = macro.radii;
  PhaseState s;
  s.tilt = uniform(rng, c.tilt - r[0], c.tilt + r[0]);
  s.azimuth = uniform(rng, c.azimuth - r[1], c.azimuth + r[1]);
  s.tilt_momentum = uniform(rng, c.tilt_momentum - r[2], c.tilt_momentum + r[2]);
  s.azimuth_momentum = uniform(rng, c.azimuth_momentum - r[3], c.azimuth_momentum + r[3]);
  return s;
}

/// sample_box folded into the polar chart's ranges.
inline PhaseState sample_initial(const InitialMacrostate& macro, std::uint64_t seed) {
  auto s = sample_box(macro, seed);
  if (s.tilt < 0.0) {
    s.tilt = -s.tilt;
    s.azimuth += std::numbers::pi;
    s.tilt_momentum = -s.tilt_momentum;
  }
  s.azimuth = wrap_angle(s.azimuth);
  return s;
}

struct RunConfig {
  double dt = 1e-3;
  std::uint64_t max_steps = 1'000'000;
  double fall_threshold = 1.0;
  ConeParams params;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be positive");
    if (max_steps == 0) throw ValidationError("max_steps must be positive");
    if (!(fall_threshold > 0.0) || !(fall_threshold < std::numbers::pi / 2)) {
      throw ValidationError("fall threshold must lie in (0, pi/2)");
    }
    params.validate();
  }
};

struct FallOutcome {
  bool resolved = false;
  double fall_time = std::numeric_limits<double>::quiet_NaN();
  double final_azimuth = std::numeric_limits<double>::quiet_NaN();
  PhaseState final_state;
};

/// Sector index for an azimuth. Sector s covers [s w - w/2, s w + w/2) with
/// w = 2pi / n_sectors, so sector 0 is centered on azimuth 0.
inline std::size_t sector_of(double azimuth, std::size_t n_sectors) {
  const double w = kTwoPi / static_cast<double>(n_sectors);
  const double x = wrap_angle(azimuth + 0.5 * w);
  auto s = static_cast<std::size_t>(std::floor(x / w));
  return s % n_sectors;
}

/// Integrates until the tilt reaches the threshold. The crossing time and
/// azimuth are interpolated linearly within the final step.
inline FallOutcome fall(const PhaseState& initial, const RunConfig& cfg) {
  cfg.validate();
  const double threshold = std::sin(cfg.fall_threshold);
  const double t2 = threshold * threshold;
  auto s = to_canonical(initial);
  FallOutcome out;
  if (detail::q_norm2(s) >= t2) {
    out.resolved = true;
    out.fall_time = 0.0;
    out.final_state = from_canonical(s, initial.azimuth);
    out.final_azimuth = out.final_state.azimuth;
    return out;
  }
  for (std::uint64_t n = 0; n < cfg.max_steps; ++n) {
    // Members launched close to the axis with azimuthal momentum move fast;
    // split such steps so q travels at most kMaxStepTravel per substep.
    const auto d = derivative(s, cfg.params);
    const double travel = std::hypot(d.q[0], d.q[1]) * cfg.dt;
    const auto parts =
        static_cast<std::uint64_t>(std::max(1.0, std::ceil(travel / detail::kMaxStepTravel)));
    const double h = cfg.dt / static_cast<double>(parts);
    for (std::uint64_t j = 0; j < parts; ++j) {
      const auto next = rk4_step(s, h, cfg.params);
      const double r_prev = std::sqrt(detail::q_norm2(s));
      const double r_next = std::sqrt(detail::q_norm2(next));
      if (r_next >= threshold) {
        const double f = (threshold - r_prev) / (r_next - r_prev);
        CanonicalState cross;
        for (int a = 0; a < 2; ++a) {
          cross.q[a] = s.q[a] + f * (next.q[a] - s.q[a]);
          cross.p[a] = s.p[a] + f * (next.p[a] - s.p[a]);
        }
        out.resolved = true;
        out.fall_time = static_cast<double>(n) * cfg.dt + (static_cast<double>(j) + f) * h;
        out.final_state = from_canonical(cross, initial.azimuth);
        out.final_azimuth = out.final_state.azimuth;
        return out;
      }
      s = next;
    }
  }
  out.final_state = from_canonical(s, initial.azimuth);
  return out;
}

struct MemberRecord {
  std::uint64_t member = 0;
  std::uint64_t seed = 0;
  bool resolved = false;
  double fall_time = std::numeric_limits<double>::quiet_NaN();
  double final_azimuth = std::numeric_limits<double>::quiet_NaN();
  long sector = -1;  // -1 when unresolved
};

struct EnsembleResult {
  std::size_t n_sectors = 0;
  std::vector<std::uint64_t> counts;  // resolved members per sector
  std::uint64_t unresolved = 0;
  /// Sector law over resolved members; empty when none resolved.
  std::optional<prob::DiscreteDistribution> sector_distribution;
  double fall_time_mean = std::numeric_limits<double>::quiet_NaN();
  double fall_time_stddev = std::numeric_limits<double>::quiet_NaN();
  /// Pearson statistic of the resolved counts against the uniform law.
  double chi2_uniform = std::numeric_limits<double>::quiet_NaN();
  std::vector<MemberRecord> members;
};

/// Member m starts from sample_initial(macro, derive_seed(seed, m)).
inline EnsembleResult run_ensemble(const InitialMacrostate& macro, std::uint64_t n_members,
                                   std::size_t n_sectors, std::uint64_t seed,
                                   const RunConfig& cfg = {}) {
  macro.validate();
  cfg.validate();
  if (n_members == 0) throw ValidationError("need at least one ensemble member");
  if (n_sectors < 2) throw ValidationError("need at least two sectors");

  EnsembleResult res;
  res.n_sectors = n_sectors;
  res.counts.assign(n_sectors, 0);
  res.members.reserve(n_members);
  CompensatedSum t_sum, t_sq;
  std::uint64_t resolved = 0;
  for (std::uint64_t m = 0; m < n_members; ++m) {
    MemberRecord rec;
    rec.member = m;
    rec.seed = derive_seed(seed, m);
    const auto out = fall(sample_initial(macro, rec.seed), cfg);
    if (out.resolved) {
      rec.resolved = true;
      rec.fall_time = out.fall_time;
      rec.final_azimuth = out.final_azimuth;
      rec.sector = static_cast<long>(sector_of(out.final_azimuth, n_sectors));
      ++res.counts[static_cast<std::size_t>(rec.sector)];
      ++resolved;
      t_sum.add(out.fall_time);
      t_sq.add(out.fall_time * out.fall_time);
    } else {
      ++res.unresolved;
    }
    res.members.push_back(rec);
  }
  if (resolved > 0) {
    const double n = static_cast<double>(resolved);
    std::vector<double> w;
    for (auto c : res.counts) w.push_back(static_cast<double>(c));
    res.sector_distribution = prob::DiscreteDistribution::normalized(w);
    res.fall_time_mean = t_sum.value() / n;
    res.fall_time_stddev =
        resolved > 1 ? std::sqrt(std::max(0.0, (t_sq.value() - n * res.fall_time_mean * res.fall_time_mean) / (n - 1.0)))
                     : 0.0;
    const double expected = n / static_cast<double>(n_sectors);
    double chi2 = 0.0;
    for (auto c : res.counts) {
      const double d = static_cast<double>(c) - expected;
      chi2 += d * d / expected;
    }
    res.chi2_uniform = chi2;
  }
  return res;
}

struct LiouvilleReport {
  double mean_ratio = 1.0;
  double max_deviation = 0.0;  // max |det J - 1| over base points
  std::vector<double> ratios;
};

/// Local phase-volume ratio det(d flow / d(q, p)) along trajectories from
/// base points drawn from the macrostate. Each base point uses a bundle of 8
/// probes (central differences along the 4 canonical axes), so n_probe must
/// be a positive multiple of 8. Base point b uses seed derive_seed(seed, b).
inline LiouvilleReport liouville_check(const InitialMacrostate& macro, double dt,
                                       std::uint64_t steps, std::size_t n_probe,
                                       std::uint64_t seed, const ConeParams& par = {},
                                       double h = 1e-5) {
  macro.validate();
  if (n_probe < 8 || n_probe % 8 != 0) {
    throw ValidationError("probe bundle needs a positive multiple of 8 probes");
  }
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be positive");
  LiouvilleReport rep;
  if (steps == 0) {
    // The flow is the identity map.
    rep.ratios.assign(n_probe / 8, 1.0);
    return rep;
  }
  CompensatedSum acc;
  for (std::size_t b = 0; b < n_probe / 8; ++b) {
    const auto base = to_canonical(sample_initial(macro, derive_seed(seed, b)));
    std::array<std::array<double, 4>, 4> jac{};
    for (int axis = 0; axis < 4; ++axis) {
      auto shifted = [&](double sign) {
        auto s = base;
        double& x = axis < 2 ? s.q[axis] : s.p[axis - 2];
        x += sign * h;
        return integrate(s, dt, steps, par);
      };
      const auto plus = shifted(1.0), minus = shifted(-1.0);
      const std::array<double, 4> d = {plus.q[0] - minus.q[0], plus.q[1] - minus.q[1],
                                       plus.p[0] - minus.p[0], plus.p[1] - minus.p[1]};
      for (int row = 0; row < 4; ++row) jac[row][axis] = d[row] / (2.0 * h);
    }
    // Determinant by Gaussian elimination with partial pivoting.
    double det = 1.0;
    for (int col = 0; col < 4; ++col) {
      int piv = col;
      for (int r = col + 1; r < 4; ++r)
        if (std::abs(jac[r][col]) > std::abs(jac[piv][col])) piv = r;
      if (jac[piv][col] == 0.0) throw NumericsError("degenerate probe bundle");
      if (piv != col) {
        std::swap(jac[piv], jac[col]);
        det = -det;
      }
      det *= jac[col][col];
      for (int r = col + 1; r < 4; ++r) {
        const double f = jac[r][col] / jac[col][col];
        for (int c = col; c < 4; ++c) jac[r][c] -= f * jac[col][c];
      }
    }
    if (!std::isfinite(det)) throw NumericsError("non-finite Jacobian determinant");
    rep.ratios.push_back(det);
    rep.max_deviation = std::max(rep.max_deviation, std::abs(det - 1.0));
    acc.add(det);
  }
  rep.mean_ratio = acc.value() / static_cast<double>(rep.ratios.size());
  return rep;
}

}  // namespace ensemblelab::cone
