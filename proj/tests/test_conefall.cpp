#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ensemblelab/conefall.hpp"
#include "test_support.hpp"

using namespace ensemblelab;
using namespace ensemblelab::cone;
using Catch::Approx;

namespace {

// Planar fall time from rest at tilt a to tilt b (g = l = 1), from
// (1/2) theta'^2 = cos a - cos theta. With theta = a cosh s the integrand is
// smooth at the turning point; cos a - cos theta is written as a product of
// sines to avoid cancellation.
double fall_time_oracle(double a, double b) {
  auto f = [a](double s) {
    if (s == 0.0) return a / std::sqrt(a * std::sin(a));
    const double th = a * std::cosh(s);
    const double half_gap = a * std::sinh(0.5 * s) * std::sinh(0.5 * s);  // (th - a) / 2
    const double diff = 2.0 * std::sin(0.5 * (th + a)) * std::sin(half_gap);
    return a * std::sinh(s) / std::sqrt(2.0 * diff);
  };
  const double upper = std::acosh(b / a);
  const int n = 200000;
  const double h = upper / n;
  double acc = f(0.0) + f(upper);
  for (int i = 1; i < n; ++i) acc += f(i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

InitialMacrostate symmetric_macro() {
  InitialMacrostate m;
  m.center = {0.0, 0.0, 0.0, 0.0};
  m.radii = {0.05, std::numbers::pi, 0.05, 1e-3};
  return m;
}

InitialMacrostate biased_macro() {
  InitialMacrostate m;
  m.center = {0.05, 0.0, 0.0, 0.0};
  m.radii = {0.02, 0.3, 0.01, 1e-3};
  return m;
}

}  // namespace

TEST_CASE("chart conversions round-trip", "[conefall]") {
  auto g = test::rng(7);
  for (int i = 0; i < 200; ++i) {
    PhaseState s{1.4 * test::unit(g) + 1e-3, 6.28 * test::unit(g), test::unit(g) - 0.5,
                 test::unit(g) - 0.5};
    const auto back = from_canonical(to_canonical(s));
    CHECK(back.tilt == Approx(s.tilt).margin(1e-12));
    CHECK(back.azimuth == Approx(s.azimuth).margin(1e-12));
    CHECK(back.tilt_momentum == Approx(s.tilt_momentum).margin(1e-12));
    CHECK(back.azimuth_momentum == Approx(s.azimuth_momentum).margin(1e-12));
  }
  // Energy in both charts agrees.
  PhaseState s{0.4, 1.0, 0.3, 0.2};
  const double polar = 0.5 * s.tilt_momentum * s.tilt_momentum +
                       0.5 * s.azimuth_momentum * s.azimuth_momentum / std::pow(std::sin(s.tilt), 2) +
                       std::cos(s.tilt);
  CHECK(energy(to_canonical(s), {}) == Approx(polar).epsilon(1e-14));
  CHECK_THROWS_AS(to_canonical({0.0, 0.0, 0.0, 0.1}), ValidationError);
  CHECK_THROWS_AS(to_canonical({std::nan(""), 0.0, 0.0, 0.0}), NumericsError);
}

TEST_CASE("integrate", "[conefall]") {
  SECTION("equilibrium is a fixed point") {
    const PhaseState eq{0.0, 1.3, 0.0, 0.0};
    const auto out = integrate(eq, 1e-3, 5000);
    CHECK(out.tilt == 0.0);
    CHECK(out.azimuth == 1.3);
    CHECK(out.tilt_momentum == 0.0);
    CHECK(out.azimuth_momentum == 0.0);
  }
  SECTION("azimuthal rotation is equivariant") {
    const PhaseState s{0.2, 0.4, 0.1, 0.05};
    const auto a = integrate(s, 1e-3, 800);
    for (double rot : {0.7, 2.0, 4.5}) {
      auto r = s;
      r.azimuth += rot;
      const auto b = integrate(r, 1e-3, 800);
      CHECK(b.tilt == Approx(a.tilt).margin(1e-12));
      CHECK(wrap_angle(b.azimuth - a.azimuth) == Approx(rot).margin(1e-10));
      CHECK(b.tilt_momentum == Approx(a.tilt_momentum).margin(1e-11));
      CHECK(b.azimuth_momentum == Approx(a.azimuth_momentum).margin(1e-11));
    }
  }
  SECTION("small tilt grows monotonically and matches the quadrature fall time") {
    auto s = to_canonical({1e-6, 0.7, 0.0, 0.0});
    double prev = 0.0;
    bool monotone = true;
    for (int n = 0; n < 2000; ++n) {
      s = rk4_step(s, 1e-3, {});
      const double r = std::sqrt(s.q[0] * s.q[0] + s.q[1] * s.q[1]);
      monotone = monotone && r > prev;
      prev = r;
    }
    CHECK(monotone);
    RunConfig cfg;
    const auto out = fall({1e-6, 0.7, 0.0, 0.0}, cfg);
    REQUIRE(out.resolved);
    const double oracle = fall_time_oracle(1e-6, 1.0);
    CHECK(out.fall_time == Approx(oracle).epsilon(1e-3));
    CHECK(out.final_azimuth == Approx(0.7).margin(1e-12));
  }
  SECTION("energy drift") {
    const auto s0 = to_canonical({1e-6, 0.3, 2e-7, 1e-14});
    const auto s1 = integrate(s0, 1e-3, 10000);
    CHECK(std::abs(energy(s1, {}) - energy(s0, {})) / energy(s0, {}) <= 1e-6);
    const auto f0 = to_canonical({0.05, 1.0, 0.01, 0.002});
    RunConfig cfg;
    const auto out = fall({0.05, 1.0, 0.01, 0.002}, cfg);
    const auto f1 = to_canonical(out.final_state);
    CHECK(std::abs(energy(f1, {}) - energy(f0, {})) / energy(f0, {}) <= 1e-6);
  }
  SECTION("errors") {
    CHECK_THROWS_AS(integrate(PhaseState{0.1, 0.0, 0.0, 0.0}, 0.0, 10), ValidationError);
    CanonicalState bad;
    bad.q = {std::numeric_limits<double>::infinity(), 0.0};
    CHECK_THROWS_AS(integrate(bad, 1e-3, 1), NumericsError);
  }
}

TEST_CASE("sample_initial", "[conefall][statistical]") {
  auto m = biased_macro();
  std::array<std::vector<double>, 4> xs;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto p = sample_box(m, derive_seed(5, s));
    const std::array<double, 4> v = {p.tilt, p.azimuth, p.tilt_momentum, p.azimuth_momentum};
    const std::array<double, 4> c = {m.center.tilt, m.center.azimuth, m.center.tilt_momentum,
                                     m.center.azimuth_momentum};
    for (int a = 0; a < 4; ++a) {
      CHECK(v[a] >= c[a] - m.radii[a]);
      CHECK(v[a] < c[a] + m.radii[a]);
      xs[a].push_back((v[a] - (c[a] - m.radii[a])) / (2.0 * m.radii[a]));
    }
  }
  for (int a = 0; a < 4; ++a) {
    CHECK(test::ks_statistic(xs[a], [](double x) { return x; }) < test::ks_critical(10000, 0.01));
  }
  const auto a = sample_initial(m, 3), b = sample_initial(m, 3);
  CHECK(a.tilt == b.tilt);
  CHECK(a.azimuth == b.azimuth);

  auto zero = m;
  zero.radii[2] = 0.0;
  CHECK_THROWS_AS(sample_initial(zero, 1), ValidationError);
}

TEST_CASE("sector_of centers sector 0 on azimuth 0", "[conefall]") {
  CHECK(sector_of(0.0, 8) == 0);
  CHECK(sector_of(kTwoPi - 0.1, 8) == 0);
  CHECK(sector_of(kTwoPi / 8, 8) == 1);
  CHECK(sector_of(kTwoPi / 16 + 1e-9, 8) == 1);
  CHECK(sector_of(kTwoPi / 16 - 1e-9, 8) == 0);
  CHECK(sector_of(std::numbers::pi, 2) == 1);
}

TEST_CASE("symmetric macrostate falls uniformly", "[conefall][statistical]") {
  const auto res = run_ensemble(symmetric_macro(), 8000, 8, 2024);
  CHECK(res.unresolved == 0);
  CHECK(res.chi2_uniform < test::chi2_critical(7, 0.01));
  REQUIRE(res.sector_distribution);
  CHECK(prob::entropy(*res.sector_distribution) > 0.0);
  CHECK(res.members.size() == 8000);
}

TEST_CASE("biased macrostate and equivariance", "[conefall][statistical]") {
  const auto macro = biased_macro();
  const auto small = run_ensemble(macro, 800, 8, 11);
  const auto large = run_ensemble(macro, 8000, 8, 12);
  auto mode = [](const EnsembleResult& r) {
    return std::size_t(std::max_element(r.counts.begin(), r.counts.end()) - r.counts.begin());
  };
  CHECK(mode(large) == 0);
  CHECK(mode(small) == mode(large));

  const double w = kTwoPi / 8;
  const auto rotated = run_ensemble(macro.rotated(w), 800, 8, 11);
  std::size_t mismatched = 0;
  for (std::size_t m = 0; m < 800; ++m) {
    mismatched += std::size_t((small.members[m].sector + 1) % 8 != rotated.members[m].sector);
  }
  CHECK(mismatched <= 4);
  for (std::size_t s = 0; s < 8; ++s) {
    CHECK(std::abs(double(rotated.counts[(s + 1) % 8]) - double(small.counts[s])) <= 4.0);
  }
}

TEST_CASE("run_ensemble bookkeeping", "[conefall]") {
  const auto one = run_ensemble(biased_macro(), 1, 8, 3);
  REQUIRE(one.sector_distribution);
  double top = 0.0;
  for (double p : one.sector_distribution->probs()) top = std::max(top, p);
  CHECK(top == 1.0);

  const auto again = run_ensemble(biased_macro(), 50, 8, 3);
  const auto repeat = run_ensemble(biased_macro(), 50, 8, 3);
  for (std::size_t m = 0; m < 50; ++m) {
    CHECK(again.members[m].sector == repeat.members[m].sector);
    CHECK(again.members[m].fall_time == repeat.members[m].fall_time);
  }

  RunConfig tiny;
  tiny.max_steps = 10;
  const auto stuck = run_ensemble(biased_macro(), 20, 8, 3, tiny);
  CHECK(stuck.unresolved == 20);
  CHECK_FALSE(stuck.sector_distribution);
  for (const auto& m : stuck.members) CHECK(m.sector == -1);

  CHECK_FALSE(fall({0.0, 0.0, 0.0, 0.0}, tiny).resolved);
  CHECK_THROWS_AS(run_ensemble(biased_macro(), 0, 8, 3), ValidationError);
  CHECK_THROWS_AS(run_ensemble(biased_macro(), 5, 1, 3), ValidationError);
}

TEST_CASE("liouville_check", "[conefall]") {
  const auto macro = symmetric_macro();
  const auto ident = liouville_check(macro, 1e-3, 0, 16, 1);
  for (double r : ident.ratios) CHECK(r == 1.0);

  const auto rep = liouville_check(macro, 1e-3, 1000, 64, 1);
  CHECK(rep.ratios.size() == 8);
  CHECK(rep.max_deviation < 1e-4);
  const auto finer = liouville_check(macro, 1e-3, 1000, 64, 1, {}, 2.5e-6);
  for (std::size_t i = 0; i < rep.ratios.size(); ++i) {
    CHECK(rep.ratios[i] == Approx(finer.ratios[i]).margin(1e-6));
  }

  // Damping gamma contracts volume by exactly exp(-2 gamma t).
  ConeParams damped;
  damped.damping = 0.5;
  const auto lossy = liouville_check(macro, 1e-3, 1000, 16, 1, damped);
  for (double r : lossy.ratios) CHECK(r == Approx(std::exp(-1.0)).epsilon(1e-6));
  CHECK(lossy.mean_ratio < 1.0 - 0.5);

  CHECK_THROWS_AS(liouville_check(macro, 1e-3, 10, 4, 1), ValidationError);
  CHECK_THROWS_AS(liouville_check(macro, 1e-3, 10, 12, 1), ValidationError);
}

TEST_CASE("fast members near the axis are substepped", "[conefall]") {
  // Azimuthal momentum at tiny tilt gives a canonical momentum in the
  // thousands; a single step of dt would leave the hemisphere.
  const PhaseState fast{3.12776e-07, 4.52343, -0.0445421, 0.000812045};
  const auto coarse = fall(fast, RunConfig{});
  REQUIRE(coarse.resolved);
  CHECK(coarse.fall_time < 1e-3);
  RunConfig fine;
  fine.dt = 1e-7;
  const auto ref = fall(fast, fine);
  REQUIRE(ref.resolved);
  CHECK(coarse.fall_time == Approx(ref.fall_time).epsilon(1e-3));
  CHECK(std::abs(std::remainder(coarse.final_azimuth - ref.final_azimuth, kTwoPi)) < 1e-3);
}
