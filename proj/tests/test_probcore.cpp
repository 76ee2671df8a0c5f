#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ensemblelab/probcore.hpp"
#include "test_support.hpp"

using namespace ensemblelab;
using namespace ensemblelab::prob;
using Catch::Approx;

TEST_CASE("entropy of reference distributions", "[probcore]") {
  CHECK(entropy(DiscreteDistribution::uniform(4)) == Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(entropy(DiscreteDistribution({1.0, 0.0, 0.0})) == 0.0);
  CHECK(entropy(DiscreteDistribution({0.5, 0.25, 0.25})) ==
        Approx(1.5 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("distribution validation", "[probcore]") {
  CHECK_THROWS_AS(DiscreteDistribution({0.5, -0.1, 0.6}), ValidationError);
  CHECK_THROWS_AS(DiscreteDistribution({0.5, 0.4}), ValidationError);
  CHECK_THROWS_AS(DiscreteDistribution(std::vector<double>{}), ValidationError);
  CHECK_THROWS_AS(DiscreteDistribution({NAN, 1.0}), ValidationError);
  // Renormalization happens only on request.
  auto d = DiscreteDistribution::normalized({2.0, 6.0});
  CHECK(d[0] == 0.25);
  CHECK(d[1] == 0.75);
}

TEST_CASE("entropy is permutation invariant and bounded", "[probcore][property]") {
  auto rng = test::rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = test::random_simplex(rng, 1 + trial % 50);
    const double s = entropy(DiscreteDistribution(p));
    CHECK(s >= 0.0);
    CHECK(s <= std::log(static_cast<double>(p.size())));
    std::shuffle(p.begin(), p.end(), rng);
    CHECK(entropy(DiscreteDistribution(p)) == Approx(s).margin(1e-14));
  }
}

TEST_CASE("decompose: worked examples", "[probcore]") {
  SECTION("uniform four states in two blocks") {
    auto d = decompose(PartitionedDistribution::from_blocks({{0.25, 0.25}, {0.25, 0.25}}));
    CHECK(d.total == Approx(std::log(4.0)).epsilon(1e-14));
    CHECK(d.coarse == Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(d.residual == Approx(std::log(2.0)).epsilon(1e-14));
  }
  SECTION("unequal blocks") {
    // Frozen from direct evaluation: coarse = ln 2, residual = 0.5 S(0.6, 0.4),
    // total = S(0.5, 0.3, 0.2).
    auto d = decompose(PartitionedDistribution::from_blocks({{0.5}, {0.3, 0.2}}));
    CHECK(d.coarse == Approx(0.6931471805599453).epsilon(1e-13));
    CHECK(d.residual == Approx(0.33650583350462826).epsilon(1e-13));
    CHECK(d.total == Approx(1.0296530140645737).epsilon(1e-13));
    CHECK(d.per_block_conditional[0] == 0.0);
  }
  SECTION("single block") {
    auto d = decompose(PartitionedDistribution::from_blocks({{0.1, 0.2, 0.7}}));
    CHECK(d.coarse == 0.0);
    CHECK(d.residual == Approx(d.total).margin(1e-15));
  }
  SECTION("zero-mass block contributes nothing") {
    auto d = decompose(PartitionedDistribution::from_blocks({{0.5, 0.5}, {0.0, 0.0}}));
    CHECK(d.per_block_conditional[1] == 0.0);
    CHECK(d.residual == Approx(std::log(2.0)));
    CHECK(d.coarse == 0.0);
  }
  SECTION("invalid joint") {
    CHECK_THROWS_AS(PartitionedDistribution::from_blocks({{0.5}, {0.3}}), ValidationError);
    CHECK_THROWS_AS(PartitionedDistribution::from_blocks({{0.5}, {-0.1, 0.6}}), ValidationError);
  }
}

TEST_CASE("decompose identity on random partitions", "[probcore][property]") {
  auto rng = test::rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    auto joint = test::random_partition(rng, 2000);
    auto d = decompose(joint);
    CHECK(std::abs(d.total - (d.coarse + d.residual)) <= 1e-12);
  }
}

TEST_CASE("information", "[probcore]") {
  CHECK(information(DiscreteDistribution::uniform(8), std::log(8.0)) == 0.0);
  CHECK(information(DiscreteDistribution::point_mass(8, 3), std::log(8.0)) ==
        Approx(2.0794415416798357).epsilon(1e-14));
  CHECK(information(DiscreteDistribution({0.5, 0.5, 0.0, 0.0}), std::log(4.0)) ==
        Approx(std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(information(DiscreteDistribution::uniform(8), std::log(4.0)), ConstraintError);
}

TEST_CASE("info_decompose", "[probcore]") {
  SECTION("maximally random at every level") {
    auto joint = PartitionedDistribution::from_blocks({{0.25, 0.25}, {0.25, 0.25}});
    const std::vector<double> cond{std::log(2.0), std::log(2.0)};
    auto i = info_decompose(joint, std::log(2.0), cond);
    CHECK(i.total == Approx(0.0).margin(1e-15));
    CHECK(i.coarse == Approx(0.0).margin(1e-15));
    CHECK(i.residual == Approx(0.0).margin(1e-15));
  }
  SECTION("point mass in one block of n states") {
    // Blocks of sizes 3 and 3, mass on state 0. Closed form: I_coarse = ln 2,
    // I_cond(0) = ln 3 at weight 1, so I_total = ln 2 + ln 3 = ln 6.
    auto joint = PartitionedDistribution::from_blocks({{1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}});
    const std::vector<double> cond{std::log(3.0), std::log(3.0)};
    auto i = info_decompose(joint, std::log(2.0), cond);
    CHECK(i.total == Approx(std::log(6.0)).epsilon(1e-14));
    CHECK(i.coarse == Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(i.residual == Approx(std::log(3.0)).epsilon(1e-14));
  }
  SECTION("unequal blocks, identity to 1e-12") {
    auto joint = PartitionedDistribution::from_blocks({{0.5}, {0.3, 0.2}});
    const std::vector<double> cond{0.0, std::log(2.0)};
    auto i = info_decompose(joint, std::log(2.0), cond);
    CHECK(std::abs(i.total - (i.coarse + i.residual)) <= 1e-12);
    CHECK(i.coarse == Approx(0.0).margin(1e-15));
  }
  SECTION("bound below entropy") {
    auto joint = PartitionedDistribution::from_blocks({{0.5}, {0.3, 0.2}});
    const std::vector<double> cond{0.0, 0.1};
    CHECK_THROWS_AS(info_decompose(joint, std::log(2.0), cond), ConstraintError);
  }
}

TEST_CASE("canonical distribution", "[probcore]") {
  auto p = canonical({{0.0, 1.0}, 1.0 / std::log(2.0)});
  CHECK(p[0] == Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(p[1] == Approx(1.0 / 3.0).epsilon(1e-14));

  auto flat = canonical({{3.0, 3.0, 3.0, 3.0}, 0.7});
  for (double x : flat.probs()) CHECK(x == 0.25);

  auto hot = canonical({{0.0, 1.0}, 1e9});
  CHECK(std::abs(hot[0] - 0.5) < 1e-9);

  // No overflow with large energies.
  auto big = canonical({{1e5, 1e5 + 1.0}, 1.0});
  CHECK(big[0] == Approx(std::exp(1.0) / (1.0 + std::exp(1.0))));

  CHECK_THROWS_AS(canonical({{0.0, INFINITY}, 1.0}), ValidationError);
  CHECK_THROWS_AS(canonical({{0.0, 1.0}, 0.0}), ValidationError);
  CHECK_THROWS_AS(canonical({{0.0, 1.0}, -1.0}), ValidationError);
}

TEST_CASE("temperature_for_mean_energy", "[probcore]") {
  const std::vector<double> e{0.0, 1.0};
  CHECK(temperature_for_mean_energy(e, 1.0 / 3.0) ==
        Approx(1.0 / std::log(2.0)).epsilon(1e-9));
  CHECK(temperature_for_mean_energy(e, 0.3) == Approx(1.0 / std::log(7.0 / 3.0)).epsilon(1e-9));

  // Mean energy reached within 1e-10.
  const std::vector<double> levels{-1.0, 0.3, 0.5, 2.0, 4.0};
  for (double target : {-0.9, -0.5, 0.0, 0.5, 1.1}) {
    const double t = temperature_for_mean_energy(levels, target);
    CHECK(std::abs(mean_energy(canonical({levels, t}), levels) - target) <= 1e-10);
  }

  // Monotone approach to T -> 0 as the target approaches the ground energy.
  double prev = INFINITY;
  for (double target : {0.3, 0.1, 1e-2, 1e-4, 1e-8}) {
    const double t = temperature_for_mean_energy(e, target);
    CHECK(t > 0.0);
    CHECK(t < prev);
    prev = t;
  }

  CHECK_THROWS_AS(temperature_for_mean_energy(e, 0.0), UnreachableMeanError);
  CHECK_THROWS_AS(temperature_for_mean_energy(e, 0.5), UnreachableMeanError);
  CHECK_THROWS_AS(temperature_for_mean_energy(e, 0.7), UnreachableMeanError);
  CHECK_THROWS_AS(temperature_for_mean_energy(std::vector<double>{1.0}, 0.5), ValidationError);
}

TEST_CASE("refine", "[probcore]") {
  auto d = DiscreteDistribution({0.1, 0.6, 0.3});
  auto same = refine(d, 1);
  CHECK(std::equal(same.probs().begin(), same.probs().end(), d.probs().begin()));

  auto six = refine(DiscreteDistribution::uniform(2), 3);
  REQUIRE(six.size() == 6);
  for (double x : six.probs()) CHECK(x == Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(entropy(six) == Approx(std::log(6.0)).epsilon(1e-14));

  CHECK_THROWS_AS(refine(d, 0), ValidationError);
}

TEST_CASE("refine shifts entropy by ln k and leaves information unchanged",
          "[probcore][property]") {
  auto rng = test::rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto d = DiscreteDistribution(test::random_simplex(rng, 1 + trial % 20));
    const std::size_t k = 1 + trial % 7;
    auto r = refine(d, k);
    CHECK(entropy(r) == Approx(entropy(d) + std::log(double(k))).margin(1e-12));
    const double s_max = std::log(double(d.size()));
    const double s_max_refined = std::log(double(d.size() * k));
    CHECK(std::abs(information(r, s_max_refined) - information(d, s_max)) <= 1e-12);

    // Composition: refine(refine(d, a), b) == refine(d, a*b).
    const std::size_t a = 1 + trial % 3, b = 1 + trial % 4;
    auto two = refine(refine(d, a), b);
    auto one = refine(d, a * b);
    REQUIRE(two.size() == one.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
      CHECK(two[i] == Approx(one[i]).epsilon(1e-15));
    }
  }
}

TEST_CASE("canonical KKT constancy and Gibbs maximality", "[probcore][property]") {
  auto rng = test::rng(99);
  for (int set = 0; set < 5; ++set) {
    const auto energies = test::random_levels(rng, 3 + set * 2);
    const double t = 0.3 + set * 0.7;
    const auto p = canonical({energies, t});
    const double base = std::log(p[0]) + energies[0] / t;
    for (std::size_t k = 1; k < energies.size(); ++k) {
      CHECK(std::abs(std::log(p[k]) + energies[k] / t - base) <= 1e-10);
    }
    const double s = entropy(p);
    for (int j = 0; j < 200; ++j) {
      const auto q = test::constrained_perturbation(rng, p, energies);
      CHECK(entropy(DiscreteDistribution(q)) < s);
    }
  }
}

TEST_CASE("thermodynamic identity dS/dE = 1/T", "[probcore][property]") {
  const std::vector<double> levels{0.0, 0.4, 1.0, 1.7, 2.5, 4.0};
  for (double t : {0.2, 0.5, 1.0, 2.0, 5.0}) {
    const double h = 1e-4 * t;
    const auto lo = canonical({levels, t - h});
    const auto hi = canonical({levels, t + h});
    const double ds = entropy(hi) - entropy(lo);
    const double de = mean_energy(hi, levels) - mean_energy(lo, levels);
    CHECK(std::abs(ds / de * t - 1.0) <= 1e-4);
  }
}
