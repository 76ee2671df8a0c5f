#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ensemblelab/quantum.hpp"
#include "test_support.hpp"

using namespace ensemblelab;
using namespace ensemblelab::quantum;
using Catch::Approx;

namespace {

// Haar-ish random unitary from the QR decomposition of a complex Gaussian.
Matrix random_unitary(test::Rng& g, Eigen::Index d) {
  std::normal_distribution<double> nd;
  Matrix z(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = Complex(nd(g), nd(g));
  Eigen::HouseholderQR<Matrix> qr(z);
  return qr.householderQ() * Matrix::Identity(d, d);
}

std::vector<StateVector> columns(const Matrix& u, std::size_t count) {
  std::vector<StateVector> out;
  for (std::size_t k = 0; k < count; ++k) out.emplace_back(u.col(Eigen::Index(k)));
  return out;
}

Matrix random_hermitian(test::Rng& g, Eigen::Index d) {
  std::normal_distribution<double> nd;
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = Complex(nd(g), nd(g));
  return 0.5 * (a + a.adjoint());
}

}  // namespace

TEST_CASE("density_from_ensemble", "[quantum]") {
  SECTION("single state gives a rank-1 projector") {
    Vector v(2);
    v << Complex(0.6, 0.0), Complex(0.0, 0.8);
    auto rho = density_from_ensemble(prob::DiscreteDistribution({1.0}), {StateVector(v)});
    CHECK((rho.matrix() * rho.matrix() - rho.matrix()).norm() < 1e-15);
  }
  SECTION("computational basis, equal weights") {
    auto rho = density_from_ensemble(prob::DiscreteDistribution({0.5, 0.5}),
                                     {StateVector::basis(2, 0), StateVector::basis(2, 1)});
    CHECK(rho.matrix().isApprox(0.5 * Matrix::Identity(2, 2)));
  }
  SECTION("rotated orthonormal pair") {
    auto g = test::rng(3);
    const Matrix u = random_unitary(g, 2);
    auto rho = density_from_ensemble(prob::DiscreteDistribution({0.7, 0.3}), columns(u, 2));
    CHECK(std::abs(rho.matrix().trace() - Complex(1.0)) < 1e-14);
    const auto ev = rho.eigenvalues();
    CHECK(ev(0) == Approx(0.3).epsilon(1e-12));
    CHECK(ev(1) == Approx(0.7).epsilon(1e-12));
  }
  SECTION("non-orthonormal states rejected") {
    Vector v(2);
    v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    CHECK_THROWS_AS(density_from_ensemble(prob::DiscreteDistribution({0.5, 0.5}),
                                          {StateVector::basis(2, 0), StateVector(v)}),
                    ValidationError);
    CHECK_THROWS_AS(density_from_ensemble(prob::DiscreteDistribution({1.0}),
                                          {StateVector::basis(2, 0), StateVector::basis(2, 1)}),
                    ValidationError);
  }
}

TEST_CASE("type invariants", "[quantum]") {
  Matrix nonherm(2, 2);
  nonherm << 1.0, 1.0, 0.0, 0.0;
  CHECK_THROWS_AS(Observable(nonherm), ValidationError);
  CHECK_THROWS_AS(DensityOperator(Matrix::Identity(2, 2)), ValidationError);  // trace 2
  Matrix neg(2, 2);
  neg << 1.5, 0.0, 0.0, -0.5;
  CHECK_THROWS_AS(DensityOperator(neg), ValidationError);
  Vector unnorm(2);
  unnorm << 1.0, 1.0;
  CHECK_THROWS_AS(StateVector(unnorm), ValidationError);
  CHECK_THROWS_AS(Observable::identity(65), ValidationError);
}

TEST_CASE("expectation", "[quantum]") {
  const auto z = Observable::diagonal({1.0, -1.0});
  auto mixed = DensityOperator(0.5 * Matrix::Identity(2, 2));
  CHECK(expectation(mixed, z) == 0.0);
  auto pure = density_from_ensemble(prob::DiscreteDistribution({1.0}), {StateVector::basis(2, 0)});
  CHECK(expectation(pure, z) == 1.0);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 0.7;
  d(1, 1) = 0.3;
  CHECK(expectation(DensityOperator(d), Observable::diagonal({2.0, -1.0})) ==
        Approx(1.1).epsilon(1e-15));
  CHECK_THROWS_AS(expectation(mixed, Observable::identity(3)), ValidationError);
}

TEST_CASE("expectation is linear and normalized", "[quantum][property]") {
  auto g = test::rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index d = 2 + trial % 7;
    const Matrix u = random_unitary(g, d);
    auto probs = prob::DiscreteDistribution(test::random_simplex(g, std::size_t(d)));
    auto rho = density_from_ensemble(probs, columns(u, std::size_t(d)));
    CHECK(expectation(rho, Observable::identity(std::size_t(d))) == Approx(1.0).epsilon(1e-12));
    const Matrix a = random_hermitian(g, d), b = random_hermitian(g, d);
    const double alpha = test::unit(g) * 4 - 2, beta = test::unit(g) * 4 - 2;
    const double lhs = expectation(rho, Observable(alpha * a + beta * b));
    const double rhs = alpha * expectation(rho, Observable(a)) + beta * expectation(rho, Observable(b));
    CHECK(lhs == Approx(rhs).margin(1e-12));
    // Eigenvalues of the constructed operator are the input probabilities.
    const Eigen::VectorXd evs = rho.eigenvalues();
    std::vector<double> ev(evs.data(), evs.data() + d);
    auto p = std::vector<double>(probs.probs().begin(), probs.probs().end());
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(ev[i] == Approx(p[i]).margin(1e-12));
  }
}

TEST_CASE("projector and macro_fraction", "[quantum]") {
  MacrostatePartition part(3, {{"beta", {0, 1}}, {"gamma", {2}}});
  const auto pb = projector(part, "beta");
  CHECK(pb.matrix().isApprox(Observable::diagonal({1, 1, 0}).matrix()));
  CHECK((pb.matrix() * pb.matrix()).isApprox(pb.matrix()));
  CHECK((pb.matrix() + projector(part, "gamma").matrix()).isApprox(Matrix::Identity(3, 3)));
  CHECK_THROWS_AS(projector(part, "delta"), ValidationError);

  Matrix block = Matrix::Zero(3, 3);
  block(0, 0) = 0.4;
  block(1, 1) = 0.3;
  block(0, 1) = Complex(0.1, 0.05);
  block(1, 0) = std::conj(block(0, 1));
  block(2, 2) = 0.3;
  auto rho = DensityOperator(block);
  CHECK(macro_fraction(rho, part, "beta") == Approx(0.7).epsilon(1e-15));
  CHECK(macro_fraction(rho, part, "gamma") == Approx(0.3).epsilon(1e-15));

  auto inside = density_from_ensemble(prob::DiscreteDistribution({1.0}), {StateVector::basis(3, 1)});
  CHECK(macro_fraction(inside, part, "beta") == 1.0);
  CHECK(macro_fraction(inside, part, "gamma") == 0.0);

  auto maximally_mixed = DensityOperator(Matrix::Identity(3, 3) / 3.0);
  CHECK(macro_fraction(maximally_mixed, part, "beta") == Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(macro_fraction(maximally_mixed, part, "gamma") == Approx(1.0 / 3.0).epsilon(1e-15));

  CHECK_THROWS_AS(MacrostatePartition(3, {{"a", {0, 1}}, {"b", {1, 2}}}), ValidationError);
  CHECK_THROWS_AS(MacrostatePartition(3, {{"a", {0}}, {"b", {2}}}), ValidationError);
}

TEST_CASE("macro fractions sum to one", "[quantum][property]") {
  auto g = test::rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t d = 3 + trial % 10;
    const Matrix u = random_unitary(g, Eigen::Index(d));
    auto rho = density_from_ensemble(prob::DiscreteDistribution(test::random_simplex(g, d)),
                                     columns(u, d));
    std::vector<MacroBlock> blocks;
    for (std::size_t i = 0; i < d; ++i) {
      if (blocks.empty() || test::unit(g) < 0.4) blocks.push_back({std::to_string(blocks.size()), {}});
      blocks.back().indices.push_back(i);
    }
    MacrostatePartition part(d, blocks);
    double total = 0.0;
    for (const auto& b : part.blocks()) total += macro_fraction(rho, part, b.label);
    CHECK(total == Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("vn_entropy_diagonal", "[quantum]") {
  CHECK(vn_entropy_diagonal(DensityOperator(Matrix::Identity(4, 4) / 4.0)) ==
        Approx(std::log(4.0)).epsilon(1e-14));
  auto pure = density_from_ensemble(prob::DiscreteDistribution({1.0}), {StateVector::basis(3, 2)});
  CHECK(vn_entropy_diagonal(pure) == 0.0);
  auto d = density_from_ensemble(prob::DiscreteDistribution({0.5, 0.3, 0.2}),
                                 {StateVector::basis(3, 0), StateVector::basis(3, 1),
                                  StateVector::basis(3, 2)});
  CHECK(vn_entropy_diagonal(d) == Approx(1.0296530140645737).epsilon(1e-14));

  Matrix coherent = Matrix::Constant(2, 2, 0.5);
  CHECK_THROWS_AS(vn_entropy_diagonal(DensityOperator(coherent)), BasisError);
}

TEST_CASE("diagonal ensembles reproduce the Shannon entropy", "[quantum][property]") {
  auto g = test::rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + trial % 12;
    auto probs = prob::DiscreteDistribution(test::random_simplex(g, d));
    std::vector<StateVector> basis;
    for (std::size_t k = 0; k < d; ++k) basis.push_back(StateVector::basis(d, k));
    CHECK(vn_entropy_diagonal(density_from_ensemble(probs, basis)) ==
          Approx(prob::entropy(probs)).margin(1e-14));
  }
}
