#pragma once

// Finite-dimensional quantum-statistical toolkit in the computational basis:
// state vectors, observables, density operators, macrostate projectors and
// ensemble fractions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ensemblelab/common.hpp"
#include "ensemblelab/probcore.hpp"

namespace ensemblelab::quantum {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr std::size_t kMaxDimension = 64;
inline constexpr double kHermitianTolerance = 1e-12;
inline constexpr double kPositivityTolerance = 1e-12;
inline constexpr double kImaginaryResidue = 1e-10;

namespace detail {

inline void check_dimension(Eigen::Index d) {
  if (d < 1 || static_cast<std::size_t>(d) > kMaxDimension) {
    throw ValidationError("dimension must be between 1 and " + std::to_string(kMaxDimension));
  }
}

inline void check_finite(const Matrix& m) {
  if (!m.allFinite()) throw ValidationError("matrix has non-finite entries");
}

inline void check_square(const Matrix& m) {
  if (m.rows() != m.cols()) throw ValidationError("matrix must be square");
  check_dimension(m.rows());
}

inline void check_hermitian(const Matrix& m) {
  const double dev = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (dev > kHermitianTolerance) {
    throw ValidationError("matrix is not Hermitian (max deviation " + std::to_string(dev) + ")");
  }
}

}  // namespace detail

/// Unit-norm state in the computational basis.
class StateVector {
 public:
  explicit StateVector(Vector amplitudes) : amp_(std::move(amplitudes)) {
    detail::check_dimension(amp_.size());
    if (!amp_.allFinite()) throw ValidationError("amplitudes must be finite");
    if (std::abs(amp_.norm() - 1.0) > 1e-12) {
      throw ValidationError("state vector norm is " + std::to_string(amp_.norm()) + ", not 1");
    }
  }

  static StateVector basis(std::size_t dim, std::size_t k) {
    if (k >= dim) throw ValidationError("basis index out of range");
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
    v(static_cast<Eigen::Index>(k)) = 1.0;
    return StateVector(std::move(v));
  }

  const Vector& amplitudes() const { return amp_; }
  std::size_t dim() const { return static_cast<std::size_t>(amp_.size()); }

 private:
  Vector amp_;
};

/// Hermitian matrix.
class Observable {
 public:
  explicit Observable(Matrix m) : m_(std::move(m)) {
    detail::check_square(m_);
    detail::check_finite(m_);
    detail::check_hermitian(m_);
  }

  static Observable diagonal(const std::vector<double>& d) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) m(Eigen::Index(i), Eigen::Index(i)) = d[i];
    return Observable(std::move(m));
  }

  static Observable identity(std::size_t dim) {
    return Observable(Matrix::Identity(Eigen::Index(dim), Eigen::Index(dim)));
  }

  const Matrix& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }

 private:
  Matrix m_;
};

/// Hermitian, unit-trace, positive semidefinite matrix.
class DensityOperator {
 public:
  explicit DensityOperator(Matrix m) : m_(std::move(m)) {
    detail::check_square(m_);
    detail::check_finite(m_);
    detail::check_hermitian(m_);
    const Complex tr = m_.trace();
    if (std::abs(tr.real() - 1.0) > 1e-12 || std::abs(tr.imag()) > 1e-12) {
      throw ValidationError("density operator trace is not 1");
    }
    const Matrix herm = 0.5 * (m_ + m_.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(herm, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericsError("eigenvalue computation failed");
    if (es.eigenvalues().minCoeff() < -kPositivityTolerance) {
      throw ValidationError("density operator has a negative eigenvalue " +
                            std::to_string(es.eigenvalues().minCoeff()));
    }
  }

  const Matrix& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }

  Eigen::VectorXd eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m_ + m_.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

 private:
  Matrix m_;
};

struct MacroBlock {
  std::string label;
  std::vector<std::size_t> indices;
};

/// Disjoint, exhaustive grouping of basis indices 0..dim-1 into labelled
/// macrostates.
class MacrostatePartition {
 public:
  MacrostatePartition(std::size_t dim, std::vector<MacroBlock> blocks)
      : dim_(dim), blocks_(std::move(blocks)) {
    detail::check_dimension(static_cast<Eigen::Index>(dim_));
    std::vector<bool> seen(dim_, false);
    std::set<std::string> labels;
    for (const auto& b : blocks_) {
      if (!labels.insert(b.label).second) {
        throw ValidationError("duplicate macrostate label '" + b.label + "'");
      }
      for (std::size_t i : b.indices) {
        if (i >= dim_) throw ValidationError("basis index out of range in '" + b.label + "'");
        if (seen[i]) throw ValidationError("macrostates overlap at index " + std::to_string(i));
        seen[i] = true;
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw ValidationError("macrostates do not cover every basis index");
    }
  }

  std::size_t dim() const { return dim_; }
  const std::vector<MacroBlock>& blocks() const { return blocks_; }

  const MacroBlock& block(const std::string& label) const {
    for (const auto& b : blocks_) {
      if (b.label == label) return b;
    }
    throw ValidationError("unknown macrostate '" + label + "'");
  }

 private:
  std::size_t dim_;
  std::vector<MacroBlock> blocks_;
};

/// rho = sum_k p_k |k><k| over an orthonormal set of states.
inline DensityOperator density_from_ensemble(const prob::DiscreteDistribution& probs,
                                             const std::vector<StateVector>& states) {
  if (states.empty() || probs.size() != states.size()) {
    throw ValidationError("need exactly one state per probability");
  }
  const Eigen::Index d = states.front().amplitudes().size();
  for (std::size_t a = 0; a < states.size(); ++a) {
    if (states[a].amplitudes().size() != d) throw ValidationError("states differ in dimension");
    for (std::size_t b = a; b < states.size(); ++b) {
      const Complex overlap = states[a].amplitudes().dot(states[b].amplitudes());
      const double expected = a == b ? 1.0 : 0.0;
      if (std::abs(overlap - expected) > 1e-10) {
        throw ValidationError("states are not orthonormal");
      }
    }
  }
  Matrix rho = Matrix::Zero(d, d);
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto& v = states[k].amplitudes();
    rho += probs[k] * (v * v.adjoint());
  }
  return DensityOperator(std::move(rho));
}

/// Tr(rho O).
inline double expectation(const DensityOperator& rho, const Observable& obs) {
  if (rho.dim() != obs.dim()) throw ValidationError("dimension mismatch");
  const Complex tr = (rho.matrix() * obs.matrix()).trace();
  if (std::abs(tr.imag()) > kImaginaryResidue) {
    throw NumericsError("Tr(rho O) has imaginary residue " + std::to_string(tr.imag()));
  }
  return tr.real();
}

/// Diagonal 0/1 projector onto one macrostate block.
inline Observable projector(const MacrostatePartition& partition, const std::string& label) {
  const auto& b = partition.block(label);
  std::vector<double> d(partition.dim(), 0.0);
  for (std::size_t i : b.indices) d[i] = 1.0;
  return Observable::diagonal(d);
}

/// Tr(rho P_block), clamped to [0, 1].
inline double macro_fraction(const DensityOperator& rho, const MacrostatePartition& partition,
                             const std::string& label) {
  if (rho.dim() != partition.dim()) throw ValidationError("dimension mismatch");
  const double f = expectation(rho, projector(partition, label));
  if (f < -1e-12 || f > 1.0 + 1e-12) {
    throw NumericsError("macrostate fraction outside [0, 1]: " + std::to_string(f));
  }
  return std::clamp(f, 0.0, 1.0);
}

/// Statistical entropy of a density operator that is diagonal in the working
/// basis.
inline double vn_entropy_diagonal(const DensityOperator& rho) {
  const Matrix& m = rho.matrix();
  const Eigen::Index d = m.rows();
  double off = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (i != j) off += std::norm(m(i, j));
    }
  }
  if (std::sqrt(off) > 1e-10) {
    throw BasisError("density operator is not diagonal in the working basis");
  }
  std::vector<double> diag(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) diag[static_cast<std::size_t>(i)] = std::max(0.0, m(i, i).real());
  return prob::entropy(prob::DiscreteDistribution(std::move(diag)));
}

}  // namespace ensemblelab::quantum
