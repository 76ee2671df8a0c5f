#pragma once

// Discrete distributions, statistical entropy and information, hierarchical
// decomposition over macrostate blocks, and the canonical distribution.
// Entropies are in nats throughout; k_B = 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ensemblelab/common.hpp"

namespace ensemblelab::prob {

/// Finite probability vector. Entries are non-negative and sum to 1 within
/// kSumTolerance. Immutable once constructed.
class DiscreteDistribution {
 public:
  /// Validates without touching the values.
  explicit DiscreteDistribution(std::vector<double> probs)
      : probs_(std::move(probs)) {
    validate(probs_);
  }

  /// Explicit renormalization of non-negative weights.
  static DiscreteDistribution normalized(std::vector<double> weights) {
    if (weights.empty()) {
      throw ValidationError("distribution must have at least one entry");
    }
    for (double w : weights) {
      if (!std::isfinite(w) || w < 0.0) {
        throw ValidationError("weights must be finite and non-negative");
      }
    }
    const double total = compensated_sum(weights);
    if (!(total > 0.0)) {
      throw ValidationError("weights sum to zero");
    }
    for (double& w : weights) w /= total;
    return DiscreteDistribution(std::move(weights));
  }

  static DiscreteDistribution uniform(std::size_t n) {
    if (n == 0) throw ValidationError("distribution must have at least one entry");
    return DiscreteDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  static DiscreteDistribution point_mass(std::size_t n, std::size_t at) {
    if (at >= n) throw ValidationError("point mass index out of range");
    std::vector<double> p(n, 0.0);
    p[at] = 1.0;
    return DiscreteDistribution(std::move(p));
  }

  std::span<const double> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  static void validate(std::span<const double> p) {
    if (p.empty()) {
      throw ValidationError("distribution must have at least one entry");
    }
    for (double x : p) {
      if (!std::isfinite(x) || x < 0.0) {
        throw ValidationError("probabilities must be finite and non-negative");
      }
    }
    const double total = compensated_sum(p);
    if (std::abs(total - 1.0) > kSumTolerance) {
      throw ValidationError("probabilities sum to " + std::to_string(total) +
                            ", not 1");
    }
  }

 private:
  std::vector<double> probs_;
};

/// -sum p ln p over an arbitrary non-negative vector, with entries below
/// kZeroProbability treated as zero. No normalization check.
inline double entropy_of(std::span<const double> p) {
  CompensatedSum s;
  for (double x : p) {
    if (x >= kZeroProbability) s.add(-x * std::log(x));
  }
  return s.value();
}

/// Statistical entropy in nats, clamped to [0, ln n].
inline double entropy(const DiscreteDistribution& dist) {
  const double s = entropy_of(dist.probs());
  const double s_max = std::log(static_cast<double>(dist.size()));
  return std::clamp(s, 0.0, s_max);
}

/// Amount by which the entropy falls short of s_max.
inline double information(const DiscreteDistribution& dist, double s_max) {
  const double s = entropy(dist);
  if (!std::isfinite(s_max) || s_max < s - 1e-12) {
    throw ConstraintError("s_max " + std::to_string(s_max) +
                          " is below the distribution's entropy " +
                          std::to_string(s));
  }
  return std::max(0.0, s_max - s);
}

struct Block {
  std::string label;
  std::vector<double> joint;  // p_i^(alpha), not conditional
};

/// Joint distribution over microstates grouped into labelled macrostate
/// blocks.
class PartitionedDistribution {
 public:
  explicit PartitionedDistribution(std::vector<Block> blocks)
      : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw ValidationError("partition has no blocks");
    CompensatedSum total;
    bool any = false;
    for (const auto& b : blocks_) {
      for (double x : b.joint) {
        if (!std::isfinite(x) || x < 0.0) {
          throw ValidationError("block '" + b.label +
                                "' has a negative or non-finite probability");
        }
        total.add(x);
        any = true;
      }
    }
    if (!any) throw ValidationError("partition has no microstates");
    if (std::abs(total.value() - 1.0) > kSumTolerance) {
      throw ValidationError("joint probabilities sum to " +
                            std::to_string(total.value()) + ", not 1");
    }
  }

  /// Convenience for unlabeled blocks; labels become "0", "1", ...
  static PartitionedDistribution from_blocks(
      const std::vector<std::vector<double>>& blocks) {
    std::vector<Block> out;
    out.reserve(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      out.push_back({std::to_string(i), blocks[i]});
    }
    return PartitionedDistribution(std::move(out));
  }

  const std::vector<Block>& blocks() const { return blocks_; }

  double mass(std::size_t block) const {
    return compensated_sum(blocks_.at(block).joint);
  }

  std::vector<double> masses() const {
    std::vector<double> m;
    m.reserve(blocks_.size());
    for (std::size_t a = 0; a < blocks_.size(); ++a) m.push_back(mass(a));
    return m;
  }

  std::vector<double> flattened() const {
    std::vector<double> flat;
    for (const auto& b : blocks_) flat.insert(flat.end(), b.joint.begin(), b.joint.end());
    return flat;
  }

  std::size_t microstate_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.joint.size();
    return n;
  }

 private:
  std::vector<Block> blocks_;
};

struct EntropyDecomposition {
  double total = 0.0;
  double coarse = 0.0;
  double residual = 0.0;
  std::vector<double> per_block_conditional;
};

/// Entropy of the conditional distribution p_{i|alpha} inside one block.
/// Entries whose joint probability is below kZeroProbability are treated as
/// zero, matching the treatment in the flattened entropy.
inline double conditional_entropy(std::span<const double> joint, double mass) {
  if (!(mass > 0.0)) return 0.0;
  CompensatedSum s;
  for (double x : joint) {
    if (x >= kZeroProbability) {
      const double c = x / mass;
      s.add(-c * std::log(c));
    }
  }
  return s.value();
}

/// Gibbs entropy of the joint split into coarse-grained and residual parts.
inline EntropyDecomposition decompose(const PartitionedDistribution& joint) {
  EntropyDecomposition out;
  const auto masses = joint.masses();
  out.total = entropy_of(joint.flattened());
  out.coarse = entropy_of(masses);
  CompensatedSum residual;
  for (std::size_t a = 0; a < masses.size(); ++a) {
    const double s = conditional_entropy(joint.blocks()[a].joint, masses[a]);
    out.per_block_conditional.push_back(s);
    if (masses[a] > 0.0) residual.add(masses[a] * s);
  }
  out.residual = residual.value();
  return out;
}

struct InformationDecomposition {
  double total = 0.0;
  double coarse = 0.0;
  double residual = 0.0;  // sum_alpha p^(alpha) I_{cond,alpha}
  double s_max_total = 0.0;
  std::vector<double> per_block_conditional;
};

/// Information at both levels of the hierarchy. The total bound is
/// s_max_coarse + sum_alpha p^(alpha) s_max_conditional[alpha].
inline InformationDecomposition info_decompose(
    const PartitionedDistribution& joint, double s_max_coarse,
    std::span<const double> s_max_conditional) {
  const auto& blocks = joint.blocks();
  if (s_max_conditional.size() != blocks.size()) {
    throw ValidationError("need one conditional s_max per block");
  }
  const auto dec = decompose(joint);
  const auto masses = joint.masses();

  auto check = [](double bound, double s, const std::string& what) {
    if (!std::isfinite(bound) || bound < s - 1e-12) {
      throw ConstraintError(what + " bound " + std::to_string(bound) +
                            " is below entropy " + std::to_string(s));
    }
  };
  check(s_max_coarse, dec.coarse, "coarse");

  InformationDecomposition out;
  out.coarse = s_max_coarse - dec.coarse;
  CompensatedSum bound_total;
  CompensatedSum residual;
  bound_total.add(s_max_coarse);
  for (std::size_t a = 0; a < blocks.size(); ++a) {
    check(s_max_conditional[a], dec.per_block_conditional[a],
          "block '" + blocks[a].label + "'");
    const double i_cond = s_max_conditional[a] - dec.per_block_conditional[a];
    out.per_block_conditional.push_back(i_cond);
    if (masses[a] > 0.0) {
      bound_total.add(masses[a] * s_max_conditional[a]);
      residual.add(masses[a] * i_cond);
    }
  }
  out.s_max_total = bound_total.value();
  out.residual = residual.value();
  out.total = out.s_max_total - dec.total;
  return out;
}

struct EnergyLevels {
  std::vector<double> energies;
  double temperature = 1.0;
};

/// Gibbs canonical distribution p_k ∝ exp(-E_k / T). Exponents are shifted by
/// the lowest energy so every Boltzmann factor is in (0, 1].
inline DiscreteDistribution canonical(const EnergyLevels& levels) {
  if (levels.energies.empty()) throw ValidationError("no energy levels");
  if (!std::isfinite(levels.temperature) || !(levels.temperature > 0.0)) {
    throw ValidationError("temperature must be positive and finite");
  }
  for (double e : levels.energies) {
    if (!std::isfinite(e)) throw ValidationError("energies must be finite");
  }
  const double e_min =
      *std::min_element(levels.energies.begin(), levels.energies.end());
  std::vector<double> w;
  w.reserve(levels.energies.size());
  for (double e : levels.energies) {
    w.push_back(std::exp(-(e - e_min) / levels.temperature));
  }
  return DiscreteDistribution::normalized(std::move(w));
}

inline double mean_energy(const DiscreteDistribution& p,
                          std::span<const double> energies) {
  if (p.size() != energies.size()) {
    throw ValidationError("distribution and energy vector differ in length");
  }
  CompensatedSum s;
  for (std::size_t k = 0; k < energies.size(); ++k) s.add(p[k] * energies[k]);
  return s.value();
}

namespace detail {

// Mean energy at inverse temperature beta >= 0; beta = 0 is the uniform
// distribution.
inline double mean_energy_at_beta(std::span<const double> energies,
                                  double e_min, double beta) {
  CompensatedSum z;
  CompensatedSum ez;
  for (double e : energies) {
    const double w = std::exp(-beta * (e - e_min));
    z.add(w);
    ez.add(w * (e - e_min));
  }
  return e_min + ez.value() / z.value();
}

}  // namespace detail

/// Positive temperature at which the canonical mean energy equals
/// target_mean. Bisection on beta = 1/T, where the mean is strictly
/// decreasing.
inline double temperature_for_mean_energy(std::span<const double> energies,
                                          double target_mean) {
  if (energies.size() < 2) {
    throw ValidationError("temperature solving needs at least two levels");
  }
  for (double e : energies) {
    if (!std::isfinite(e)) throw ValidationError("energies must be finite");
  }
  const double e_min = *std::min_element(energies.begin(), energies.end());
  const double e_uniform = detail::mean_energy_at_beta(energies, e_min, 0.0);
  if (!std::isfinite(target_mean) || !(target_mean > e_min) ||
      !(target_mean < e_uniform)) {
    throw UnreachableMeanError(
        "target mean energy must lie strictly between the ground energy and "
        "the uniform-distribution mean");
  }

  double lo = 0.0;  // mean(lo) > target
  double hi = 1.0;
  while (detail::mean_energy_at_beta(energies, e_min, hi) > target_mean) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) {
      throw NumericsError("could not bracket the inverse temperature");
    }
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (detail::mean_energy_at_beta(energies, e_min, mid) > target_mean) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double lo_err =
      std::abs(detail::mean_energy_at_beta(energies, e_min, lo) - target_mean);
  const double hi_err =
      std::abs(detail::mean_energy_at_beta(energies, e_min, hi) - target_mean);
  const double beta = lo_err <= hi_err ? lo : hi;
  return 1.0 / beta;
}

/// Split each cell uniformly into k subcells. Subcell j of cell i lands at
/// index i*k + j.
inline DiscreteDistribution refine(const DiscreteDistribution& dist,
                                   std::size_t k) {
  if (k == 0) throw ValidationError("refinement factor must be at least 1");
  if (k == 1) return dist;
  std::vector<double> out;
  out.reserve(dist.size() * k);
  const double kd = static_cast<double>(k);
  for (double p : dist.probs()) {
    for (std::size_t j = 0; j < k; ++j) out.push_back(p / kd);
  }
  return DiscreteDistribution(std::move(out));
}

}  // namespace ensemblelab::prob
