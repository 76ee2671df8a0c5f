#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace ensemblelab {

/// Base of every error the library throws. Callers that only care about
/// "bad input" vs "numerics went wrong" can catch the two intermediate
/// classes below.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition or type invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical result cannot be trusted (non-finite values, residues above
/// tolerance).
class NumericsError : public Error {
 public:
  using Error::Error;
};

class ConstraintError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnreachableMeanError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class GridError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptySeparationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class BasisError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Tolerance for "sums to 1" checks on probability vectors.
inline constexpr double kSumTolerance = 1e-12;

/// Probabilities below this are exact zeros inside entropy sums.
inline constexpr double kZeroProbability = 1e-15;

// ---------------------------------------------------------------------------
// Seeding
//
// Every random stream in the library is an mt19937_64 seeded with
// derive_seed(seed, stream). derive_seed is two rounds of SplitMix64:
//
//   derive_seed(seed, stream) = splitmix64(seed ^ splitmix64(stream))
//
// Stream indices are fixed per use site (see each module), and per-member
// streams in ensembles use the member index.
// ---------------------------------------------------------------------------

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::uint64_t stream) noexcept {
  return splitmix64(seed ^ splitmix64(stream));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng{derive_seed(seed, stream)};
}

/// Uniform on [0, 1) with 53 random bits. Used instead of
/// std::uniform_real_distribution so results do not depend on the standard
/// library's generate_canonical.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  const double x = lo + (hi - lo) * uniform01(rng);
  return x < hi ? x : lo;
}

/// Uniform phase on [0, 2pi).
inline double uniform_phase(Rng& rng) { return uniform(rng, 0.0, kTwoPi); }

/// Standard normal via Box-Muller; one draw per call, no cached state.
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

/// Wrap an angle into [0, 2pi).
inline double wrap_angle(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  return w < kTwoPi ? w : 0.0;
}

/// Neumaier-compensated sum. Fixed left-to-right order, so results are
/// reproducible bit for bit.
inline double compensated_sum(std::span<const double> xs) {
  double sum = 0.0;
  double c = 0.0;
  for (double x : xs) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      c += (sum - t) + x;
    } else {
      c += (x - t) + sum;
    }
    sum = t;
  }
  return sum + c;
}

/// Running form of compensated_sum for loops that do not materialize a span.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      c_ += (sum_ - t) + x;
    } else {
      c_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + c_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

}  // namespace ensemblelab
