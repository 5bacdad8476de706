#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace triaan {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

// Input violates a documented precondition (shape, range, emptiness).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be read, written or decoded.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Requested component is not configured or incompatible with the setup.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite quantity.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

std::string shape_str(const Mat& m);

bool all_finite(const Mat& m);

/// Deterministic random source. Uses its own integer-to-real transforms so
/// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, double scale = 1.0);
  Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi);

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace triaan
