#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace smhd {

using Index = std::int32_t;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vector = Eigen::VectorXd;

/// Barycentric coordinates of a point inside a tetrahedron.
using Bary = std::array<double, 4>;

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonManifoldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a request exceeds what a dense diagnostic can handle.
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Factorization hit a zero (or numerically useless) pivot.
class SingularSystemError : public std::runtime_error {
 public:
  SingularSystemError(const std::string& what, Index pivot)
      : std::runtime_error(what), pivot_(pivot) {}
  Index pivot() const noexcept { return pivot_; }

 private:
  Index pivot_;
};

}  // namespace smhd
