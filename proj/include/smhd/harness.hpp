#pragma once

#include "smhd/solvers.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace smhd {

/// Malformed or inconsistent run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tolerances pinned for the structure checks reported by every run.
struct Tolerances {
  static constexpr double gauss = 1e-12;       // max |div B| <= gauss * ||B|| / h
  static constexpr double relative = 1e-10;    // multiplier, energy, elimination, curl(j - sigma)
  static constexpr double slack = -1e-10;      // energy inequality
  static constexpr double contraction = 0.75;  // E^n / E^{n-1}
};

struct ForceMode {
  std::array<int, 3> k{1, 1, 1};
  Vec3 amplitude = Vec3::Zero();
};

struct RunConfig {
  std::array<int, 3> n{2, 2, 2};
  Box box;
  Formulation formulation = Formulation::BJ;
  double re = 1.0, rm = 1.0, s = 1.0;

  // Body force when no manufactured case is selected: sum of
  // scale * amplitude * sin(k1 pi x) sin(k2 pi y) sin(k3 pi z) over the modes
  // (box-normalized coordinates), plus a constant.
  std::string force_kind = "zero";  // zero | constant | modes
  Vec3 force_constant = Vec3::Zero();
  double force_scale = 1.0;
  std::vector<ForceMode> force_modes;

  std::string manufactured;  // "", trig-1, discrete-exact
  double alpha = 0.1, beta = 0.1;

  std::string initial_kind = "zero";  // zero | solenoidal
  double initial_scale = 0.5;

  PicardOptions picard;
  std::vector<int> levels;
  std::uint64_t seed = 1;
  int c2_trials = 100;
  bool poincare = true;

  std::string report_path, csv_path, vtk_path, matrix_market_path;

  static RunConfig from_json(const nlohmann::json& j);
  /// Round-trips through from_json.
  nlohmann::json to_json() const;
};

/// Reads and validates a JSON config file.
RunConfig load_config(const std::string& path);

/// Closed-form fields of the "trig-1" case on the unit cube: u = alpha curl(psi, psi, psi)
/// with psi = sin^2(pi x) sin^2(pi y) sin^2(pi z); B = beta curl(0, 0, chi) with
/// chi = sin(pi x) sin(pi y) cos(pi z); p = cos(pi x) cos(pi y) cos(pi z). Data follow
/// from the strong equations.
struct Trig1 {
  double alpha = 0.1, beta = 0.1, re = 1.0, rm = 1.0, s = 1.0;

  Vec3 u(const Vec3& x) const;
  Mat3 grad_u(const Vec3& x) const;  // row c: gradient of u_c
  Vec3 laplace_u(const Vec3& x) const;
  Vec3 b(const Vec3& x) const;
  Mat3 grad_b(const Vec3& x) const;
  Vec3 curl_b(const Vec3& x) const;
  Vec3 curl_curl_b(const Vec3& x) const;
  double p(const Vec3& x) const;
  Vec3 grad_p(const Vec3& x) const;
  Vec3 j(const Vec3& x) const { return curl_b(x) / rm; }
  Vec3 sigma(const Vec3& x) const { return u(x).cross(b(x)); }
  Vec3 curl_sigma(const Vec3& x) const;
  /// -Re^-1 lap u + (u.grad) u + grad p + S B x j.
  Vec3 force(const Vec3& x) const;
  /// (S / Rm) curl(j - sigma).
  Vec3 induction_data(const Vec3& x) const;
};

/// Exact solution plus the data that make it the solution of the scheme's
/// general-RHS problem.
struct ManufacturedCase {
  std::string id;
  MhdParams params;
  std::optional<Trig1> trig;
  // Discrete case: exact coefficient vectors.
  Vector u, b, p;
};

ManufacturedCase make_manufactured(const RunConfig& config, const MhdSpaces& spaces);

struct LevelErrors {
  double u_h1 = 0.0, b_l2 = 0.0, b_d = 0.0, p_l2 = 0.0;
};
LevelErrors manufactured_errors(const ManufacturedCase& mc, const MhdSpaces& spaces, const Vector& u,
                                const Vector& b, const Vector& p);

/// Result of a CLI subcommand. Files listed in the config are written only
/// after the computation finished (atomically, via rename).
struct RunResult {
  int exit_code = 0;
  nlohmann::json report;
  std::string csv;
  std::string message;
};

RunResult run_solve(const RunConfig& config);
RunResult run_study(const RunConfig& config);
RunResult run_diagnose(const RunConfig& config);

/// Deterministic serialization: sorted keys, two-space indent, trailing newline.
std::string dump_json(const nlohmann::json& j);

}  // namespace smhd
