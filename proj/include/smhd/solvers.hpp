#pragma once

#include "smhd/assembly.hpp"
#include "smhd/operators.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace smhd {

enum class Formulation { BE, BJ };
std::string to_string(Formulation f);

/// Velocity (vector P2, no-slip), pressure (P1, zero mean), Nedelec and RT
/// with essential traces, cell multiplier (DG0, zero mean), plus the
/// parameter-independent matrices.
struct MhdSpaces {
  explicit MhdSpaces(std::shared_ptr<const Mesh> mesh);

  std::shared_ptr<const Mesh> mesh;
  FeSpace velocity, pressure, ned, rt, dg0;
  DiscreteOps ops;
  SparseMatrix laplace;    // (grad u, grad v)
  SparseMatrix div_u;      // (div u, q)
  SparseMatrix div_b;      // (div B, s)
  SparseMatrix curl;       // (curl F, C): rows RT, columns Nedelec
  SparseMatrix mass_c;     // Nedelec mass
};

/// Dimensionless numbers and data. Every vector slot is a full-length load
/// vector in the dual of its space and may be left empty (zero). In the B-j
/// problem the slots pair with the test functions (v, k, tau, C, q, s) as
/// (f, l, g, h, m, z); in the B-E problem l pairs with F and h with C.
struct MhdParams {
  double re = 1.0, rm = 1.0, s = 1.0;
  std::optional<Field> force;
  Vector f, l, g, h, m, z;

  void validate() const;
  /// True when l, g, h, m, z all vanish: then r = 0 and the energy identity hold.
  bool homogeneous_magnetic() const;
};

struct MhdStateBE {
  Vector u, e, b, p, r;
  static MhdStateBE zero(const MhdSpaces& spaces);
};

struct MhdStateBJ {
  Vector u, j, sigma, b, p, r;
  static MhdStateBJ zero(const MhdSpaces& spaces);
};

/// Data derived once per solve.
struct MhdProblem {
  MhdProblem(const MhdSpaces& spaces, MhdParams params);

  const MhdSpaces& spaces;
  MhdParams params;
  Vector force_load;    // <f, v> for every velocity DOF
  double force_l2 = 0.0;
  /// Upper bound of ||f||_{-1}: box Poincare constant times ||f|| for the
  /// analytic part plus the discrete dual norm of the load-vector part.
  double force_dual_bound = 0.0;
  /// Scale used to make the Gauss defect relative: 1 / h.
  double inv_h = 0.0;
};

struct DiagnosticConstants {
  double c1 = 0.0;           // upper bound used in the conditions
  double c1_sampled = 0.0;   // sampled ||u||_{L6} / ||grad u||
  double c2 = 0.0;           // empirical cross-product bound
  double c2_full_h1 = 0.0;
  int c2_trials = 0;
  double poincare_box = 0.0; // H1_0 Poincare constant of the box
  std::optional<double> poincare_div;  // discrete div-free Poincare constant
  std::string poincare_div_note;
};

DiagnosticConstants estimate_constants(const MhdSpaces& spaces, std::uint64_t seed, int c2_trials = 100,
                                       bool with_poincare = true);

struct ConditionReport {
  double f_dual = 0.0;
  double lhs1 = 0.0;       // C1^2 Re^2 |f| + 2 C1^4 Re^4 |f|^2 + 8 C2^2 Re^2 Rm^3 |f|^2
  double lhs2 = 0.0;       // 16 Rm^4 C2^2 Re^2 |f|^2
  double be_re_bound = 0.0;  // (2/sqrt 5) / (C2 |f|), infinite for f = 0
  bool contraction_1 = true, contraction_2 = true, be_small_re = true;
  bool contraction() const { return contraction_1 && contraction_2; }
};

ConditionReport check_small_data_conditions(double re, double rm, double f_dual, double c1, double c2);

/// Structure checks of one iterate, computed by quadrature and incidence
/// algebra independently of the assembled saddle-point system.
struct StructureReport {
  double div_defect = 0.0;       // max over tets of |div B|
  double div_scale = 0.0;        // ||B|| / h
  double multiplier_norm = 0.0;  // ||r||
  double problem_scale = 0.0;    // ||u||_1 + ||B||_d + ||j|| + ||p||
  bool energy_applicable = true;
  double dissipation = 0.0;      // Re^-1 ||grad u||^2 + S ||j||^2
  double power = 0.0;            // <f, u>
  double energy_residual = 0.0;
  double energy_bound = 0.0;     // Re |f|_{-1}^2, a priori bound of the dissipation
  double energy_slack = 0.0;     // (Re/2) |f|_{-1}^2 - (2Re)^-1 ||grad u||^2 - S ||j||^2
  // B-j only.
  double curl_j_minus_sigma = 0.0;
  double curl_scale = 0.0;       // ||j|| + ||sigma||
  double elim_j = 0.0;           // || M_c j - Rm^-1 K^T B - S^-1 l || / scale
  double elim_sigma = 0.0;       // || M_c sigma - load(u x B-) - (Rm/S) g || / scale

  double energy_relative() const;
};

StructureReport diagnostics(const MhdProblem& problem, const MhdStateBE& state, const MhdStateBE& prev);
StructureReport diagnostics(const MhdProblem& problem, const MhdStateBJ& state, const MhdStateBJ& prev);

/// Linear saddle-point system of one Picard step (full DOF numbering,
/// constrained DOFs flagged). Field names: u, E, B, p, r (B-E) and
/// u, j, sigma, B, p, r (B-j).
BlockSystem be_system(const MhdProblem& problem, const MhdStateBE& prev);
BlockSystem bj_system(const MhdProblem& problem, const MhdStateBJ& prev);

MhdStateBE be_picard_step(const MhdProblem& problem, const MhdStateBE& prev);
MhdStateBJ bj_picard_step(const MhdProblem& problem, const MhdStateBJ& prev);

struct PicardOptions {
  double rtol = 1e-9;
  double atol = 1e-12;
  int max_iter = 100;
};

struct IterationRecord {
  int n = 0;
  double du = 0.0;       // ||u^n - u^{n-1}||_1
  double dj = 0.0;       // ||j^n - j^{n-1}||  (B-E: j = E + u x B-)
  double db = 0.0;       // ||B^n - B^{n-1}||_d
  double energy = 0.0;   // (2Re)^-1 ||grad e_u||^2 + S (2Rm)^-1 ||e_j||^2
  std::optional<double> ratio;
  StructureReport structure;
};

struct PicardReport {
  Formulation formulation = Formulation::BJ;
  std::vector<IterationRecord> iterations;
  std::string termination;
  ConditionReport conditions;
  std::vector<std::string> warnings;
  bool converged() const { return termination == "converged"; }
};

std::pair<MhdStateBE, PicardReport> solve_nonlinear(const MhdProblem& problem, MhdStateBE initial,
                                                    const PicardOptions& options,
                                                    const DiagnosticConstants& constants);
std::pair<MhdStateBJ, PicardReport> solve_nonlinear(const MhdProblem& problem, MhdStateBJ initial,
                                                    const PicardOptions& options,
                                                    const DiagnosticConstants& constants);

/// ||E + u x B-||, the current density of the B-E formulation.
double be_current_norm(const MhdSpaces& spaces, const Vector& e, const Vector& u, const Vector& b_prev);
/// ||j^n - j^{n-1}|| for the B-E current j^n = E^n + u^n x B^{n-1}; the
/// field B^{n-2} is passed separately.
double be_current_increment(const MhdSpaces& spaces, const MhdStateBE& cur, const MhdStateBE& prev,
                            const Vector& b_prev_prev);

}  // namespace smhd
