#include "smhd/solvers.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>

namespace smhd {

std::string to_string(Formulation f) { return f == Formulation::BE ? "BE" : "BJ"; }

MhdSpaces::MhdSpaces(std::shared_ptr<const Mesh> m)
    : mesh(m),
      velocity(m, SpaceKind::LagrangeP2, true, 3),
      pressure(m, SpaceKind::LagrangeP1, false, 1, true),
      ned(m, SpaceKind::NedelecEdge0, true),
      rt(m, SpaceKind::RaviartThomas0, true),
      dg0(m, SpaceKind::DG0, false, 1, true),
      ops(m) {
  laplace = assemble(VectorLaplacian{}, velocity, velocity);
  div_u = assemble(MixedDiv{}, velocity, pressure);
  div_b = assemble(MixedDiv{}, rt, dg0);
  curl = assemble(CurlPairing{}, ned, rt);
  mass_c = assemble(Mass{}, ned, ned);
}

namespace {

bool all_zero(const Vector& v) { return v.size() == 0 || v.isZero(0.0); }

void check_slot(const Vector& v, Index n, const char* name) {
  if (v.size() != 0 && v.size() != n)
    throw InvalidArgument(std::string("data slot ") + name + " has length " + std::to_string(v.size()) +
                          ", expected " + std::to_string(n));
}

Vector or_zero(const Vector& v, Index n) { return v.size() == 0 ? Vector::Zero(n) : v; }

// Evaluates an FE function tet by tet.
struct CellEval {
  const FeSpace& space;
  const Vector& coeffs;
  LocalBasis basis;
  std::vector<Index> dofs;
  CellEval(const FeSpace& s, const Vector& c) : space(s), coeffs(c) {}
  Vec3 operator()(Index t, const TetGeometry& g, const Bary& b) {
    space.eval_basis(g, t, b, basis);
    return evaluate(space, coeffs, t, basis, dofs);
  }
};

template <class F>
double integrate_squared(const Mesh& m, F&& f) {
  const auto& rule = rich_tet_rule();
  double sum = 0.0;
  for (Index t = 0; t < m.num_tets(); ++t) {
    const TetGeometry g = tet_geometry(m, t);
    for (std::size_t q = 0; q < rule.size(); ++q)
      sum += 6.0 * g.volume * rule.weights[q] * f(t, g, rule.points[q]).squaredNorm();
  }
  return sum;
}

Field cross_field(const FeSpace& velocity, const Vector& u, const FeSpace& rt, const Vector& b) {
  const Field fu = fe_field(velocity, u), fb = fe_field(rt, b);
  Field out;
  out.components = 3;
  out.eval = [fu, fb](Index t, const Bary& bary, const Vec3& x) { return fu.eval(t, bary, x).cross(fb.eval(t, bary, x)); };
  return out;
}


}  // namespace

void MhdParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(name) + " must be positive and finite");
  };
  positive(re, "Re");
  positive(rm, "Rm");
  positive(s, "S");
}

bool MhdParams::homogeneous_magnetic() const {
  return all_zero(l) && all_zero(g) && all_zero(h) && all_zero(m) && all_zero(z);
}

MhdStateBE MhdStateBE::zero(const MhdSpaces& sp) {
  return {Vector::Zero(sp.velocity.num_dofs()), Vector::Zero(sp.ned.num_dofs()), Vector::Zero(sp.rt.num_dofs()),
          Vector::Zero(sp.pressure.num_dofs()), Vector::Zero(sp.dg0.num_dofs())};
}

MhdStateBJ MhdStateBJ::zero(const MhdSpaces& sp) {
  return {Vector::Zero(sp.velocity.num_dofs()), Vector::Zero(sp.ned.num_dofs()), Vector::Zero(sp.ned.num_dofs()),
          Vector::Zero(sp.rt.num_dofs()),       Vector::Zero(sp.pressure.num_dofs()), Vector::Zero(sp.dg0.num_dofs())};
}

MhdProblem::MhdProblem(const MhdSpaces& sp, MhdParams p) : spaces(sp), params(std::move(p)) {
  params.validate();
  check_slot(params.f, sp.velocity.num_dofs(), "f");
  check_slot(params.l, sp.ned.num_dofs(), "l");
  check_slot(params.g, sp.ned.num_dofs(), "g");
  check_slot(params.h, sp.rt.num_dofs(), "h");
  check_slot(params.m, sp.pressure.num_dofs(), "m");
  check_slot(params.z, sp.dg0.num_dofs(), "z");

  force_load = Vector::Zero(sp.velocity.num_dofs());
  if (params.force) {
    if (params.force->components != 3) throw InvalidArgument("the body force must be vector-valued");
    force_load = assemble_load(sp.velocity, *params.force);
    const Field& f = *params.force;
    force_l2 = std::sqrt(integrate_squared(*sp.mesh, [&](Index t, const TetGeometry& g, const Bary& b) {
      return f.eval(t, b, g.point(b));
    }));
  }
  force_dual_bound = box_poincare_constant(bounding_box(*sp.mesh)) * force_l2;
  if (!all_zero(params.f)) {
    // Discrete dual norm sup <f, v> / ||grad v|| over the velocity space.
    const SparseMatrix lap = restrict_matrix(sp.laplace, sp.velocity.free_index(), sp.velocity.num_free(),
                                             sp.velocity.free_index(), sp.velocity.num_free());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(lap.to_eigen());
    const Vector ff = restrict_free(sp.velocity, params.f);
    const Vector x = ldlt.solve(ff);
    force_dual_bound += std::sqrt(std::max(0.0, ff.dot(x)));
  }
  inv_h = 1.0 / sp.mesh->h;
}

DiagnosticConstants estimate_constants(const MhdSpaces& sp, std::uint64_t seed, int c2_trials, bool with_poincare) {
  DiagnosticConstants c;
  c.c1 = sobolev_l6_constant();
  c.c1_sampled = sample_l6_ratio(sp.velocity, 20, seed);
  const CrossBound cb = estimate_cross_bound(sp.ops, sp.velocity, c2_trials, seed);
  c.c2 = cb.c2;
  c.c2_full_h1 = cb.c2_full_h1;
  c.c2_trials = cb.trials;
  c.poincare_box = box_poincare_constant(bounding_box(*sp.mesh));
  if (with_poincare) {
    try {
      c.poincare_div = estimate_poincare_constant(sp.ops);
    } catch (const CapabilityError& e) {
      c.poincare_div_note = e.what();
    }
  } else {
    c.poincare_div_note = "skipped";
  }
  return c;
}

ConditionReport check_small_data_conditions(double re, double rm, double f, double c1, double c2) {
  ConditionReport r;
  r.f_dual = f;
  const double re2 = re * re, c12 = c1 * c1, c22 = c2 * c2, f2 = f * f;
  r.lhs1 = c12 * re2 * f + 2.0 * c12 * c12 * re2 * re2 * f2 + 8.0 * c22 * re2 * rm * rm * rm * f2;
  r.lhs2 = 16.0 * std::pow(rm, 4) * c22 * re2 * f2;
  r.be_re_bound = (c2 * f > 0.0) ? 2.0 / std::sqrt(5.0) / (c2 * f) : std::numeric_limits<double>::infinity();
  r.contraction_1 = r.lhs1 <= 1.0;
  r.contraction_2 = r.lhs2 <= 1.0;
  r.be_small_re = re <= r.be_re_bound;
  return r;
}

double StructureReport::energy_relative() const {
  const double scale = std::max({std::abs(power), dissipation, energy_bound, std::numeric_limits<double>::min()});
  return std::abs(energy_residual) / scale;
}

double be_current_norm(const MhdSpaces& sp, const Vector& e, const Vector& u, const Vector& b_prev) {
  CellEval fe(sp.ned, e), fu(sp.velocity, u), fb(sp.rt, b_prev);
  return std::sqrt(integrate_squared(*sp.mesh, [&](Index t, const TetGeometry& g, const Bary& b) {
    return Vec3(fe(t, g, b) + fu(t, g, b).cross(fb(t, g, b)));
  }));
}

double be_current_increment(const MhdSpaces& sp, const MhdStateBE& cur, const MhdStateBE& prev,
                            const Vector& b_prev_prev) {
  const Vector de = cur.e - prev.e;
  CellEval fe(sp.ned, de), fu(sp.velocity, cur.u), fb(sp.rt, prev.b), fu0(sp.velocity, prev.u),
      fb0(sp.rt, b_prev_prev);
  return std::sqrt(integrate_squared(*sp.mesh, [&](Index t, const TetGeometry& g, const Bary& b) {
    return Vec3(fe(t, g, b) + fu(t, g, b).cross(fb(t, g, b)) - fu0(t, g, b).cross(fb0(t, g, b)));
  }));
}

namespace {

// Checks shared by both formulations; j_norm is ||j|| (B-E: ||E + u x B-||).
StructureReport common_checks(const MhdProblem& pb, const Vector& u, const Vector& b, const Vector& p,
                              const Vector& r, double j_norm) {
  const MhdSpaces& sp = pb.spaces;
  StructureReport s;
  const Vector d = cell_divergence(*sp.mesh, b);
  s.div_defect = d.size() ? d.cwiseAbs().maxCoeff() : 0.0;
  s.div_scale = pb.inv_h * l2_norm(sp.rt, b);
  s.multiplier_norm = l2_norm(sp.dg0, r);
  s.problem_scale = h1_norm(sp.velocity, u) + sp.ops.norm_d(b) + j_norm + l2_norm(sp.pressure, p);

  const double gu = h1_seminorm(sp.velocity, u);
  const auto& par = pb.params;
  s.energy_applicable = par.homogeneous_magnetic();
  s.dissipation = gu * gu / par.re + par.s * j_norm * j_norm;
  s.power = pb.force_load.dot(u) + (par.f.size() ? par.f.dot(u) : 0.0);
  s.energy_residual = s.dissipation - s.power;
  const double fd = pb.force_dual_bound;
  s.energy_bound = par.re * fd * fd;
  s.energy_slack = 0.5 * par.re * fd * fd - gu * gu / (2.0 * par.re) - par.s * j_norm * j_norm;
  return s;
}

// ||P a||, with P the restriction to free DOFs of a space.
double free_norm(const FeSpace& space, const Vector& a) { return restrict_free(space, a).norm(); }

}  // namespace

StructureReport diagnostics(const MhdProblem& pb, const MhdStateBE& st, const MhdStateBE& prev) {
  const double jn = be_current_norm(pb.spaces, st.e, st.u, prev.b);
  return common_checks(pb, st.u, st.b, st.p, st.r, jn);
}

StructureReport diagnostics(const MhdProblem& pb, const MhdStateBJ& st, const MhdStateBJ& prev) {
  const MhdSpaces& sp = pb.spaces;
  const auto& par = pb.params;
  const double jn = l2_norm(sp.ned, st.j);
  StructureReport s = common_checks(pb, st.u, st.b, st.p, st.r, jn);

  const Vector w = curl_incidence(*sp.mesh) * Vector(st.j - st.sigma);
  s.curl_j_minus_sigma = l2_norm(sp.rt, w);
  s.curl_scale = jn + l2_norm(sp.ned, st.sigma);

  const Index nn = sp.ned.num_dofs();
  const Vector mj = sp.mass_c * st.j;
  const Vector kb = sp.curl.transpose_multiply(st.b) / par.rm;
  const Vector l = or_zero(par.l, nn) / par.s;
  const double sj = free_norm(sp.ned, mj) + free_norm(sp.ned, kb) + free_norm(sp.ned, l);
  s.elim_j = free_norm(sp.ned, mj - kb - l) / std::max(sj, std::numeric_limits<double>::min());

  const Vector ms = sp.mass_c * st.sigma;
  const Vector load = assemble_load(sp.ned, cross_field(sp.velocity, st.u, sp.rt, prev.b));
  const Vector g = or_zero(par.g, nn) * (par.rm / par.s);
  const double ss = free_norm(sp.ned, ms) + free_norm(sp.ned, load) + free_norm(sp.ned, g);
  s.elim_sigma = free_norm(sp.ned, ms - load - g) / std::max(ss, std::numeric_limits<double>::min());
  return s;
}

BlockSystem be_system(const MhdProblem& pb, const MhdStateBE& prev) {
  const MhdSpaces& sp = pb.spaces;
  const auto& par = pb.params;
  if (!all_zero(par.g)) throw InvalidArgument("the B-E formulation has no slot for g");
  const double s = par.s, srm = par.s / par.rm;
  const FeFunction w{&sp.velocity, prev.u}, bm{&sp.rt, prev.b};
  const SparseMatrix x = assemble(CrossCoupling{bm, false}, sp.velocity, sp.ned);
  const SparseMatrix y = assemble(CrossCoupling{bm, true}, sp.velocity, sp.velocity);

  BlockSystem sys;
  sys.add_field(block_field("u", sp.velocity));
  sys.add_field(block_field("E", sp.ned));
  sys.add_field(block_field("B", sp.rt));
  sys.add_field(block_field("p", sp.pressure));
  sys.add_field(block_field("r", sp.dg0));

  sys.add_block("u", "u", sp.laplace, 1.0 / par.re);
  sys.add_block("u", "u", assemble(Convection{w}, sp.velocity, sp.velocity));
  sys.add_block("u", "u", y, s);
  sys.add_block("u", "E", x.transpose(), s);
  sys.add_block("u", "p", sp.div_u.transpose(), -1.0);

  sys.add_block("E", "u", x, s);
  sys.add_block("E", "E", sp.mass_c, s);
  sys.add_block("E", "B", sp.curl.transpose(), -srm);

  sys.add_block("B", "E", sp.curl, srm);
  sys.add_block("B", "r", sp.div_b.transpose());

  sys.add_block("p", "u", sp.div_u, -1.0);
  sys.add_block("r", "B", sp.div_b);

  sys.add_rhs("u", pb.force_load);
  if (par.f.size()) sys.add_rhs("u", par.f);
  if (par.l.size()) sys.add_rhs("E", par.l);
  if (par.h.size()) sys.add_rhs("B", par.h);
  if (par.m.size()) sys.add_rhs("p", par.m);
  if (par.z.size()) sys.add_rhs("r", par.z);
  return sys;
}

BlockSystem bj_system(const MhdProblem& pb, const MhdStateBJ& prev) {
  const MhdSpaces& sp = pb.spaces;
  const auto& par = pb.params;
  const double s = par.s, srm = par.s / par.rm;
  const FeFunction w{&sp.velocity, prev.u}, bm{&sp.rt, prev.b};
  const SparseMatrix x = assemble(CrossCoupling{bm, false}, sp.velocity, sp.ned);

  BlockSystem sys;
  sys.add_field(block_field("u", sp.velocity));
  sys.add_field(block_field("j", sp.ned));
  sys.add_field(block_field("sigma", sp.ned));
  sys.add_field(block_field("B", sp.rt));
  sys.add_field(block_field("p", sp.pressure));
  sys.add_field(block_field("r", sp.dg0));

  sys.add_block("u", "u", sp.laplace, 1.0 / par.re);
  sys.add_block("u", "u", assemble(Convection{w}, sp.velocity, sp.velocity));
  sys.add_block("u", "j", x.transpose(), s);
  sys.add_block("u", "p", sp.div_u.transpose(), -1.0);

  sys.add_block("j", "j", sp.mass_c, s);
  sys.add_block("j", "B", sp.curl.transpose(), -srm);

  sys.add_block("sigma", "sigma", sp.mass_c, srm);
  sys.add_block("sigma", "u", x, -srm);

  sys.add_block("B", "j", sp.curl, srm);
  sys.add_block("B", "sigma", sp.curl, -srm);
  sys.add_block("B", "r", sp.div_b.transpose());

  sys.add_block("p", "u", sp.div_u, -1.0);
  sys.add_block("r", "B", sp.div_b);

  sys.add_rhs("u", pb.force_load);
  if (par.f.size()) sys.add_rhs("u", par.f);
  if (par.l.size()) sys.add_rhs("j", par.l);
  if (par.g.size()) sys.add_rhs("sigma", par.g);
  if (par.h.size()) sys.add_rhs("B", par.h);
  if (par.m.size()) sys.add_rhs("p", par.m);
  if (par.z.size()) sys.add_rhs("r", par.z);
  return sys;
}

namespace {

std::map<std::string, Vector> solve_blocks(const BlockSystem& sys) {
  const BlockSystem red = apply_essential_bc(sys);
  const DirectSolver solver(red.global_matrix());
  const Vector x = solver.solve(red.global_rhs());
  std::map<std::string, Vector> out;
  for (const auto& [name, v] : red.split(x)) out[name] = red.expand(name, v, sys.field(name).size);
  return out;
}

}  // namespace

MhdStateBE be_picard_step(const MhdProblem& pb, const MhdStateBE& prev) {
  std::map<std::string, Vector> x;
  try {
    x = solve_blocks(be_system(pb, prev));
  } catch (const SingularSystemError& e) {
    throw SingularSystemError(std::string("B-E regime violation: the linearized system is singular (") + e.what() +
                                  "); Re is likely above the B-E uniqueness bound",
                              e.pivot());
  }
  return {x["u"], x["E"], x["B"], x["p"], x["r"]};
}

MhdStateBJ bj_picard_step(const MhdProblem& pb, const MhdStateBJ& prev) {
  std::map<std::string, Vector> x;
  try {
    x = solve_blocks(bj_system(pb, prev));
  } catch (const SingularSystemError& e) {
    throw SingularSystemError(std::string("the B-j linearized system is singular; the mesh may be too coarse for the velocity-pressure pair, otherwise this is an implementation bug (") +
                                  e.what() + ")",
                              e.pivot());
  }
  return {x["u"], x["j"], x["sigma"], x["B"], x["p"], x["r"]};
}

namespace {

void check_options(const PicardOptions& o) {
  if (!(o.rtol >= 0.0) || !(o.atol >= 0.0) || o.max_iter < 1)
    throw InvalidArgument("Picard options need rtol >= 0, atol >= 0 and max_iter >= 1");
}

void finish_report(PicardReport& rep, const MhdProblem& pb, const DiagnosticConstants& c) {
  rep.conditions = check_small_data_conditions(pb.params.re, pb.params.rm, pb.force_dual_bound, c.c1, c.c2);
  if (rep.formulation == Formulation::BE && !rep.conditions.be_small_re) {
    rep.warnings.push_back("Re = " + std::to_string(pb.params.re) + " exceeds the B-E uniqueness bound " +
                           std::to_string(rep.conditions.be_re_bound) +
                           "; the B-E iteration may fail or converge to a different solution");
  }
  if (!rep.conditions.contraction()) {
    rep.warnings.push_back("small-data contraction conditions are not satisfied; convergence is not guaranteed");
  }
}

template <class State, class Step, class CurrentIncrement>
std::pair<State, PicardReport> picard(const MhdProblem& pb, State prev, const PicardOptions& opt,
                                      const DiagnosticConstants& c, Formulation form, Step step,
                                      CurrentIncrement dj_of) {
  check_options(opt);
  const MhdSpaces& sp = pb.spaces;
  PicardReport rep;
  rep.formulation = form;
  finish_report(rep, pb, c);
  const double re = pb.params.re, s = pb.params.s, rm = pb.params.rm;
  Vector b_prev_prev = prev.b;
  for (int n = 1; n <= opt.max_iter; ++n) {
    State cur = step(pb, prev);
    IterationRecord rec;
    rec.n = n;
    const Vector du = cur.u - prev.u;
    rec.du = h1_norm(sp.velocity, du);
    rec.db = sp.ops.norm_d(cur.b - prev.b);
    rec.dj = dj_of(cur, prev, b_prev_prev);
    const double gdu = h1_seminorm(sp.velocity, du);
    rec.energy = gdu * gdu / (2.0 * re) + s / (2.0 * rm) * rec.dj * rec.dj;
    if (n >= 2) {
      const double e0 = rep.iterations.back().energy;
      if (e0 > 0.0) rec.ratio = rec.energy / e0;
    }
    rec.structure = diagnostics(pb, cur, prev);
    rep.iterations.push_back(rec);
    const double scale = h1_norm(sp.velocity, cur.u) + sp.ops.norm_d(cur.b);
    b_prev_prev = prev.b;
    prev = std::move(cur);
    if (rec.du + rec.db <= opt.rtol * scale + opt.atol) {
      rep.termination = "converged";
      return {std::move(prev), std::move(rep)};
    }
  }
  rep.termination = "max-iterations";
  rep.warnings.push_back("Picard iteration stopped after " + std::to_string(opt.max_iter) + " iterations");
  return {std::move(prev), std::move(rep)};
}

}  // namespace

std::pair<MhdStateBE, PicardReport> solve_nonlinear(const MhdProblem& pb, MhdStateBE initial,
                                                    const PicardOptions& options, const DiagnosticConstants& c) {
  return picard(pb, std::move(initial), options, c, Formulation::BE, be_picard_step,
                [&](const MhdStateBE& cur, const MhdStateBE& prev, const Vector& bpp) {
                  return be_current_increment(pb.spaces, cur, prev, bpp);
                });
}

std::pair<MhdStateBJ, PicardReport> solve_nonlinear(const MhdProblem& pb, MhdStateBJ initial,
                                                    const PicardOptions& options, const DiagnosticConstants& c) {
  return picard(pb, std::move(initial), options, c, Formulation::BJ, bj_picard_step,
                [&](const MhdStateBJ& cur, const MhdStateBJ& prev, const Vector&) {
                  return l2_norm(pb.spaces.ned, Vector(cur.j - prev.j));
                });
}

}  // namespace smhd
