#include "doctest.h"
#include "smhd/solvers.hpp"

#include <cmath>
#include <numbers>

using namespace smhd;

namespace {

std::shared_ptr<const Mesh> box(int n) { return std::make_shared<const Mesh>(build_box_mesh(n, n, n)); }

Field smooth_force(double scale) {
  return analytic_vector([scale](const Vec3& x) {
    const double pi = std::numbers::pi;
    return Vec3(scale * std::sin(pi * x.y()) * std::cos(pi * x.z()), scale * x.x() * x.z(),
                scale * (1.0 + std::sin(2 * pi * x.x())));
  });
}

MhdParams unit_params(std::optional<Field> f) {
  MhdParams p;
  p.force = std::move(f);
  return p;
}

bool is_zero(const Vector& v) { return v.size() == 0 || v.cwiseAbs().maxCoeff() == 0.0; }

void check_post_step(const StructureReport& s, bool bj) {
  CHECK(s.div_defect <= 1e-12 * s.div_scale + 1e-300);
  CHECK(s.multiplier_norm <= 1e-10 * s.problem_scale);
  CHECK(s.energy_applicable);
  CHECK(s.energy_relative() <= 1e-10);
  CHECK(s.energy_slack >= -1e-10);
  if (bj) {
    CHECK(s.curl_j_minus_sigma <= 1e-10 * s.curl_scale);
    CHECK(s.elim_j <= 1e-10);
    CHECK(s.elim_sigma <= 1e-10);
  }
}

}  // namespace

TEST_CASE("zero data gives the zero state") {
  const MhdSpaces sp(box(2));
  const MhdProblem pb(sp, unit_params(std::nullopt));
  SUBCASE("B-E from zero") {
    const MhdStateBE s = be_picard_step(pb, MhdStateBE::zero(sp));
    CHECK(is_zero(s.u));
    CHECK(is_zero(s.e));
    CHECK(is_zero(s.b));
    CHECK(is_zero(s.p));
    CHECK(is_zero(s.r));
  }
  SUBCASE("B-j from a random admissible state") {
    ProbeFactory probes(4);
    MhdStateBJ prev = MhdStateBJ::zero(sp);
    prev.u = probes.velocity(sp.velocity);
    prev.b = probes.solenoidal(sp.ops);
    const MhdStateBJ s = bj_picard_step(pb, prev);
    for (const Vector* v : {&s.u, &s.j, &s.sigma, &s.b, &s.p, &s.r}) CHECK(is_zero(*v));
  }
  SUBCASE("zero state diagnostics vanish") {
    const auto z = MhdStateBJ::zero(sp);
    const StructureReport d = diagnostics(pb, z, z);
    CHECK(d.div_defect == 0.0);
    CHECK(d.multiplier_norm == 0.0);
    CHECK(d.energy_residual == 0.0);
    CHECK(d.energy_slack == 0.0);
    CHECK(d.curl_j_minus_sigma == 0.0);
    CHECK(d.elim_j == 0.0);
    CHECK(d.elim_sigma == 0.0);
  }
}

TEST_CASE("one Picard step preserves the structure") {
  const MhdSpaces sp(box(2));
  const MhdProblem pb(sp, unit_params(smooth_force(1.0)));
  ProbeFactory probes(8);
  const Vector b0 = 0.5 * probes.solenoidal(sp.ops);
  SUBCASE("B-j") {
    MhdStateBJ prev = MhdStateBJ::zero(sp);
    prev.b = b0;
    prev.u = 0.1 * probes.velocity(sp.velocity);
    const MhdStateBJ s = bj_picard_step(pb, prev);
    CHECK(l2_norm(sp.rt, s.b) > 0.0);
    check_post_step(diagnostics(pb, s, prev), true);
    // j is the discrete curl of B.
    const Vector wc = sp.ops.weak_curl(s.b);
    CHECK((s.j - wc).norm() <= 1e-10 * (wc.norm() + s.j.norm()));
  }
  SUBCASE("B-E") {
    MhdStateBE prev = MhdStateBE::zero(sp);
    prev.b = b0;
    prev.u = 0.1 * probes.velocity(sp.velocity);
    const MhdStateBE s = be_picard_step(pb, prev);
    CHECK(l2_norm(sp.rt, s.b) > 0.0);
    check_post_step(diagnostics(pb, s, prev), false);
  }
  SUBCASE("B-E from zero") {
    const MhdStateBE s = be_picard_step(pb, MhdStateBE::zero(sp));
    check_post_step(diagnostics(pb, s, MhdStateBE::zero(sp)), false);
  }
}

TEST_CASE("Gauss law holds exactly for integer curls") {
  const auto m = box(2);
  const MhdSpaces sp(m);
  const MhdProblem pb(sp, unit_params(std::nullopt));
  MhdStateBJ s = MhdStateBJ::zero(sp);
  Vector a = Vector::Zero(sp.ned.num_dofs());
  for (Index e : sp.ned.free_dofs()) a[e] = static_cast<double>((e * 7) % 5) - 2.0;
  s.b = curl_incidence(*m) * a;
  CHECK(l2_norm(sp.rt, s.b) > 0.0);
  CHECK(diagnostics(pb, s, s).div_defect == 0.0);
}

TEST_CASE("nonlinear solve") {
  const MhdSpaces sp(box(2));
  const DiagnosticConstants c = estimate_constants(sp, 1, 20);
  CHECK(c.c1 > 0.0);
  CHECK(c.c2 > 0.0);
  CHECK(c.poincare_div.has_value());
  SUBCASE("zero force converges in one iteration") {
    const MhdProblem pb(sp, unit_params(std::nullopt));
    auto [s, rep] = solve_nonlinear(pb, MhdStateBJ::zero(sp), PicardOptions{}, c);
    CHECK(rep.converged());
    REQUIRE(rep.iterations.size() == 1);
    CHECK(rep.iterations[0].energy == 0.0);
    CHECK_FALSE(rep.iterations[0].ratio.has_value());
    CHECK(is_zero(s.u));
    auto [se, repe] = solve_nonlinear(pb, MhdStateBE::zero(sp), PicardOptions{}, c);
    CHECK(repe.converged());
    CHECK(repe.iterations.size() == 1);
    CHECK(is_zero(se.b));
  }
  SUBCASE("small data contracts") {
    const MhdProblem pb(sp, unit_params(smooth_force(1.0)));
    MhdStateBJ init = MhdStateBJ::zero(sp);
    ProbeFactory probes(3);
    init.b = 0.5 * probes.solenoidal(sp.ops);
    init.j = sp.ops.weak_curl(init.b);
    auto [s, rep] = solve_nonlinear(pb, init, PicardOptions{}, c);
    CHECK(rep.conditions.contraction());
    CHECK(rep.converged());
    CHECK(rep.iterations.size() >= 3);
    CHECK_FALSE(rep.iterations[0].ratio.has_value());
    for (std::size_t n = 1; n < rep.iterations.size(); ++n) {
      REQUIRE(rep.iterations[n].ratio.has_value());
      CHECK(*rep.iterations[n].ratio <= 0.5);
      check_post_step(rep.iterations[n].structure, true);
    }
  }
  SUBCASE("large data still returns a report") {
    const MhdProblem pb(sp, unit_params(smooth_force(1e4)));
    PicardOptions opt;
    opt.max_iter = 3;
    auto [s, rep] = solve_nonlinear(pb, MhdStateBJ::zero(sp), opt, c);
    CHECK_FALSE(rep.conditions.contraction());
    CHECK(rep.iterations.size() <= 3);
    CHECK_FALSE(rep.warnings.empty());
    if (!rep.converged()) CHECK(rep.termination == "max-iterations");
  }
  SUBCASE("option validation") {
    const MhdProblem pb(sp, unit_params(std::nullopt));
    PicardOptions opt;
    opt.max_iter = 0;
    CHECK_THROWS_AS(solve_nonlinear(pb, MhdStateBJ::zero(sp), opt, c), InvalidArgument);
  }
}

TEST_CASE("small-data conditions") {
  const ConditionReport z = check_small_data_conditions(1.0, 1.0, 0.0, 0.43, 0.1);
  CHECK(z.lhs1 == 0.0);
  CHECK(z.lhs2 == 0.0);
  CHECK(z.contraction());
  CHECK(z.be_small_re);
  // Hand evaluation: C1 = 1, C2 = 0.375, Re = Rm = 1, |f| = 0.4:
  // LHS1 = 0.4 + 2 (0.16) + 8 (0.140625)(0.16) = 0.9, LHS2 = 16 (0.140625)(0.16) = 0.36.
  const ConditionReport a = check_small_data_conditions(1.0, 1.0, 0.4, 1.0, 0.375);
  CHECK(a.lhs1 == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(a.lhs2 == doctest::Approx(0.36).epsilon(1e-14));
  CHECK(a.contraction_1);
  CHECK(a.contraction_2);
  CHECK(a.be_re_bound == doctest::Approx(2.0 / std::sqrt(5.0) / 0.15).epsilon(1e-14));
  const ConditionReport b = check_small_data_conditions(1.0, 1.0, 0.8, 1.0, 0.375);
  CHECK(b.lhs1 > a.lhs1);
  CHECK(b.lhs2 > a.lhs2);
  CHECK(b.be_re_bound < a.be_re_bound);
  CHECK_FALSE(b.contraction_1);
  const ConditionReport c = check_small_data_conditions(10.0, 1.0, 0.4, 1.0, 0.375);
  CHECK_FALSE(c.be_small_re);
}

TEST_CASE("parameter and data validation") {
  const MhdSpaces sp(box(1));
  MhdParams p;
  p.re = 0.0;
  CHECK_THROWS_AS(MhdProblem(sp, p), InvalidArgument);
  p.re = 1.0;
  p.s = -1.0;
  CHECK_THROWS_AS(MhdProblem(sp, p), InvalidArgument);
  p.s = 1.0;
  p.h = Vector::Zero(3);
  CHECK_THROWS_AS(MhdProblem(sp, p), InvalidArgument);
  p.h = Vector();
  p.g = Vector::Ones(sp.ned.num_dofs());
  const MhdProblem pb(sp, p);
  CHECK_FALSE(pb.params.homogeneous_magnetic());
  CHECK_THROWS_AS(be_picard_step(pb, MhdStateBE::zero(sp)), InvalidArgument);
}
