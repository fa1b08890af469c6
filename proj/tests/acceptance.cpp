// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria. Optional arguments select criteria by name.
#include "smhd/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

using namespace smhd;
using nlohmann::json;

namespace {

// Pinned tolerances and windows.
constexpr double kGauss = 1e-12;          // max |div B| <= kGauss * ||B|| / h
constexpr double kRelative = 1e-10;       // multiplier, energy identity, elimination
constexpr double kSlack = -1e-10;         // energy inequality
constexpr double kContraction = 0.75;     // E^n / E^{n-1}
constexpr double kCommuting = 1e-12;
constexpr double kPoincareFactor = 2.0;
constexpr double kRateB[2] = {0.8, 1.3};
constexpr double kRateU[2] = {1.7, 2.3};
constexpr double kGaussSeconds = 30.0;    // per mesh
constexpr double kContractionSeconds = 60.0;
constexpr double kStudySeconds = 600.0;

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Smooth, non-gradient body force with a nonzero start for B so that every
// coupling term is active.
RunConfig smooth_run(int n, Formulation form) {
  RunConfig c;
  c.n = {n, n, n};
  c.formulation = form;
  c.force_kind = "modes";
  c.force_modes = {{{1, 1, 1}, Vec3(0.3, -0.2, 0.5)}, {{2, 1, 1}, Vec3(0.0, 0.4, -0.1)}, {{1, 2, 3}, Vec3(0.2, 0.0, 0.3)}};
  c.initial_kind = "solenoidal";
  c.initial_scale = 0.5;
  c.c2_trials = 50;
  return c;
}

struct SmoothRuns {
  // (mesh, formulation, report, seconds)
  struct Run {
    int n;
    Formulation form;
    json report;
    int exit_code;
    double seconds;
  };
  std::vector<Run> runs;
};

const SmoothRuns& smooth_runs() {
  static const SmoothRuns cache = [] {
    SmoothRuns s;
    for (int n : {2, 4})
      for (Formulation f : {Formulation::BE, Formulation::BJ}) {
        const auto t0 = std::chrono::steady_clock::now();
        const RunResult r = run_solve(smooth_run(n, f));
        s.runs.push_back({n, f, r.report, r.exit_code, seconds_since(t0)});
      }
    return s;
  }();
  return cache;
}

std::string tag(const SmoothRuns::Run& r) { return to_string(r.form) + "(" + std::to_string(r.n) + ")"; }

template <class F>
Outcome per_iterate(F&& check) {
  Outcome o;
  for (const auto& r : smooth_runs().runs) {
    o.require(r.exit_code == 0, tag(r) + " did not converge");
    for (const json& it : r.report["picard"]["iterations"]) check(o, r, it["structure"], it["n"].get<int>());
    if (o.detail.size() > 600) break;
  }
  return o;
}

Outcome gauss_law() {
  double worst = 0.0;
  Outcome o = per_iterate([&](Outcome& o, const SmoothRuns::Run& r, const json& s, int n) {
    const double scale = s["div_scale"].get<double>();  // ||B|| / h
    const double defect = s["div_defect"].get<double>();
    if (scale > 0.0) worst = std::max(worst, defect / scale);
    o.require(defect <= kGauss * scale, tag(r) + " iterate " + std::to_string(n));
  });
  for (const auto& r : smooth_runs().runs)
    o.require(r.report["final"]["b_d"].get<double>() > 0.0, tag(r) + " has B = 0");
  for (int n : {2, 4}) {
    double t = 0.0;
    for (const auto& r : smooth_runs().runs)
      if (r.n == n) t += r.seconds;
    o.require(t <= kGaussSeconds, "mesh " + std::to_string(n) + " took " + fmt("%.1f s", t));
  }
  o.detail = "max |div B| h / ||B|| = " + fmt("%.2e", worst) + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome multiplier_nullity() {
  double worst = 0.0;
  Outcome o = per_iterate([&](Outcome& o, const SmoothRuns::Run& r, const json& s, int n) {
    const double rel = s["multiplier_norm"].get<double>() / s["problem_scale"].get<double>();
    worst = std::max(worst, rel);
    o.require(rel <= kRelative, tag(r) + " iterate " + std::to_string(n) + " ||r|| = " + fmt("%.2e", rel));
  });
  o.detail = "max ||r_h|| relative = " + fmt("%.2e", worst) + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome energy_identity() {
  double worst = 0.0, min_slack = INFINITY;
  Outcome o = per_iterate([&](Outcome& o, const SmoothRuns::Run& r, const json& s, int n) {
    o.require(s["homogeneous_magnetic_data"].get<bool>(), tag(r) + " data not homogeneous");
    const double rel = s["energy_relative"].get<double>();
    const double slack = s["energy_slack"].get<double>();
    worst = std::max(worst, rel);
    min_slack = std::min(min_slack, slack);
    o.require(rel <= kRelative, tag(r) + " iterate " + std::to_string(n) + " residual " + fmt("%.2e", rel));
    o.require(slack >= kSlack, tag(r) + " iterate " + std::to_string(n) + " slack " + fmt("%.2e", slack));
  });
  o.detail = "max relative residual = " + fmt("%.2e", worst) + ", min slack = " + fmt("%.3e", min_slack) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome elimination() {
  double worst = 0.0;
  Outcome o = per_iterate([&](Outcome& o, const SmoothRuns::Run& r, const json& s, int n) {
    if (r.form != Formulation::BJ) return;
    const double ej = s["elimination_j"].get<double>(), es = s["elimination_sigma"].get<double>();
    worst = std::max({worst, ej, es});
    o.require(ej <= kRelative && es <= kRelative, tag(r) + " iterate " + std::to_string(n));
  });
  o.detail = "max relative residual = " + fmt("%.2e", worst) + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome contraction() {
  Outcome o;
  std::string info;
  for (Formulation f : {Formulation::BJ, Formulation::BE}) {
    RunConfig c = smooth_run(4, f);
    c.re = c.rm = c.s = 1.0;
    const auto t0 = std::chrono::steady_clock::now();
    const RunResult r = run_solve(c);
    const double secs = seconds_since(t0);
    const json& cond = r.report["conditions"];
    const bool small = cond["contraction_1_satisfied"].get<bool>() && cond["contraction_2_satisfied"].get<bool>();
    double max_ratio = 0.0;
    int ratios = 0;
    for (const json& it : r.report["picard"]["iterations"])
      if (it["n"].get<int>() >= 2 && it["ratio"].is_number()) {
        max_ratio = std::max(max_ratio, it["ratio"].get<double>());
        ++ratios;
      }
    info += (info.empty() ? "" : ", ") + to_string(f) + ": " + std::to_string(ratios) + " ratios, max " +
            fmt("%.3f", max_ratio) + ", " + fmt("%.1f s", secs);
    if (f == Formulation::BJ) {
      o.require(small, "small-data conditions not satisfied");
      o.require(r.exit_code == 0, "did not converge");
      o.require(ratios >= 1, "no ratio recorded");
      o.require(max_ratio <= kContraction, "ratio " + fmt("%.3f", max_ratio));
      o.require(secs <= kContractionSeconds, "took " + fmt("%.1f s", secs));
    }
  }
  o.detail = info + " (BE informational)" + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome complex_exactness() {
  Outcome o;
  double worst_c = 0.0, worst_d = 0.0;
  for (int n : {1, 2, 3}) {
    auto m = std::make_shared<const Mesh>(build_box_mesh(n, n, n));
    const double dc = multiply(div_incidence(*m), curl_incidence(*m)).max_abs();
    const double cg = multiply(curl_incidence(*m), grad_incidence(*m)).max_abs();
    o.require(dc == 0.0 && cg == 0.0, "incidence product nonzero on n=" + std::to_string(n));
    const ExactnessCount e = exactness_count(m);
    o.require(e.alternating_sum() == 0, "alternating sum " + std::to_string(e.alternating_sum()) + " on n=" +
                                            std::to_string(n));
    const CommutingDefects cd = check_commuting(
        *m, [](const Vec3& x) { return Vec3(x.y() * x.y(), x.z() * x.x(), x.x() * x.y() * x.z()); },
        [](const Vec3& x) { return Vec3(x.x() * x.z() - x.x(), -x.y() * x.z(), x.z() - 2 * x.y()); },
        [](const Vec3& x) { return Vec3(x.x() * x.x(), x.y() * x.z(), x.x() * x.y()); },
        [](const Vec3& x) { return 2 * x.x() + x.z(); });
    worst_c = std::max(worst_c, cd.curl_defect);
    worst_d = std::max(worst_d, cd.div_defect);
    o.require(cd.curl_defect <= kCommuting && cd.div_defect <= kCommuting,
              "commuting defect on n=" + std::to_string(n));
  }
  o.detail = "D*C = C*G = 0, sums 0, defects curl " + fmt("%.1e", worst_c) + " div " + fmt("%.1e", worst_d) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome poincare_stability() {
  Outcome o;
  double c[2];
  int i = 0;
  for (int n : {2, 4}) {
    const DiscreteOps ops(std::make_shared<const Mesh>(build_box_mesh(n, n, n)));
    c[i++] = estimate_poincare_constant(ops);
  }
  const double ratio = c[1] / c[0];
  o.require(ratio <= kPoincareFactor && ratio >= 1.0 / kPoincareFactor, "ratio " + fmt("%.3f", ratio));
  o.detail = "C(2) = " + fmt("%.6f", c[0]) + ", C(4) = " + fmt("%.6f", c[1]) + ", ratio " + fmt("%.3f", ratio) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome manufactured_convergence() {
  Outcome o;
  RunConfig c;
  c.formulation = Formulation::BJ;
  c.manufactured = "trig-1";
  c.alpha = c.beta = 0.1;
  c.levels = {2, 4, 8};
  c.c2_trials = 20;
  c.poincare = false;
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult r = run_study(c);
  const double secs = seconds_since(t0);
  o.require(r.exit_code == 0, "study failed: " + r.message);
  o.require(secs <= kStudySeconds, "took " + fmt("%.0f s", secs));
  if (r.exit_code == 0) {
    const json& rates = r.report["levels"].back()["rates"];
    const double rb = rates["b_l2"].get<double>(), ru = rates["u_h1"].get<double>();
    o.require(rb >= kRateB[0] && rb <= kRateB[1], "B L2 rate " + fmt("%.3f", rb));
    o.require(ru >= kRateU[0] && ru <= kRateU[1], "u H1 rate " + fmt("%.3f", ru));
    o.detail = "rates B L2 " + fmt("%.3f", rb) + ", u H1 " + fmt("%.3f", ru) + ", " + fmt("%.0f s", secs) +
               (o.detail.empty() ? "" : " | " + o.detail);
  }
  return o;
}

Outcome degenerate() {
  Outcome o;
  auto exactly_zero = [](const json& s) {
    for (const char* k : {"div_defect", "multiplier_norm", "dissipation", "power", "energy_residual", "energy_slack"})
      if (s[k].get<double>() != 0.0) return false;
    for (const char* k : {"curl_j_minus_sigma", "elimination_j", "elimination_sigma"})
      if (s.contains(k) && s[k].get<double>() != 0.0) return false;
    return true;
  };
  for (Formulation f : {Formulation::BE, Formulation::BJ}) {
    RunConfig c;
    c.formulation = f;
    c.c2_trials = 10;
    const RunResult r = run_solve(c);
    const json& its = r.report["picard"]["iterations"];
    const std::string t = to_string(f);
    o.require(r.exit_code == 0, t + " did not converge");
    o.require(its.size() == 1, t + " took " + std::to_string(its.size()) + " iterations");
    for (const char* k : {"u_h1", "b_d", "p_l2", "r_l2", "norm_A"})
      o.require(r.report["final"][k].get<double>() == 0.0, t + " final " + k + " nonzero");
    for (const json& it : its) {
      o.require(it["energy"].get<double>() == 0.0 && it["du_h1"].get<double>() == 0.0 &&
                    it["db_d"].get<double>() == 0.0 && it["dj_l2"].get<double>() == 0.0,
                t + " increments nonzero");
      o.require(exactly_zero(it["structure"]), t + " diagnostics nonzero");
    }
  }
  o.detail = "zero state in one iteration, diagnostics exactly 0" + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"exact-gauss-law", gauss_law},
      {"multiplier-nullity", multiplier_nullity},
      {"energy-identity", energy_identity},
      {"elimination-identities", elimination},
      {"picard-contraction", contraction},
      {"complex-exactness", complex_exactness},
      {"poincare-stability", poincare_stability},
      {"manufactured-convergence", manufactured_convergence},
      {"degenerate-zero-data", degenerate},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %-26s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed;
}
