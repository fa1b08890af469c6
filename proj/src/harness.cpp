#include "smhd/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace smhd {

using nlohmann::json;

// --------------------------------------------------------------------------
// Config parsing

namespace {

void allow_keys(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

double number(const json& j, const std::string& key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(where + "." + key + " must be finite");
  return d;
}

long long integer(const json& j, const std::string& key, long long fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
  return v.get<long long>();
}

std::string text(const json& j, const std::string& key, const std::string& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(where + "." + key + " must be a string");
  return v.get<std::string>();
}

Vec3 vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(where + " must be an array of 3 numbers");
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) throw ConfigError(where + " must hold finite numbers");
    out[i] = v[i].get<double>();
  }
  return out;
}

// Necessary condition for the velocity-pressure pair: at least as many free
// velocity DOFs as zero-mean pressure DOFs.
std::string resolution_problem(const std::array<int, 3>& n) {
  const long long vel = 3LL * (2 * n[0] - 1) * (2 * n[1] - 1) * (2 * n[2] - 1);
  const long long pres = 1LL * (n[0] + 1) * (n[1] + 1) * (n[2] + 1) - 1;
  if (vel >= pres) return "";
  return "mesh " + std::to_string(n[0]) + "x" + std::to_string(n[1]) + "x" + std::to_string(n[2]) +
         " is too coarse for the velocity-pressure pair: " + std::to_string(vel) + " free velocity DOFs vs " +
         std::to_string(pres) + " pressure DOFs";
}

void check_resolution(const std::array<int, 3>& n) {
  const std::string why = resolution_problem(n);
  if (!why.empty()) throw ConfigError(why);
}

void check_output_path(const std::string& path, const std::string& key) {
  if (path.empty()) return;
  const std::filesystem::path p(path);
  const auto parent = p.has_parent_path() ? p.parent_path() : std::filesystem::path(".");
  if (!std::filesystem::is_directory(parent)) throw ConfigError("output." + key + ": directory " + parent.string() + " does not exist");
  if (std::filesystem::is_directory(p)) throw ConfigError("output." + key + " is a directory");
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  allow_keys(j, {"mesh", "formulation", "params", "force", "manufactured", "initial", "picard", "study", "constants",
                 "seed", "output"},
             "config");
  RunConfig c;
  if (j.contains("mesh")) {
    const json& m = j["mesh"];
    allow_keys(m, {"n", "lo", "hi"}, "mesh");
    if (m.contains("n")) {
      const json& n = m["n"];
      if (n.is_number_integer()) {
        c.n.fill(static_cast<int>(n.get<long long>()));
        if (n.get<long long>() > 64) throw ConfigError("mesh.n is too large");
      } else if (n.is_array() && n.size() == 3) {
        for (int i = 0; i < 3; ++i) {
          if (!n[i].is_number_integer() || n[i].get<long long>() > 64) throw ConfigError("mesh.n must hold integers <= 64");
          c.n[i] = static_cast<int>(n[i].get<long long>());
        }
      } else {
        throw ConfigError("mesh.n must be an integer or an array of 3 integers");
      }
    }
    if (m.contains("lo")) c.box.lo = vec3(m["lo"], "mesh.lo");
    if (m.contains("hi")) c.box.hi = vec3(m["hi"], "mesh.hi");
  }
  for (int v : c.n)
    if (v < 1) throw ConfigError("mesh.n entries must be >= 1");
  if ((c.box.extent().array() <= 0.0).any()) throw ConfigError("mesh.hi must exceed mesh.lo in every direction");

  const std::string form = text(j, "formulation", "BJ", "config");
  if (form == "BJ") c.formulation = Formulation::BJ;
  else if (form == "BE") c.formulation = Formulation::BE;
  else throw ConfigError("formulation must be \"BE\" or \"BJ\"");

  if (j.contains("params")) {
    const json& p = j["params"];
    allow_keys(p, {"Re", "Rm", "S"}, "params");
    c.re = number(p, "Re", 1.0, "params");
    c.rm = number(p, "Rm", 1.0, "params");
    c.s = number(p, "S", 1.0, "params");
  }
  if (!(c.re > 0.0) || !(c.rm > 0.0) || !(c.s > 0.0)) throw ConfigError("params Re, Rm, S must be positive");

  if (j.contains("force")) {
    const json& f = j["force"];
    allow_keys(f, {"kind", "value", "scale", "modes"}, "force");
    c.force_kind = text(f, "kind", "zero", "force");
    if (c.force_kind == "constant") {
      if (!f.contains("value")) throw ConfigError("force.value is required for a constant force");
      c.force_constant = vec3(f["value"], "force.value");
    } else if (c.force_kind == "modes") {
      c.force_scale = number(f, "scale", 1.0, "force");
      if (!f.contains("modes") || !f["modes"].is_array() || f["modes"].empty())
        throw ConfigError("force.modes must be a non-empty array");
      for (const json& m : f["modes"]) {
        allow_keys(m, {"k", "amplitude"}, "force.modes[]");
        ForceMode fm;
        if (!m.contains("k") || !m.contains("amplitude")) throw ConfigError("force.modes[] needs k and amplitude");
        const json& k = m["k"];
        if (!k.is_array() || k.size() != 3) throw ConfigError("force.modes[].k must be 3 integers");
        for (int i = 0; i < 3; ++i) {
          if (!k[i].is_number_integer() || k[i].get<long long>() < 1 || k[i].get<long long>() > 16)
            throw ConfigError("force.modes[].k entries must be integers in [1, 16]");
          fm.k[i] = static_cast<int>(k[i].get<long long>());
        }
        fm.amplitude = vec3(m["amplitude"], "force.modes[].amplitude");
        c.force_modes.push_back(fm);
      }
    } else if (c.force_kind != "zero") {
      throw ConfigError("force.kind must be zero, constant or modes");
    }
    if (c.force_kind != "constant" && f.contains("value")) throw ConfigError("force.value needs kind constant");
    if (c.force_kind != "modes" && (f.contains("modes") || f.contains("scale")))
      throw ConfigError("force.modes and force.scale need kind modes");
  }

  if (j.contains("manufactured")) {
    const json& m = j["manufactured"];
    allow_keys(m, {"case", "alpha", "beta"}, "manufactured");
    c.manufactured = text(m, "case", "", "manufactured");
    if (c.manufactured != "trig-1" && c.manufactured != "discrete-exact")
      throw ConfigError("manufactured.case must be trig-1 or discrete-exact");
    c.alpha = number(m, "alpha", 0.1, "manufactured");
    c.beta = number(m, "beta", 0.1, "manufactured");
    if (j.contains("force")) throw ConfigError("force and manufactured are mutually exclusive");
    if (c.manufactured == "trig-1" &&
        (!c.box.lo.isZero(0.0) || !c.box.hi.isApprox(Vec3::Ones(), 0.0)))
      throw ConfigError("the trig-1 case lives on the unit cube");
  }

  if (j.contains("initial")) {
    const json& i = j["initial"];
    allow_keys(i, {"kind", "scale"}, "initial");
    c.initial_kind = text(i, "kind", "zero", "initial");
    if (c.initial_kind != "zero" && c.initial_kind != "solenoidal")
      throw ConfigError("initial.kind must be zero or solenoidal");
    c.initial_scale = number(i, "scale", 0.5, "initial");
  }

  if (j.contains("picard")) {
    const json& p = j["picard"];
    allow_keys(p, {"rtol", "atol", "max_iter"}, "picard");
    c.picard.rtol = number(p, "rtol", c.picard.rtol, "picard");
    c.picard.atol = number(p, "atol", c.picard.atol, "picard");
    const long long mi = integer(p, "max_iter", c.picard.max_iter, "picard");
    if (mi < 1 || mi > 100000) throw ConfigError("picard.max_iter must be in [1, 100000]");
    c.picard.max_iter = static_cast<int>(mi);
    if (c.picard.rtol < 0.0 || c.picard.atol < 0.0) throw ConfigError("picard tolerances must be >= 0");
  }

  if (j.contains("study")) {
    const json& s = j["study"];
    allow_keys(s, {"levels"}, "study");
    if (!s.contains("levels") || !s["levels"].is_array()) throw ConfigError("study.levels must be an array");
    for (const json& l : s["levels"]) {
      if (!l.is_number_integer() || l.get<long long>() < 1 || l.get<long long>() > 64)
        throw ConfigError("study.levels must be integers in [1, 64]");
      c.levels.push_back(static_cast<int>(l.get<long long>()));
    }
    if (c.levels.size() < 2) throw ConfigError("study.levels needs at least 2 levels for rate estimation");
    for (std::size_t i = 1; i < c.levels.size(); ++i)
      if (c.levels[i] <= c.levels[i - 1]) throw ConfigError("study.levels must be strictly increasing");
  }

  if (j.contains("constants")) {
    const json& k = j["constants"];
    allow_keys(k, {"c2_trials", "poincare"}, "constants");
    const long long t = integer(k, "c2_trials", c.c2_trials, "constants");
    if (t < 1 || t > 100000) throw ConfigError("constants.c2_trials must be in [1, 100000]");
    c.c2_trials = static_cast<int>(t);
    if (k.contains("poincare")) {
      if (!k["poincare"].is_boolean()) throw ConfigError("constants.poincare must be a boolean");
      c.poincare = k["poincare"].get<bool>();
    }
  }

  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer() || (!j["seed"].is_number_unsigned() && j["seed"].get<long long>() < 0))
      throw ConfigError("seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }

  if (j.contains("output")) {
    const json& o = j["output"];
    allow_keys(o, {"report", "csv", "vtk", "matrix_market"}, "output");
    c.report_path = text(o, "report", "", "output");
    c.csv_path = text(o, "csv", "", "output");
    c.vtk_path = text(o, "vtk", "", "output");
    c.matrix_market_path = text(o, "matrix_market", "", "output");
    check_output_path(c.report_path, "report");
    check_output_path(c.csv_path, "csv");
    check_output_path(c.vtk_path, "vtk");
    check_output_path(c.matrix_market_path, "matrix_market");
  }
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["mesh"] = {{"n", n}, {"lo", {box.lo.x(), box.lo.y(), box.lo.z()}}, {"hi", {box.hi.x(), box.hi.y(), box.hi.z()}}};
  j["formulation"] = to_string(formulation);
  j["params"] = {{"Re", re}, {"Rm", rm}, {"S", s}};
  if (manufactured.empty()) {
    json f = {{"kind", force_kind}};
    if (force_kind == "constant") f["value"] = {force_constant.x(), force_constant.y(), force_constant.z()};
    if (force_kind == "modes") {
      f["scale"] = force_scale;
      f["modes"] = json::array();
      for (const auto& m : force_modes)
        f["modes"].push_back({{"k", m.k}, {"amplitude", {m.amplitude.x(), m.amplitude.y(), m.amplitude.z()}}});
    }
    j["force"] = f;
  } else {
    j["manufactured"] = {{"case", manufactured}, {"alpha", alpha}, {"beta", beta}};
  }
  j["initial"] = {{"kind", initial_kind}, {"scale", initial_scale}};
  j["picard"] = {{"rtol", picard.rtol}, {"atol", picard.atol}, {"max_iter", picard.max_iter}};
  if (!levels.empty()) j["study"] = {{"levels", levels}};
  j["constants"] = {{"c2_trials", c2_trials}, {"poincare", poincare}};
  j["seed"] = seed;
  json o = json::object();
  if (!report_path.empty()) o["report"] = report_path;
  if (!csv_path.empty()) o["csv"] = csv_path;
  if (!vtk_path.empty()) o["vtk"] = vtk_path;
  if (!matrix_market_path.empty()) o["matrix_market"] = matrix_market_path;
  j["output"] = o;
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return RunConfig::from_json(j);
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// --------------------------------------------------------------------------
// trig-1

namespace {

constexpr double kPi = std::numbers::pi;

using Multi = std::array<int, 3>;

Multi plus(Multi a, int axis, int count = 1) {
  a[axis] += count;
  return a;
}

// k-th derivative of sin^2(pi t).
double sin2_d(int k, double t) {
  switch (k) {
    case 0: return std::pow(std::sin(kPi * t), 2);
    case 1: return kPi * std::sin(2 * kPi * t);
    case 2: return 2 * kPi * kPi * std::cos(2 * kPi * t);
    case 3: return -4 * kPi * kPi * kPi * std::sin(2 * kPi * t);
    default: throw std::logic_error("sin2_d: order too high");
  }
}

// k-th derivatives of sin(pi t) and cos(pi t).
double sin_d(int k, double t) {
  const double pk = std::pow(kPi, k);
  switch (k % 4) {
    case 0: return pk * std::sin(kPi * t);
    case 1: return pk * std::cos(kPi * t);
    case 2: return -pk * std::sin(kPi * t);
    default: return -pk * std::cos(kPi * t);
  }
}
double cos_d(int k, double t) {
  const double pk = std::pow(kPi, k);
  switch (k % 4) {
    case 0: return pk * std::cos(kPi * t);
    case 1: return -pk * std::sin(kPi * t);
    case 2: return -pk * std::cos(kPi * t);
    default: return pk * std::sin(kPi * t);
  }
}

double psi(const Multi& d, const Vec3& x) { return sin2_d(d[0], x.x()) * sin2_d(d[1], x.y()) * sin2_d(d[2], x.z()); }
double chi(const Multi& d, const Vec3& x) { return sin_d(d[0], x.x()) * sin_d(d[1], x.y()) * cos_d(d[2], x.z()); }

// Derivative d of velocity component c: u_c = alpha (psi_{c+1} - psi_{c+2}).
double u_d(double alpha, int c, const Multi& d, const Vec3& x) {
  return alpha * (psi(plus(d, (c + 1) % 3), x) - psi(plus(d, (c + 2) % 3), x));
}

// B = beta (chi_y, -chi_x, 0).
double b_d(double beta, int c, const Multi& d, const Vec3& x) {
  if (c == 0) return beta * chi(plus(d, 1), x);
  if (c == 1) return -beta * chi(plus(d, 0), x);
  return 0.0;
}

Vec3 curl_of(const Mat3& g) { return Vec3(g(2, 1) - g(1, 2), g(0, 2) - g(2, 0), g(1, 0) - g(0, 1)); }

}  // namespace

Vec3 Trig1::u(const Vec3& x) const {
  return Vec3(u_d(alpha, 0, {0, 0, 0}, x), u_d(alpha, 1, {0, 0, 0}, x), u_d(alpha, 2, {0, 0, 0}, x));
}

Mat3 Trig1::grad_u(const Vec3& x) const {
  Mat3 g;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k) g(c, k) = u_d(alpha, c, plus({0, 0, 0}, k), x);
  return g;
}

Vec3 Trig1::laplace_u(const Vec3& x) const {
  Vec3 l = Vec3::Zero();
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k) l[c] += u_d(alpha, c, plus({0, 0, 0}, k, 2), x);
  return l;
}

Vec3 Trig1::b(const Vec3& x) const {
  return Vec3(b_d(beta, 0, {0, 0, 0}, x), b_d(beta, 1, {0, 0, 0}, x), 0.0);
}

Mat3 Trig1::grad_b(const Vec3& x) const {
  Mat3 g;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k) g(c, k) = b_d(beta, c, plus({0, 0, 0}, k), x);
  return g;
}

Vec3 Trig1::curl_b(const Vec3& x) const { return curl_of(grad_b(x)); }

Vec3 Trig1::curl_curl_b(const Vec3& x) const {
  // curl curl B = grad(div B) - lap B, from second derivatives.
  Vec3 out = Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    double grad_div = 0.0, lap = 0.0;
    for (int k = 0; k < 3; ++k) {
      grad_div += b_d(beta, k, plus(plus({0, 0, 0}, k), i), x);
      lap += b_d(beta, i, plus({0, 0, 0}, k, 2), x);
    }
    out[i] = grad_div - lap;
  }
  return out;
}

double Trig1::p(const Vec3& x) const { return std::cos(kPi * x.x()) * std::cos(kPi * x.y()) * std::cos(kPi * x.z()); }

Vec3 Trig1::grad_p(const Vec3& x) const {
  const double cx = std::cos(kPi * x.x()), cy = std::cos(kPi * x.y()), cz = std::cos(kPi * x.z());
  const double sx = std::sin(kPi * x.x()), sy = std::sin(kPi * x.y()), sz = std::sin(kPi * x.z());
  return -kPi * Vec3(sx * cy * cz, cx * sy * cz, cx * cy * sz);
}

Vec3 Trig1::curl_sigma(const Vec3& x) const {
  // curl(u x B) = u div B - B div u + (B.grad) u - (u.grad) B.
  const Vec3 uu = u(x), bb = b(x);
  const Mat3 gu = grad_u(x), gb = grad_b(x);
  return uu * gb.trace() - bb * gu.trace() + gu * bb - gb * uu;
}

Vec3 Trig1::force(const Vec3& x) const {
  const Vec3 uu = u(x);
  return -laplace_u(x) / re + grad_u(x) * uu + grad_p(x) + s * b(x).cross(j(x));
}

Vec3 Trig1::induction_data(const Vec3& x) const { return (s / rm) * (curl_curl_b(x) / rm - curl_sigma(x)); }

// --------------------------------------------------------------------------
// Manufactured cases

namespace {

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t salt) { return seed ^ (0x9E3779B97F4A7C15ull * salt); }

// theta = A(xi*) xi*, row by row on the unreduced blocks.
std::map<std::string, Vector> apply_blocks(const BlockSystem& sys, const std::map<std::string, Vector>& x) {
  std::map<std::string, Vector> out;
  for (const auto& row : sys.fields()) {
    Vector r = Vector::Zero(row.size);
    for (const auto& col : sys.fields())
      if (sys.has_block(row.name, col.name)) r += sys.block(row.name, col.name) * x.at(col.name);
    out[row.name] = r;
  }
  return out;
}

}  // namespace

ManufacturedCase make_manufactured(const RunConfig& cfg, const MhdSpaces& sp) {
  ManufacturedCase mc;
  mc.id = cfg.manufactured;
  mc.params.re = cfg.re;
  mc.params.rm = cfg.rm;
  mc.params.s = cfg.s;
  if (cfg.manufactured == "trig-1") {
    Trig1 t{cfg.alpha, cfg.beta, cfg.re, cfg.rm, cfg.s};
    mc.trig = t;
    mc.params.force = analytic_vector([t](const Vec3& x) { return t.force(x); });
    mc.params.h = assemble_load(sp.rt, analytic_vector([t](const Vec3& x) { return t.induction_data(x); }));
    return mc;
  }
  if (cfg.manufactured != "discrete-exact") throw ConfigError("unknown manufactured case " + cfg.manufactured);

  // u* = 0, B* a discrete curl, p* a zero-mean P1 function; the data are the
  // scheme applied to that state.
  ProbeFactory probes(derived_seed(cfg.seed, 3));
  mc.u = Vector::Zero(sp.velocity.num_dofs());
  mc.b = cfg.beta * probes.solenoidal(sp.ops);
  Vector p = interpolate(sp.pressure, analytic_scalar([](const Vec3& x) {
    return std::cos(kPi * x.x()) * std::sin(kPi * x.y()) + x.z();
  }));
  const Vector w = sp.pressure.mean_weights();
  p -= Vector::Constant(p.size(), w.dot(p) / w.sum());
  mc.p = p;

  MhdParams probe_params;
  probe_params.re = cfg.re;
  probe_params.rm = cfg.rm;
  probe_params.s = cfg.s;
  const MhdProblem pb(sp, probe_params);
  const Vector jstar = sp.ops.weak_curl(mc.b) / cfg.rm;
  const Vector zero_r = Vector::Zero(sp.dg0.num_dofs());
  if (cfg.formulation == Formulation::BJ) {
    MhdStateBJ st{mc.u, jstar, Vector::Zero(sp.ned.num_dofs()), mc.b, mc.p, zero_r};
    const auto theta = apply_blocks(bj_system(pb, st), {{"u", st.u}, {"j", st.j}, {"sigma", st.sigma}, {"B", st.b},
                                                        {"p", st.p}, {"r", st.r}});
    mc.params.f = theta.at("u");
    mc.params.l = theta.at("j");
    mc.params.g = theta.at("sigma");
    mc.params.h = theta.at("B");
    mc.params.m = theta.at("p");
    mc.params.z = theta.at("r");
  } else {
    MhdStateBE st{mc.u, jstar, mc.b, mc.p, zero_r};
    const auto theta =
        apply_blocks(be_system(pb, st), {{"u", st.u}, {"E", st.e}, {"B", st.b}, {"p", st.p}, {"r", st.r}});
    mc.params.f = theta.at("u");
    mc.params.l = theta.at("E");
    mc.params.h = theta.at("B");
    mc.params.m = theta.at("p");
    mc.params.z = theta.at("r");
  }
  return mc;
}

LevelErrors manufactured_errors(const ManufacturedCase& mc, const MhdSpaces& sp, const Vector& u, const Vector& b,
                                const Vector& p) {
  LevelErrors e;
  const Mesh& m = *sp.mesh;
  if (!mc.trig) {
    const Vector du = u - mc.u, db = b - mc.b, dp = p - mc.p;
    e.u_h1 = h1_norm(sp.velocity, du);
    e.b_l2 = l2_norm(sp.rt, db);
    e.b_d = sp.ops.norm_d(db);
    e.p_l2 = l2_norm(sp.pressure, dp);
    return e;
  }
  const Trig1& t = *mc.trig;
  const Vector curl_h = sp.ops.weak_curl(b);
  const Vector div = cell_divergence(m, b);
  const auto& rule = rich_tet_rule();
  double eu = 0.0, egu = 0.0, eb = 0.0, ediv = 0.0, ecurl = 0.0, ep = 0.0;
  LocalBasis vb, rb, nb, pb;
  std::vector<Index> dofs;
  for (Index k = 0; k < m.num_tets(); ++k) {
    const TetGeometry g = tet_geometry(m, k);
    ediv += g.volume * div[k] * div[k];
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Bary& bq = rule.points[q];
      const Vec3 x = g.point(bq);
      const double w = 6.0 * g.volume * rule.weights[q];
      sp.velocity.eval_basis(g, k, bq, vb);
      sp.rt.eval_basis(g, k, bq, rb);
      sp.ned.eval_basis(g, k, bq, nb);
      sp.pressure.eval_basis(g, k, bq, pb);
      eu += w * (t.u(x) - evaluate(sp.velocity, u, k, vb, dofs)).squaredNorm();
      egu += w * (t.grad_u(x) - evaluate_gradient(sp.velocity, u, k, vb, dofs)).squaredNorm();
      eb += w * (t.b(x) - evaluate(sp.rt, b, k, rb, dofs)).squaredNorm();
      ecurl += w * (t.curl_b(x) - evaluate(sp.ned, curl_h, k, nb, dofs)).squaredNorm();
      ep += w * std::pow(t.p(x) - evaluate(sp.pressure, p, k, pb, dofs)[0], 2);
    }
  }
  e.u_h1 = std::sqrt(eu + egu);
  e.b_l2 = std::sqrt(eb);
  e.b_d = std::sqrt(eb + ediv + ecurl);
  e.p_l2 = std::sqrt(ep);
  return e;
}

// --------------------------------------------------------------------------
// Runs

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct CheckSummary {
  bool all = true;
  void add(json& out, const std::string& name, bool pass) {
    out[name] = pass;
    all = all && pass;
  }
};

json structure_json(const StructureReport& s, Formulation f, CheckSummary& summary) {
  json j;
  j["div_defect"] = s.div_defect;
  j["div_scale"] = s.div_scale;
  j["div_bound"] = Tolerances::gauss * s.div_scale;
  j["multiplier_norm"] = s.multiplier_norm;
  j["problem_scale"] = s.problem_scale;
  j["homogeneous_magnetic_data"] = s.energy_applicable;
  j["dissipation"] = s.dissipation;
  j["power"] = s.power;
  j["energy_residual"] = s.energy_residual;
  j["energy_bound"] = s.energy_bound;
  j["energy_relative"] = s.energy_relative();
  j["energy_slack"] = s.energy_slack;
  json c;
  summary.add(c, "gauss_law", s.div_defect <= Tolerances::gauss * s.div_scale);
  if (s.energy_applicable) {
    summary.add(c, "multiplier", s.multiplier_norm <= Tolerances::relative * s.problem_scale);
    summary.add(c, "energy_identity", s.energy_relative() <= Tolerances::relative);
    summary.add(c, "energy_inequality", s.energy_slack >= Tolerances::slack);
  }
  if (f == Formulation::BJ) {
    j["curl_j_minus_sigma"] = s.curl_j_minus_sigma;
    j["curl_scale"] = s.curl_scale;
    j["elimination_j"] = s.elim_j;
    j["elimination_sigma"] = s.elim_sigma;
    if (s.energy_applicable)
      summary.add(c, "curl_j_minus_sigma", s.curl_j_minus_sigma <= Tolerances::relative * s.curl_scale);
    summary.add(c, "elimination_j", s.elim_j <= Tolerances::relative);
    summary.add(c, "elimination_sigma", s.elim_sigma <= Tolerances::relative);
  }
  j["checks"] = c;
  return j;
}

json picard_json(const PicardReport& rep, CheckSummary& summary) {
  json j;
  j["termination"] = rep.termination;
  j["iterations"] = json::array();
  double max_ratio = 0.0;
  for (const auto& it : rep.iterations) {
    json r;
    r["n"] = it.n;
    r["du_h1"] = it.du;
    r["dj_l2"] = it.dj;
    r["db_d"] = it.db;
    r["energy"] = it.energy;
    r["ratio"] = optional_number(it.ratio);
    if (it.ratio) max_ratio = std::max(max_ratio, *it.ratio);
    r["structure"] = structure_json(it.structure, rep.formulation, summary);
    j["iterations"].push_back(r);
  }
  j["max_ratio"] = rep.iterations.size() >= 2 ? json(max_ratio) : json(nullptr);
  return j;
}

json conditions_json(const ConditionReport& c) {
  return {{"f_dual_bound", c.f_dual},
          {"contraction_lhs1", c.lhs1},
          {"contraction_lhs2", c.lhs2},
          {"contraction_1_satisfied", c.contraction_1},
          {"contraction_2_satisfied", c.contraction_2},
          {"be_re_bound", finite_or_null(c.be_re_bound)},
          {"be_small_re_satisfied", c.be_small_re}};
}

json constants_json(const DiagnosticConstants& c) {
  json j = {{"c1", c.c1},
            {"c1_sampled_l6_ratio", c.c1_sampled},
            {"c2", c.c2},
            {"c2_full_h1", c.c2_full_h1},
            {"c2_trials", c.c2_trials},
            {"poincare_box_h1", c.poincare_box},
            {"poincare_div", optional_number(c.poincare_div)}};
  if (!c.poincare_div_note.empty()) j["poincare_div_note"] = c.poincare_div_note;
  return j;
}

json mesh_json(const Mesh& m, const MhdSpaces& sp) {
  return {{"vertices", m.num_vertices()},
          {"edges", m.num_edges()},
          {"faces", m.num_faces()},
          {"tets", m.num_tets()},
          {"h", m.h},
          {"free_dofs",
           {{"velocity", sp.velocity.num_free()},
            {"pressure", sp.pressure.num_free()},
            {"nedelec", sp.ned.num_free()},
            {"raviart_thomas", sp.rt.num_free()},
            {"dg0", sp.dg0.num_free()}}}};
}

Field force_field(const RunConfig& cfg) {
  if (cfg.force_kind == "constant") {
    const Vec3 c = cfg.force_constant;
    return analytic_vector([c](const Vec3&) { return c; });
  }
  const Box box = cfg.box;
  const auto modes = cfg.force_modes;
  const double scale = cfg.force_scale;
  return analytic_vector([box, modes, scale](const Vec3& x) -> Vec3 {
    const Vec3 s = (x - box.lo).cwiseQuotient(box.extent());
    Vec3 v = Vec3::Zero();
    for (const auto& m : modes)
      v += m.amplitude * std::sin(m.k[0] * kPi * s.x()) * std::sin(m.k[1] * kPi * s.y()) * std::sin(m.k[2] * kPi * s.z());
    return scale * v;
  });
}

MhdParams config_params(const RunConfig& cfg) {
  MhdParams p;
  p.re = cfg.re;
  p.rm = cfg.rm;
  p.s = cfg.s;
  if (cfg.force_kind != "zero") p.force = force_field(cfg);
  return p;
}

std::vector<CellField> cell_fields(const MhdSpaces& sp, Formulation f, const Vector& u, const Vector& cur,
                                   const Vector& sigma, const Vector& b, const Vector& p, const Vector& r) {
  const Mesh& m = *sp.mesh;
  const Index nt = m.num_tets();
  CellField fu{"velocity", 3, {}}, fb{"B", 3, {}}, fj{f == Formulation::BJ ? "j" : "E", 3, {}}, fs{"sigma", 3, {}},
      fp{"pressure", 1, {}}, fr{"r", 1, {}}, fd{"div_B", 1, {}};
  const Vector div = cell_divergence(m, b);
  LocalBasis basis;
  std::vector<Index> dofs;
  const Bary centroid{0.25, 0.25, 0.25, 0.25};
  auto push3 = [](CellField& c, const Vec3& v) { c.values.insert(c.values.end(), {v.x(), v.y(), v.z()}); };
  for (Index t = 0; t < nt; ++t) {
    const TetGeometry g = tet_geometry(m, t);
    sp.velocity.eval_basis(g, t, centroid, basis);
    push3(fu, evaluate(sp.velocity, u, t, basis, dofs));
    sp.rt.eval_basis(g, t, centroid, basis);
    push3(fb, evaluate(sp.rt, b, t, basis, dofs));
    sp.ned.eval_basis(g, t, centroid, basis);
    push3(fj, evaluate(sp.ned, cur, t, basis, dofs));
    if (f == Formulation::BJ) push3(fs, evaluate(sp.ned, sigma, t, basis, dofs));
    sp.pressure.eval_basis(g, t, centroid, basis);
    fp.values.push_back(evaluate(sp.pressure, p, t, basis, dofs)[0]);
    fr.values.push_back(r[t]);
    fd.values.push_back(div[t]);
  }
  std::vector<CellField> out{fu, fb, fj};
  if (f == Formulation::BJ) out.push_back(fs);
  out.insert(out.end(), {fp, fr, fd});
  return out;
}

// Writes every file or none: contents are prepared first, then each file goes
// through a temporary and a rename.
void write_files(const std::vector<std::pair<std::string, std::string>>& files) {
  std::vector<std::string> temps;
  try {
    for (const auto& [path, content] : files) {
      if (path.empty()) continue;
      const std::string tmp = path + ".tmp";
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + path);
      out << content;
      out.close();
      if (!out) throw std::runtime_error("cannot write " + path);
      temps.push_back(tmp);
    }
  } catch (...) {
    for (const auto& t : temps) std::filesystem::remove(t);
    throw;
  }
  for (const auto& [path, content] : files)
    if (!path.empty()) std::filesystem::rename(path + ".tmp", path);
}

struct SolveOutcome {
  PicardReport report;
  DiagnosticConstants constants;
  std::optional<LevelErrors> errors;
  std::string vtk, matrix_market;
  bool has_state = false;
  json final_norms, mesh;
};

// One nonlinear solve on the config's mesh. For BJ the state carries j and
// sigma; for BE, E goes in `cur`.
SolveOutcome solve_once(const RunConfig& cfg, bool want_files) {
  auto mesh = std::make_shared<const Mesh>(build_box_mesh(cfg.n[0], cfg.n[1], cfg.n[2], cfg.box));
  const MhdSpaces sp(mesh);
  SolveOutcome out;
  out.mesh = mesh_json(*mesh, sp);
  out.constants = estimate_constants(sp, cfg.seed, cfg.c2_trials, cfg.poincare);
  std::optional<ManufacturedCase> mc;
  MhdParams params;
  if (!cfg.manufactured.empty()) {
    mc = make_manufactured(cfg, sp);
    params = mc->params;
  } else {
    params = config_params(cfg);
  }
  const MhdProblem pb(sp, params);
  Vector b0 = Vector::Zero(sp.rt.num_dofs());
  if (cfg.initial_kind == "solenoidal") {
    ProbeFactory probes(derived_seed(cfg.seed, 1));
    b0 = cfg.initial_scale * probes.solenoidal(sp.ops);
  }

  Vector u, cur, sigma, b, p, r;
  std::string mm;
  if (cfg.formulation == Formulation::BJ) {
    MhdStateBJ init = MhdStateBJ::zero(sp);
    init.b = b0;
    init.j = sp.ops.weak_curl(b0) / cfg.rm;
    auto [st, rep] = solve_nonlinear(pb, init, cfg.picard, out.constants);
    out.report = std::move(rep);
    if (want_files && !cfg.matrix_market_path.empty()) {
      std::ostringstream os;
      write_matrix_market(os, apply_essential_bc(bj_system(pb, st)).global_matrix());
      mm = os.str();
    }
    u = st.u, cur = st.j, sigma = st.sigma, b = st.b, p = st.p, r = st.r;
  } else {
    MhdStateBE init = MhdStateBE::zero(sp);
    init.b = b0;
    auto [st, rep] = solve_nonlinear(pb, init, cfg.picard, out.constants);
    out.report = std::move(rep);
    if (want_files && !cfg.matrix_market_path.empty()) {
      std::ostringstream os;
      write_matrix_market(os, apply_essential_bc(be_system(pb, st)).global_matrix());
      mm = os.str();
    }
    u = st.u, cur = st.e, sigma = Vector::Zero(sp.ned.num_dofs()), b = st.b, p = st.p, r = st.r;
  }
  out.has_state = true;
  out.matrix_market = mm;
  if (mc) out.errors = manufactured_errors(*mc, sp, u, b, p);
  out.final_norms = {{"u_h1", h1_norm(sp.velocity, u)},
                     {"b_d", sp.ops.norm_d(b)},
                     {"p_l2", l2_norm(sp.pressure, p)},
                     {"r_l2", l2_norm(sp.dg0, r)},
                     {"norm_A", norm_A(sp.ops, sp.velocity, u, b, sp.pressure, p, r)}};
  if (want_files && !cfg.vtk_path.empty()) {
    std::ostringstream os;
    write_vtk(os, *mesh, cell_fields(sp, cfg.formulation, u, cur, sigma, b, p, r));
    out.vtk = os.str();
  }
  return out;
}

json errors_json(const LevelErrors& e) {
  return {{"u_h1", e.u_h1}, {"b_l2", e.b_l2}, {"b_d", e.b_d}, {"p_l2", e.p_l2}};
}

}  // namespace

RunResult run_solve(const RunConfig& cfg) {
  check_resolution(cfg.n);
  RunResult res;
  json rep;
  rep["command"] = "solve";
  rep["config"] = cfg.to_json();
  try {
    SolveOutcome o = solve_once(cfg, true);
    CheckSummary summary;
    rep["mesh"] = o.mesh;
    rep["constants"] = constants_json(o.constants);
    rep["conditions"] = conditions_json(o.report.conditions);
    rep["picard"] = picard_json(o.report, summary);
    rep["warnings"] = o.report.warnings;
    rep["final"] = o.final_norms;
    if (o.errors) rep["errors"] = errors_json(*o.errors);
    const bool small = o.report.conditions.contraction();
    json contraction = {{"conditions_satisfied", small}};
    if (small && o.report.iterations.size() >= 2) {
      contraction["gate"] = Tolerances::contraction;
      summary.add(contraction, "pass", rep["picard"]["max_ratio"].get<double>() <= Tolerances::contraction);
    }
    rep["contraction"] = contraction;
    rep["all_checks_pass"] = summary.all;
    res.exit_code = o.report.converged() ? 0 : 1;
    res.message = "Picard " + o.report.termination + " after " + std::to_string(o.report.iterations.size()) +
                  " iterations";
    res.report = rep;
    write_files({{cfg.report_path, dump_json(rep)}, {cfg.vtk_path, o.vtk}, {cfg.matrix_market_path, o.matrix_market}});
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    rep["error"] = e.what();
    res.exit_code = 1;
    res.message = e.what();
    res.report = rep;
    write_files({{cfg.report_path, dump_json(rep)}});
  }
  return res;
}

RunResult run_study(const RunConfig& cfg) {
  if (cfg.manufactured.empty()) throw ConfigError("study needs a manufactured case");
  if (cfg.levels.size() < 2) throw ConfigError("study needs at least 2 levels");
  for (int n : cfg.levels) check_resolution({n, n, n});
  RunResult res;
  json rep;
  rep["command"] = "study";
  rep["config"] = cfg.to_json();
  rep["levels"] = json::array();

  std::ostringstream csv;
  csv << "n,h,iterations,status,err_u_h1,err_b_l2,err_b_d,err_p_l2,rate_u_h1,rate_b_l2,rate_b_d,rate_p_l2\n";
  std::optional<LevelErrors> prev;
  double prev_h = 0.0;
  bool partial = false;
  std::string abort_reason;
  char buf[512];
  for (int n : cfg.levels) {
    RunConfig lc = cfg;
    lc.n = {n, n, n};
    std::optional<SolveOutcome> o;
    try {
      o = solve_once(lc, false);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      partial = true;
      abort_reason = "level " + std::to_string(n) + ": " + e.what();
      break;
    }
    const double h = build_box_mesh(n, n, n, cfg.box).h;  // cheap relative to the solve
    const LevelErrors& e = *o->errors;
    const bool ok = o->report.converged();
    json lv = {{"n", n}, {"h", h}, {"iterations", o->report.iterations.size()}, {"termination", o->report.termination},
               {"errors", errors_json(e)}};
    auto rate = [&](double now, double before) {
      return std::log(before / now) / std::log(prev_h / h);
    };
    std::string rates = ",,,";
    if (prev) {
      const double ru = rate(e.u_h1, prev->u_h1), rb = rate(e.b_l2, prev->b_l2), rd = rate(e.b_d, prev->b_d),
                   rp = rate(e.p_l2, prev->p_l2);
      lv["rates"] = {{"u_h1", finite_or_null(ru)}, {"b_l2", finite_or_null(rb)}, {"b_d", finite_or_null(rd)},
                     {"p_l2", finite_or_null(rp)}};
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f", ru, rb, rd, rp);
      rates = buf;
    }
    std::snprintf(buf, sizeof buf, "%d,%.10e,%zu,%s,%.10e,%.10e,%.10e,%.10e,", n, h, o->report.iterations.size(),
                  ok ? "converged" : "not-converged", e.u_h1, e.b_l2, e.b_d, e.p_l2);
    csv << buf << rates << "\n";
    rep["levels"].push_back(lv);
    if (!ok) {
      partial = true;
      abort_reason = "Picard did not converge at level " + std::to_string(n);
      break;
    }
    prev = e;
    prev_h = h;
  }
  if (partial) csv << "# partial: " << abort_reason << "\n";
  rep["partial"] = partial;
  if (partial) rep["abort_reason"] = abort_reason;
  if (!partial && rep["levels"].size() >= 2) rep["finest_pair_rates"] = rep["levels"].back()["rates"];
  res.csv = csv.str();
  res.report = rep;
  res.exit_code = partial ? 1 : 0;
  res.message = partial ? "study aborted: " + abort_reason : "study completed";
  write_files({{cfg.csv_path, res.csv}, {cfg.report_path, dump_json(rep)}});
  return res;
}

RunResult run_diagnose(const RunConfig& cfg) {
  RunResult res;
  json rep;
  rep["command"] = "diagnose";
  rep["config"] = cfg.to_json();
  CheckSummary summary;
  auto mesh = std::make_shared<const Mesh>(build_box_mesh(cfg.n[0], cfg.n[1], cfg.n[2], cfg.box));
  {
    const SparseMatrix g = grad_incidence(*mesh), c = curl_incidence(*mesh), d = div_incidence(*mesh);
    json cx = {{"div_curl_max_abs", multiply(d, c).max_abs()}, {"curl_grad_max_abs", multiply(c, g).max_abs()}};
    summary.add(cx, "pass", cx["div_curl_max_abs"].get<double>() == 0.0 && cx["curl_grad_max_abs"].get<double>() == 0.0);
    rep["complex"] = cx;
    const ExactnessCount n = exactness_count(mesh);
    json ex = {{"grad", n.grad}, {"curl", n.curl}, {"div", n.div}, {"l2", n.l2}, {"alternating_sum", n.alternating_sum()}};
    summary.add(ex, "pass", n.alternating_sum() == 0);
    rep["exactness"] = ex;
    // Polynomial probes: F = (y^2, z x, x y z), C = (x^2, y z, x y).
    const CommutingDefects cd = check_commuting(
        *mesh, [](const Vec3& x) { return Vec3(x.y() * x.y(), x.z() * x.x(), x.x() * x.y() * x.z()); },
        [](const Vec3& x) { return Vec3(x.x() * x.z() - x.x(), -x.y() * x.z(), x.z() - 2 * x.y()); },
        [](const Vec3& x) { return Vec3(x.x() * x.x(), x.y() * x.z(), x.x() * x.y()); },
        [](const Vec3& x) { return 2 * x.x() + x.z(); });
    json cm = {{"curl_defect", cd.curl_defect}, {"curl_scale", cd.curl_scale}, {"div_defect", cd.div_defect},
               {"div_scale", cd.div_scale}};
    summary.add(cm, "pass", cd.curl_defect <= 1e-12 * std::max(1.0, cd.curl_scale) &&
                                cd.div_defect <= 1e-12 * std::max(1.0, cd.div_scale));
    rep["commuting"] = cm;
  }
  if (const std::string why = resolution_problem(cfg.n); !why.empty()) {
    rep["picard_skipped"] = why;
    const DiscreteOps ops(mesh);
    rep["constants"] = {{"poincare_div", cfg.poincare ? json(estimate_poincare_constant(ops)) : json(nullptr)}};
    rep["all_checks_pass"] = summary.all;
    res.report = rep;
    res.message = "diagnose: Picard run skipped, " + why;
    write_files({{cfg.report_path, dump_json(rep)}});
    return res;
  }
  try {
    SolveOutcome o = solve_once(cfg, false);
    rep["constants"] = constants_json(o.constants);
    rep["conditions"] = conditions_json(o.report.conditions);
    rep["picard"] = picard_json(o.report, summary);
    rep["warnings"] = o.report.warnings;
    res.exit_code = o.report.converged() ? 0 : 1;
    res.message = std::string("diagnose: ") + (summary.all ? "all checks pass" : "some checks fail");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    rep["error"] = e.what();
    res.exit_code = 1;
    res.message = e.what();
    summary.all = false;
  }
  rep["all_checks_pass"] = summary.all;
  res.report = rep;
  write_files({{cfg.report_path, dump_json(rep)}});
  return res;
}

}  // namespace smhd
