#include "gapflow/io.hpp"

#include "gapflow/coefficients.hpp"
#include "gapflow/errors.hpp"
#include "gapflow/verify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gapflow {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> w;
  for (std::string t; is >> t;) w.push_back(t);
  return w;
}

std::string num(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

bool to_double(const std::string& s, double& v) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && p == end;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

struct Reader {
  int line;
  std::string key, value;

  [[noreturn]] void fail(const std::string& what) const { throw SchemaError(line, key, what); }

  double number() const {
    double v;
    if (!to_double(value, v)) fail("'" + value + "' is not a number");
    return v;
  }
  int integer() const {
    int v;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || p != value.data() + value.size()) fail("'" + value + "' is not an integer");
    return v;
  }
  static bool boolean(const std::string& w, bool& b) {
    if (w == "true" || w == "1" || w == "yes" || w == "on") b = true;
    else if (w == "false" || w == "0" || w == "no" || w == "off") b = false;
    else return false;
    return true;
  }
  std::vector<double> numbers(size_t count) const {
    const auto w = words(value);
    if (count && w.size() != count) fail("expected " + std::to_string(count) + " numbers");
    std::vector<double> out;
    for (const auto& t : w) {
      double v;
      if (!to_double(t, v)) fail("'" + t + "' is not a number");
      out.push_back(v);
    }
    return out;
  }
};

int line_of(const ProblemConfig& c, const std::string& key) {
  auto it = c.lines.find(key);
  return it == c.lines.end() ? 0 : it->second;
}

void require_name(const ProblemConfig& c, const std::string& key, const std::string& value,
                  const std::vector<std::string>& registry) {
  if (contains(registry, value)) return;
  std::string known;
  for (const auto& r : registry) known += (known.empty() ? "" : ", ") + r;
  throw UnknownRegistryName("unknown " + key + " '" + value + "' (line " + std::to_string(line_of(c, key)) +
                            "); known: " + known);
}

const std::vector<std::string> kBcNames = {"slip", "traction"};
const std::vector<std::string> kForcingNames = {"none", "uniform"};
const std::vector<std::string> kFormats = {"csv", "vtk"};

std::map<std::string, double> gap_parameters(const ProblemConfig& c) {
  auto p = c.gap_params;
  p[c.gap == "linear-slider" ? "ha" : "value"] = c.h0;
  return p;
}

}  // namespace

ProblemConfig parse_config(const std::string& text) {
  ProblemConfig c;
  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw SchemaError(lineno, line, "expected 'key = value'");
    Reader r{lineno, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    const std::string& k = r.key;
    if (k.empty()) r.fail("missing key");
    if (r.value.empty()) r.fail("missing value");
    if (c.lines.count(k)) r.fail("duplicate key (first on line " + std::to_string(c.lines[k]) + ")");
    c.lines[k] = lineno;

    if (k == "chart") c.chart = r.value;
    else if (k.rfind("chart.", 0) == 0 && k.size() > 6) c.chart_params[k.substr(6)] = r.number();
    else if (k == "spline_file") c.spline_file = r.value;
    else if (k == "domain") {
      const auto v = r.numbers(4);
      c.domain.lo[0] = v[0];
      c.domain.hi[0] = v[1];
      c.domain.lo[1] = v[2];
      c.domain.hi[1] = v[3];
    } else if (k == "grid") {
      const auto x = r.value.find('x');
      if (x == std::string::npos) r.fail("expected N1xN2");
      Reader a{lineno, k, trim(r.value.substr(0, x))}, b{lineno, k, trim(r.value.substr(x + 1))};
      c.n[0] = a.integer();
      c.n[1] = b.integer();
    } else if (k == "periodic") {
      const auto w = words(r.value);
      if (w.size() != 2 || !Reader::boolean(w[0], c.periodic[0]) || !Reader::boolean(w[1], c.periodic[1]))
        r.fail("expected two booleans");
    } else if (k == "gap") c.gap = r.value;
    else if (k == "h0") c.h0 = r.number();
    else if (k == "gap.value" || k == "gap.ha") r.fail("the base gap is set with h0");
    else if (k.rfind("gap.", 0) == 0 && k.size() > 4) c.gap_params[k.substr(4)] = r.number();
    else if (k == "gap_floor") c.gap_floor = r.number();
    else if (k == "eps") c.eps = r.number();
    else if (k == "rho0") c.rho0 = r.number();
    else if (k == "nu") c.nu = r.number();
    else if (k == "bc") c.bc = r.value;
    else if (k == "V" || k == "W" || k == "force") {
      const auto v = r.numbers(2);
      double* dst = k == "V" ? c.V : k == "W" ? c.W : c.force;
      dst[0] = v[0];
      dst[1] = v[1];
    } else if (k == "pi0") c.pi0 = r.number();
    else if (k == "pi1") c.pi1 = r.number();
    else if (k == "CR1") c.CR1 = r.number();
    else if (k == "s0") c.s0 = r.number();
    else if (k == "forcing") c.forcing = r.value;
    else if (k == "p_boundary") c.p_boundary = r.number();
    else if (k == "t0") c.t0 = r.number();
    else if (k == "t_end") c.t_end = r.number();
    else if (k == "dt") c.dt = r.number();
    else if (k == "dt_per_eps") c.dt_per_eps = r.number();
    else if (k == "tol") c.tol = r.number();
    else if (k == "max_iters") c.max_iters = r.integer();
    else if (k == "stabilize") {
      if (!Reader::boolean(r.value, c.stabilize)) r.fail("expected a boolean");
    } else if (k == "output") c.output = words(r.value);
    else if (k == "scenario") c.scenario = r.value;
    else if (k == "sweep_eps") c.sweep_eps = r.numbers(0);
    else r.fail("unknown key");
  }
  validate_config(c);
  return c;
}

void validate_config(const ProblemConfig& c) {
  auto fail = [&](const std::string& key, const std::string& what) { throw SchemaError(line_of(c, key), key, what); };
  require_name(c, "chart", c.chart, chart_names());
  require_name(c, "gap", c.gap, gap_families());
  require_name(c, "bc", c.bc, kBcNames);
  require_name(c, "forcing", c.forcing, kForcingNames);
  require_name(c, "scenario", c.scenario, scenario_names());
  for (const auto& f : c.output) require_name(c, "output", f, kFormats);
  if (c.chart == "user-spline" && c.spline_file.empty()) fail("spline_file", "user-spline needs a spline_file");
  if (!(c.domain.hi[0] > c.domain.lo[0] && c.domain.hi[1] > c.domain.lo[1])) fail("domain", "empty domain");
  if (c.n[0] < 4 || c.n[1] < 4) fail("grid", "grid must be at least 4x4");
  if (!(c.h0 > 0.0)) fail("h0", "h0 must be positive");
  if (!(c.gap_floor > 0.0)) fail("gap_floor", "gap_floor must be positive");
  if (!(c.eps > 0.0)) fail("eps", "eps must be positive");
  if (!(c.rho0 > 0.0)) fail("rho0", "rho0 must be positive");
  if (!(c.nu > 0.0)) fail("nu", "nu must be positive");
  if (!(c.t_end >= c.t0)) fail("t_end", "t_end must not precede t0");
  if (!(c.dt >= 0.0)) fail("dt", "dt must not be negative");
  if (!(c.dt_per_eps > 0.0)) fail("dt_per_eps", "dt_per_eps must be positive");
  if (!(c.tol > 0.0)) fail("tol", "tol must be positive");
  if (c.max_iters < 0) fail("max_iters", "max_iters must not be negative");
  if (c.bc == "traction" && !(c.periodic[0] && c.periodic[1]))
    fail("periodic", "traction runs need periodic axes (no lateral traces are available)");
  if (c.sweep_eps.empty()) fail("sweep_eps", "empty list");
  for (size_t k = 0; k < c.sweep_eps.size(); ++k) {
    if (!(c.sweep_eps[k] > 0.0 && c.sweep_eps[k] <= 0.2)) fail("sweep_eps", "values must lie in (0, 0.2]");
    if (k && !(c.sweep_eps[k] < c.sweep_eps[k - 1])) fail("sweep_eps", "values must decrease strictly");
  }
}

ProblemConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string echo_config(const ProblemConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "chart = " << c.chart << '\n';
  for (const auto& [k, v] : c.chart_params) o << "chart." << k << " = " << num(v) << '\n';
  if (!c.spline_file.empty()) o << "spline_file = " << c.spline_file << '\n';
  o << "domain = " << num(c.domain.lo[0]) << ' ' << num(c.domain.hi[0]) << ' ' << num(c.domain.lo[1]) << ' '
    << num(c.domain.hi[1]) << '\n';
  o << "grid = " << c.n[0] << 'x' << c.n[1] << '\n';
  o << "periodic = " << b(c.periodic[0]) << ' ' << b(c.periodic[1]) << '\n';
  o << "gap = " << c.gap << '\n';
  o << "h0 = " << num(c.h0) << '\n';
  for (const auto& [k, v] : c.gap_params) o << "gap." << k << " = " << num(v) << '\n';
  o << "gap_floor = " << num(c.gap_floor) << '\n';
  o << "eps = " << num(c.eps) << '\n';
  o << "rho0 = " << num(c.rho0) << '\n';
  o << "nu = " << num(c.nu) << '\n';
  o << "bc = " << c.bc << '\n';
  o << "V = " << num(c.V[0]) << ' ' << num(c.V[1]) << '\n';
  o << "W = " << num(c.W[0]) << ' ' << num(c.W[1]) << '\n';
  o << "pi0 = " << num(c.pi0) << '\n';
  o << "pi1 = " << num(c.pi1) << '\n';
  o << "CR1 = " << num(c.CR1) << '\n';
  o << "s0 = " << num(c.s0) << '\n';
  o << "forcing = " << c.forcing << '\n';
  o << "force = " << num(c.force[0]) << ' ' << num(c.force[1]) << '\n';
  o << "p_boundary = " << num(c.p_boundary) << '\n';
  o << "t0 = " << num(c.t0) << '\n';
  o << "t_end = " << num(c.t_end) << '\n';
  o << "dt = " << num(c.dt) << '\n';
  o << "dt_per_eps = " << num(c.dt_per_eps) << '\n';
  o << "tol = " << num(c.tol) << '\n';
  o << "max_iters = " << c.max_iters << '\n';
  o << "stabilize = " << b(c.stabilize) << '\n';
  o << "output =";
  for (const auto& f : c.output) o << ' ' << f;
  o << '\n';
  o << "scenario = " << c.scenario << '\n';
  o << "sweep_eps =";
  for (double e : c.sweep_eps) o << ' ' << num(e);
  o << '\n';
  return o.str();
}

LimitProblem build_limit_problem(const ProblemConfig& c) {
  LimitProblem lp;
  lp.chart = make_chart(c.chart, c.chart_params, c.domain, c.spline_file);
  lp.gap = GapField(c.gap, gap_parameters(c), c.eps, c.gap_floor, c.domain.lo[0], c.domain.hi[0]);
  lp.fluid.rho0 = c.rho0;
  lp.fluid.nu = c.nu;
  lp.grid.n[0] = c.n[0];
  lp.grid.n[1] = c.n[1];
  lp.grid.D = c.domain;
  lp.grid.periodic[0] = c.periodic[0];
  lp.grid.periodic[1] = c.periodic[1];
  const double V0 = c.V[0], V1 = c.V[1], W0 = c.W[0], W1 = c.W[1];
  lp.pred.velocity = [=](double, double, double, double V[2], double W[2]) {
    V[0] = V0;
    V[1] = V1;
    W[0] = W0;
    W[1] = W1;
  };
  const double pi0 = c.pi0, pi1 = c.pi1, pb = c.p_boundary;
  lp.pred.pi0 = [pi0](double, double, double) { return pi0; };
  lp.pred.pi1 = [pi1](double, double, double) { return pi1; };
  lp.pred.CR1 = c.CR1;
  lp.pred.s0 = c.s0;
  lp.p_boundary = [pb](double, double, double) { return pb; };
  if (c.forcing == "uniform") {
    const double f0 = c.force[0], f1 = c.force[1];
    lp.body = [f0, f1](double, double, double, double f[2]) {
      f[0] = f0;
      f[1] = f1;
    };
  }
  return lp;
}

Problem build_problem(const ProblemConfig& c) {
  const LimitProblem lp = build_limit_problem(c);
  Problem pb;
  pb.chart = lp.chart;
  pb.gap = lp.gap;
  pb.fluid = lp.fluid;
  pb.grid = lp.grid;
  pb.opts.tol = c.tol;
  pb.opts.max_iters = c.max_iters;
  pb.opts.stabilize = c.stabilize;
  if (c.bc == "slip") {
    SlipData sd;
    sd.velocity = lp.pred.velocity;
    pb.bc.surface = sd;
    // Dirichlet sides take the lubrication profile at t0.
    if (!c.periodic[0] || !c.periodic[1]) pb.bc.trace = lubrication_traces(lp, solve_reynolds(lp, c.t0), c.eps);
  } else {
    TractionData td;
    td.pi0 = lp.pred.pi0;
    td.pi1 = lp.pred.pi1;
    td.CR1 = c.CR1;
    td.s0 = c.s0;
    pb.bc.surface = td;
  }
  if (c.forcing == "uniform") {
    const double f0 = c.force[0], f1 = c.force[1];
    pb.forcing.moment = [f0, f1](int i, int n, double, double, double) {
      if (n != 0) return 0.0;
      return i == 0 ? f0 : i == 1 ? f1 : 0.0;
    };
  }
  return pb;
}

void FieldSnapshot::add(const std::string& name, std::vector<double> values) {
  names.push_back(name);
  fields.push_back(std::move(values));
}

const std::vector<double>& FieldSnapshot::field(const std::string& name) const {
  for (size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return fields[k];
  throw std::out_of_range("no field '" + name + "' in snapshot");
}

namespace {

FieldSnapshot blank(const Grid& g, double t, double eps, const std::string& model) {
  FieldSnapshot s;
  s.grid = g;
  s.t = t;
  s.meta["model"] = model;
  s.meta["eps"] = num(eps);
  return s;
}

std::string moment_name(const char* base, int n, int i) {
  return std::string(base) + std::to_string(n) + "_" + std::to_string(i + 1);
}

}  // namespace

FieldSnapshot snapshot_of(const ModelState& s, double eps) {
  FieldSnapshot f = blank(s.grid, s.t, eps, "newmodel");
  for (int n = 0; n < kMom; ++n)
    for (int i = 0; i < 2; ++i) f.add(moment_name("u", n, i), s.u[n][i]);
  for (int n = 0; n < kMom; ++n) f.add("u" + std::to_string(n) + "_3", s.u3[n]);
  for (int n = 0; n < kMom; ++n) f.add("p" + std::to_string(n), s.p[n]);
  return f;
}

FieldSnapshot snapshot_of(const Lubrication& s, double eps) {
  FieldSnapshot f = blank(s.grid, s.t, eps, "reynolds");
  std::vector<double> p0(s.p);
  for (double& v : p0) v /= eps * eps;
  f.add("p0", std::move(p0));
  f.add("p_lub", s.p);
  f.add("u0_3", s.u3);
  return f;
}

FieldSnapshot snapshot_of(const ThinFilm& s, double eps) {
  FieldSnapshot f = blank(s.grid, s.t, eps, "thinfilm");
  f.add("u0_1", s.V[0]);
  f.add("u0_2", s.V[1]);
  f.add("p0", s.p00);
  f.add("h_residual", s.h_residual);
  return f;
}

void write_snapshot_csv(const FieldSnapshot& s, std::ostream& os) {
  const int N = s.grid.size();
  for (size_t k = 0; k < s.names.size(); ++k) {
    if (static_cast<int>(s.fields[k].size()) != N)
      throw IoError("field '" + s.names[k] + "' does not match the grid size");
    for (int q = 0; q < N; ++q)
      if (!std::isfinite(s.fields[k][q]))
        throw IoError("field '" + s.names[k] + "' has a non-finite value at node " + std::to_string(q));
  }
  auto meta = s.meta;
  const Grid& g = s.grid;
  meta["t"] = num(s.t);
  meta["grid"] = std::to_string(g.n[0]) + "x" + std::to_string(g.n[1]);
  meta["periodic"] = std::string(g.periodic[0] ? "1" : "0") + (g.periodic[1] ? "1" : "0");
  meta["domain"] = num(g.D.lo[0]) + " " + num(g.D.hi[0]) + " " + num(g.D.lo[1]) + " " + num(g.D.hi[1]);
  for (const auto& [k, v] : meta) os << "# " << k << '=' << v << '\n';
  os << "xi1,xi2";
  for (const auto& n : s.names) os << ',' << n;
  os << '\n';
  for (int q = 0; q < N; ++q) {
    os << num(g.coord(0, g.ix(q))) << ',' << num(g.coord(1, g.jx(q)));
    for (const auto& f : s.fields) os << ',' << num(f[q]);
    os << '\n';
  }
  if (!os) throw IoError("failed to write snapshot");
}

FieldSnapshot read_snapshot_csv(std::istream& is) {
  FieldSnapshot s;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.rfind("# ", 0) != 0) break;
    const auto eq = line.find('=');
    if (eq != std::string::npos) s.meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
  }
  std::vector<std::string> cols;
  {
    std::stringstream hs(line);
    for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
  }
  if (cols.size() < 2 || cols[0] != "xi1" || cols[1] != "xi2") throw IoError("snapshot header must start xi1,xi2");
  s.names.assign(cols.begin() + 2, cols.end());
  s.fields.assign(s.names.size(), {});
  std::vector<double> x1, x2;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream rs(line);
    std::vector<double> row;
    for (std::string c; std::getline(rs, c, ',');) {
      double v;
      if (!to_double(c, v)) throw IoError("bad number '" + c + "' on line " + std::to_string(lineno));
      row.push_back(v);
    }
    if (row.size() != cols.size()) throw IoError("column count mismatch on line " + std::to_string(lineno));
    x1.push_back(row[0]);
    x2.push_back(row[1]);
    for (size_t k = 0; k < s.names.size(); ++k) s.fields[k].push_back(row[k + 2]);
  }
  if (auto it = s.meta.find("grid"); it != s.meta.end()) std::sscanf(it->second.c_str(), "%dx%d", &s.grid.n[0], &s.grid.n[1]);
  if (auto it = s.meta.find("periodic"); it != s.meta.end() && it->second.size() == 2) {
    s.grid.periodic[0] = it->second[0] == '1';
    s.grid.periodic[1] = it->second[1] == '1';
  }
  if (auto it = s.meta.find("domain"); it != s.meta.end()) {
    const auto w = words(it->second);
    if (w.size() == 4) {
      to_double(w[0], s.grid.D.lo[0]);
      to_double(w[1], s.grid.D.hi[0]);
      to_double(w[2], s.grid.D.lo[1]);
      to_double(w[3], s.grid.D.hi[1]);
    }
  }
  if (auto it = s.meta.find("t"); it != s.meta.end()) to_double(it->second, s.t);
  if (static_cast<int>(x1.size()) != s.grid.size()) throw IoError("row count does not match the grid in the metadata");
  return s;
}

void write_snapshot_vtk(const FieldSnapshot& s, std::ostream& os, const SurfaceChart* chart) {
  const Grid& g = s.grid;
  const int N = g.size();
  for (size_t k = 0; k < s.names.size(); ++k)
    for (double v : s.fields[k])
      if (!std::isfinite(v)) throw IoError("field '" + s.names[k] + "' has a non-finite value");
  os << "# vtk DataFile Version 3.0\n";
  os << "gapflow " << (s.meta.count("model") ? s.meta.at("model") : "fields") << " t=" << num(s.t) << '\n';
  os << "ASCII\nDATASET STRUCTURED_GRID\n";
  os << "DIMENSIONS " << g.nodes(0) << ' ' << g.nodes(1) << " 1\n";
  os << "POINTS " << N << " double\n";
  for (int q = 0; q < N; ++q) {
    const double x = g.coord(0, g.ix(q)), y = g.coord(1, g.jx(q));
    if (chart) {
      const Vec3 X = chart->evaluate(x, y, s.t).X;
      os << num(X[0]) << ' ' << num(X[1]) << ' ' << num(X[2]) << '\n';
    } else {
      os << num(x) << ' ' << num(y) << " 0\n";
    }
  }
  os << "POINT_DATA " << N << '\n';
  for (size_t k = 0; k < s.names.size(); ++k) {
    os << "SCALARS " << s.names[k] << " double 1\nLOOKUP_TABLE default\n";
    for (double v : s.fields[k]) os << num(v) << '\n';
  }
  if (!os) throw IoError("failed to write VTK snapshot");
}

void export_snapshot(const FieldSnapshot& s, const std::string& format, const std::string& path,
                     const SurfaceChart* chart) {
  if (format != "csv" && format != "vtk") throw UnknownRegistryName("unknown snapshot format '" + format + "'");
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  if (format == "csv") write_snapshot_csv(s, f);
  else write_snapshot_vtk(s, f, chart);
  f.close();
  if (!f) throw IoError("failed to write '" + path + "'");
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const UnknownRegistryName*>(&e) ||
      dynamic_cast<const InsufficientPoints*>(&e) || dynamic_cast<const IncompatibleTargets*>(&e) ||
      dynamic_cast<const std::invalid_argument*>(&e))
    return kExitUsage;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kExitIo;
  return kExitSolver;
}

std::vector<std::string> command_names() {
  return {"solve-newmodel", "solve-reynolds", "solve-thinfilm", "verify-asymptotics", "coeffs-dump", "validate-chart"};
}

namespace {

std::string path_in(const RunOptions& o, const std::string& name) { return (std::filesystem::path(o.out_dir) / name).string(); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  f.close();
  if (!f) throw IoError("failed to write '" + path + "'");
}

void export_all(const ProblemConfig& cfg, const RunOptions& o, const FieldSnapshot& s, const std::string& stem,
                const SurfaceChart* chart, std::ostream& log) {
  for (const auto& fmt : cfg.output) {
    const std::string p = path_in(o, stem + "." + fmt);
    export_snapshot(s, fmt, p, chart);
    if (!o.quiet) log << "wrote " << p << '\n';
  }
}

int solve_newmodel(const ProblemConfig& cfg, const RunOptions& o, std::ostream& log) {
  NewModel m(build_problem(cfg));
  ModelState s = m.initial_state(cfg.t0);
  ModelState prev;
  double dt = 0.0;
  SolveStats total;
  auto record_failure = [&](const NonConvergence& e) {
    std::ostringstream f;
    f << "iteration,residual\n";
    for (size_t k = 0; k < e.history.size(); ++k) f << k << ',' << num(e.history[k]) << '\n';
    write_text(path_in(o, "failure.csv"), f.str());
  };
  try {
    if (cfg.transient()) {
      const int steps = std::max(1, static_cast<int>(std::lround((cfg.t_end - cfg.t0) / cfg.step())));
      dt = (cfg.t_end - cfg.t0) / steps;
      for (int k = 0; k < steps; ++k) {
        prev = s;
        const SolveStats st = m.step(s, dt);
        total.iterations += st.iterations;
        total.factorizations += st.factorizations;
        total.residual = st.residual;
      }
    } else {
      total = m.solve_steady(s);
    }
  } catch (const NonConvergence& e) {
    record_failure(e);
    throw;
  }
  export_all(cfg, o, snapshot_of(s, cfg.eps), "newmodel", m.problem().chart.get(), log);
  if (!o.quiet) {
    const Metrics r = residual_metrics(m, s, cfg.transient() ? &prev : nullptr, dt);
    const double mom = r.at("max_momentum_residual"), div = r.at("max_divergence_residual");
    log << "new model: " << total.iterations << " iterations, " << total.factorizations
        << " factorisations, residual " << num(total.residual) << "\n  max momentum residual " << num(mom)
        << ", max divergence residual " << num(div) << '\n';
  }
  return kExitOk;
}

int solve_reynolds_cmd(const ProblemConfig& cfg, const RunOptions& o, std::ostream& log) {
  const LimitProblem lp = build_limit_problem(cfg);
  const Lubrication sol = solve_reynolds(lp, cfg.t0);
  FieldSnapshot s = snapshot_of(sol, cfg.eps);
  std::vector<double> u[kMom][2];
  lubrication_moments(lp, sol, u);
  for (int n = 0; n < kMom; ++n)
    for (int i = 0; i < 2; ++i) s.add(moment_name("u", n, i), u[n][i]);
  export_all(cfg, o, s, "reynolds", lp.chart.get(), log);
  if (!o.quiet) log << "reynolds: max |p| " << num(field_norms(sol.p)[0]) << '\n';
  return kExitOk;
}

int solve_thinfilm_cmd(const ProblemConfig& cfg, const RunOptions& o, std::ostream& log) {
  const LimitProblem lp = build_limit_problem(cfg);
  ThinFilmSolver tf(lp);
  ThinFilm s = tf.initial(cfg.t0);
  int steps = 0;
  if (cfg.transient()) {
    steps = std::max(1, static_cast<int>(std::lround((cfg.t_end - cfg.t0) / cfg.step())));
    const double dt = (cfg.t_end - cfg.t0) / steps;
    for (int k = 0; k < steps; ++k) tf.step(s, dt);
  }
  export_all(cfg, o, snapshot_of(s, cfg.eps), "thinfilm", lp.chart.get(), log);
  if (!o.quiet) log << "thin film: " << steps << " steps to t = " << num(s.t) << '\n';
  return kExitOk;
}

int verify_cmd(const ProblemConfig& cfg, const RunOptions& o, std::ostream& log) {
  Scenario sc = scenario_by_name(cfg.scenario);
  sc.n[0] = cfg.n[0];
  sc.n[1] = cfg.n[1];
  const SweepReport r = run_epsilon_sweep(sc, cfg.sweep_eps, configured_threads());
  std::ostringstream rep, tim, sum;
  write_sweep_csv(r, rep);
  write_timing_csv(r, tim);
  write_sweep_summary(r, sum);
  bool ok = true;
  for (const auto& c : sweep_invariants(r, sc.kind)) {
    sum << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    ok = ok && c.pass;
  }
  write_text(path_in(o, "report.csv"), rep.str());
  write_text(path_in(o, "timing.csv"), tim.str());
  write_text(path_in(o, "summary.txt"), sum.str());
  if (!o.quiet) log << sum.str();
  for (const auto& p : r.points)
    if (!p.converged) return kExitSolver;
  return ok ? kExitOk : kExitCheckFailed;
}

int coeffs_cmd(const ProblemConfig& cfg, const RunOptions& o, std::ostream& log) {
  const LimitProblem lp = build_limit_problem(cfg);
  const auto tabs = table_over_grid(*lp.chart, lp.gap, lp.grid, cfg.t0);
  const auto all = coefficient_families();
  const auto families = o.families.empty() ? all : o.families;
  for (const auto& fam : families) {
    if (!contains(all, fam)) {
      std::string known;
      for (const auto& a : all) known += " " + a;
      throw UnknownRegistryName("unknown coefficient family '" + fam + "'; known:" + known);
    }
    std::ostringstream f;
    std::vector<std::string> labels;
    std::vector<double> values;
    const Grid& g = lp.grid;
    for (int q = 0; q < g.size(); ++q) {
      coefficient_values(tabs[q], fam, labels, values);
      if (q == 0) {
        f << "xi1,xi2";
        for (const auto& l : labels) f << ',' << l;
        f << '\n';
      }
      f << num(g.coord(0, g.ix(q))) << ',' << num(g.coord(1, g.jx(q)));
      for (double v : values) f << ',' << num(v);
      f << '\n';
    }
    const std::string p = path_in(o, "coeffs_" + fam + ".csv");
    write_text(p, f.str());
    if (!o.quiet) log << "wrote " << p << '\n';
  }
  return kExitOk;
}

int validate_chart_cmd(const ProblemConfig& cfg, const RunOptions& o, std::ostream& log) {
  const ChartPtr chart = make_chart(cfg.chart, cfg.chart_params, cfg.domain, cfg.spline_file);
  const ValidationReport r = validate_chart(*chart, o.samples);
  std::ostringstream f;
  f << "entry,max_rel_dev,pass\n";
  for (const auto& c : r.checks) f << c.entry << ',' << num(c.max_rel_dev) << ',' << (c.pass ? 1 : 0) << '\n';
  write_text(path_in(o, "chart_validation.csv"), f.str());
  if (!o.quiet) {
    for (const auto& c : r.checks) {
      char b[160];
      std::snprintf(b, sizeof b, "%-24s %.3e %s\n", c.entry.c_str(), c.max_rel_dev, c.pass ? "ok" : "FAIL");
      log << b;
    }
    log << (r.pass() ? "chart derivatives consistent\n" : "chart derivatives INCONSISTENT\n");
  }
  return r.pass() ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_command(const std::string& command, const ProblemConfig& cfg, const RunOptions& opt, std::ostream& log) {
  static const std::map<std::string, std::function<int(const ProblemConfig&, const RunOptions&, std::ostream&)>> table = {
      {"solve-newmodel", solve_newmodel},    {"solve-reynolds", solve_reynolds_cmd},
      {"solve-thinfilm", solve_thinfilm_cmd}, {"verify-asymptotics", verify_cmd},
      {"coeffs-dump", coeffs_cmd},            {"validate-chart", validate_chart_cmd}};
  const auto it = table.find(command);
  if (it == table.end()) throw std::invalid_argument("unknown command '" + command + "'");
  validate_config(cfg);
  std::error_code ec;
  std::filesystem::create_directories(opt.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + opt.out_dir + "': " + ec.message());
  const std::string echo = echo_config(cfg);
  write_text(path_in(opt, "config.echo"), echo);
  if (!opt.quiet) log << "# effective configuration\n" << echo;
  return it->second(cfg, opt, log);
}

}  // namespace gapflow
