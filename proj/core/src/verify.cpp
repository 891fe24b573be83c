#include "gapflow/verify.hpp"

#include "gapflow/errors.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <ostream>
#include <stdexcept>

namespace gapflow {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kXi3Samples[] = {0.0, 0.25, 0.5, 0.75, 1.0};

// Accumulates ||a - b|| / ||b|| in the L2 and max senses.
struct RelError {
  double d2 = 0.0, r2 = 0.0, dmax = 0.0, rmax = 0.0;
  void add(double a, double b) {
    d2 += (a - b) * (a - b);
    r2 += b * b;
    dmax = std::max(dmax, std::abs(a - b));
    rmax = std::max(rmax, std::abs(b));
  }
  double l2() const { return r2 > 0.0 ? std::sqrt(d2 / r2) : std::sqrt(d2); }
  double max() const { return rmax > 0.0 ? dmax / rmax : dmax; }
};

double rms(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += a[k] * a[k] + b[k] * b[k];
  return a.empty() ? 0.0 : std::sqrt(s / a.size());
}

Grid scenario_grid(const Scenario& sc) {
  Grid g;
  g.n[0] = sc.n[0];
  g.n[1] = sc.n[1];
  g.periodic[0] = sc.kind != ScenarioKind::slip_slider;
  return g;
}

GapField scenario_gap(const Scenario& sc, double eps) {
  if (sc.kind == ScenarioKind::slip_slider) return GapField("linear-slider", {{"ha", sc.ha}, {"hb", sc.hb}}, eps, sc.gap_floor);
  return GapField("wave-consistent", {{"value", sc.h0}, {"a", sc.amp}, {"wavelength", sc.wavelength}}, eps,
                  sc.gap_floor);
}


void run_slip(const Scenario& sc, double eps, ScenarioRun& run) {
  const Grid g = scenario_grid(sc);
  LimitProblem& lp = run.limit;
  lp.chart = std::make_shared<PlaneChart>();
  lp.gap = scenario_gap(sc, eps);
  lp.fluid = sc.fluid;
  lp.grid = g;
  const double U = sc.U;
  lp.pred.velocity = [U](double, double, double, double V[2], double W[2]) {
    V[0] = U;
    V[1] = 0.0;
    W[0] = W[1] = 0.0;
  };
  const Lubrication lub = solve_reynolds(lp, 0.0);
  std::vector<double> mom[kMom][2];
  lubrication_moments(lp, lub, mom);

  Problem& pb = run.problem;
  pb.chart = lp.chart;
  pb.gap = lp.gap;
  pb.fluid = sc.fluid;
  pb.grid = g;
  pb.opts = sc.opts;
  SlipData sd;
  sd.velocity = lp.pred.velocity;
  pb.bc.surface = sd;
  pb.bc.trace = lubrication_traces(lp, lub, eps);

  NewModel model(pb);
  run.state = model.initial_state(0.0);
  run.stats = model.solve_steady(run.state);
  run.steps = 1;
  run.reference = lub;

  RelError ep, eu, et;
  for (int node = 0; node < g.size(); ++node) {
    ep.add(eps * eps * run.state.p[0][node], lub.p[node]);
    for (double z : kXi3Samples) {
      const PointValue pv = model.evaluate(run.state, node, z);
      for (int i = 0; i < 2; ++i) {
        double ul = 0.0;
        for (int n = kMom - 1; n >= 0; --n) ul = ul * z + mom[n][i][node];
        eu.add(pv.u[i], ul);
        et.add(pv.u[i], ul);
      }
      eu.add(pv.u[2], lub.u3[node]);
    }
  }
  run.errors["p_rel_l2"] = ep.l2();
  run.errors["p_rel_max"] = ep.max();
  run.errors["u_rel_l2"] = eu.l2();
  run.errors["u_rel_max"] = eu.max();
  run.errors["u_tangential_rel_l2"] = et.l2();
  run.structural = structural_limit_checks(model, run.state, sc);
  run.residuals = residual_metrics(model, run.state, nullptr, 0.0);
}

void run_traction(const Scenario& sc, double eps, ScenarioRun& run) {
  const Grid g = scenario_grid(sc);
  const double a = sc.amp, k = 2.0 * kPi / sc.wavelength, nu = sc.fluid.nu;
  LimitProblem& lp = run.limit;
  lp.chart = std::make_shared<PlaneChart>();
  lp.gap = scenario_gap(sc, eps);
  lp.fluid = sc.fluid;
  lp.grid = g;
  lp.pred.velocity = [a, k](double x, double, double, double V[2], double W[2]) {
    V[0] = W[0] = a * std::sin(k * x);
    V[1] = W[1] = 0.0;
  };
  lp.pred.CR1 = sc.CR1;
  // Body force that holds V steady in the thin-film equations.
  const GapField gap = lp.gap;
  lp.body = [a, k, nu, gap](double x, double y, double t, double f[2]) {
    const GapSample gs = gap.eval(x, y, t);
    const double v = a * std::sin(k * x), vx = a * k * std::cos(k * x), vxx = -a * k * k * std::sin(k * x);
    f[0] = v * vx - 4.0 * nu * (vxx + gs.dh[0] / gs.h * vx);
    f[1] = 0.0;
  };
  ThinFilmSolver tf(lp, ThinFilmOptions{false});
  ThinFilm ts = tf.initial(0.0);

  Problem& pb = run.problem;
  pb.chart = lp.chart;
  pb.gap = lp.gap;
  pb.fluid = sc.fluid;
  pb.grid = g;
  pb.opts = sc.opts;
  TractionData td;
  td.CR1 = sc.CR1;
  pb.bc.surface = td;
  auto body = lp.body;
  pb.forcing.moment = [body](int i, int n, double x, double y, double t) {
    if (n != 0 || i > 1) return 0.0;
    double f[2];
    body(x, y, t, f);
    return f[i];
  };

  NewModel model(pb);
  ModelState s = model.initial_state(0.0);
  for (int node = 0; node < g.size(); ++node) {
    s.u[0][0][node] = ts.V[0][node];
    s.u[0][1][node] = ts.V[1][node];
    s.p[0][node] = ts.p00[node];
  }
  model.reconstruct_vertical(s);
  model.reconstruct_pressure(s);

  int steps = std::max(1, static_cast<int>(std::lround(sc.t_end / (sc.dt_per_eps * eps))));
  const double dt = sc.t_end / steps;
  ModelState prev = s;
  for (int st = 0; st < steps; ++st) {
    prev = s;
    const SolveStats r = model.step(s, dt);
    run.stats.iterations += r.iterations;
    run.stats.factorizations += r.factorizations;
    run.stats.residual = r.residual;
    tf.step(ts, dt);
  }
  run.steps = steps;
  run.state = s;
  run.reference = ts;

  const auto lv = model.level(s.t);
  RelError eu, ep, et;
  for (int node = 0; node < g.size(); ++node)
    for (double z : kXi3Samples) {
      const PointValue pv = model.evaluate(s, node, z);
      for (int i = 0; i < 2; ++i) {
        eu.add(pv.u[i], ts.V[i][node]);
        et.add(pv.u[i], ts.V[i][node]);
      }
      eu.add(pv.u[2], lv->w[node]);
      ep.add(pv.p, ts.p00[node]);
    }
  run.errors["u_rel_l2"] = eu.l2();
  run.errors["u_rel_max"] = eu.max();
  run.errors["u_tangential_rel_l2"] = et.l2();
  run.errors["p_rel_l2"] = ep.l2();
  run.errors["p_rel_max"] = ep.max();
  run.structural = structural_limit_checks(model, s, sc);
  run.residuals = residual_metrics(model, s, &prev, dt);
}

}  // namespace

Metrics residual_metrics(const NewModel& m, const ModelState& s, const ModelState* prev, double dt) {
  Metrics out;
  const Grid& g = m.grid();
  double mom = 0.0;
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 2; ++i) {
      const auto r = m.momentum_residual(s, n, i, prev, dt);
      for (int node = 0; node < g.size(); ++node)
        if (!g.boundary(node)) mom = std::max(mom, std::abs(r[node]));
    }
  double div = 0.0;
  const auto d = m.divergence_residual(s);
  for (int node = 0; node < g.size(); ++node)
    if (!g.boundary(node)) div = std::max(div, std::abs(d[node]));
  out["max_momentum_residual"] = mom;
  out["max_divergence_residual"] = div;
  return out;
}

OrderFit estimate_order(const std::vector<double>& errors, const std::vector<double>& params) {
  if (errors.size() != params.size()) throw InsufficientPoints("errors and parameters differ in length");
  if (errors.size() < 2) throw InsufficientPoints("an order needs at least two points");
  const int n = static_cast<int>(errors.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> X(n), Y(n);
  for (int k = 0; k < n; ++k) {
    if (!(errors[k] > 0.0) || !(params[k] > 0.0)) throw InsufficientPoints("non-positive entry in order fit");
    X[k] = std::log(params[k]);
    Y[k] = std::log(errors[k]);
    sx += X[k];
    sy += Y[k];
    sxx += X[k] * X[k];
    sxy += X[k] * Y[k];
  }
  const double den = n * sxx - sx * sx;
  if (!(std::abs(den) > 0.0)) throw InsufficientPoints("parameters are all equal");
  OrderFit f;
  f.points = n;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  double r = 0.0;
  for (int k = 0; k < n; ++k) {
    const double e = Y[k] - (f.intercept + f.slope * X[k]);
    r += e * e;
  }
  f.residual = std::sqrt(r / n);
  return f;
}

Scenario slip_slider_scenario() {
  Scenario sc;
  sc.name = "slip-slider";
  sc.kind = ScenarioKind::slip_slider;
  return sc;
}

Scenario traction_wave_scenario() {
  Scenario sc;
  sc.name = "traction-wave";
  sc.kind = ScenarioKind::traction_wave;
  sc.fluid.nu = 0.5;
  return sc;
}

std::vector<std::string> scenario_names() { return {"slip-slider", "traction-wave"}; }

Scenario scenario_by_name(const std::string& name) {
  if (name == "slip-slider") return slip_slider_scenario();
  if (name == "traction-wave") return traction_wave_scenario();
  throw UnknownRegistryName("unknown scenario '" + name + "'");
}

ScenarioRun run_scenario(const Scenario& sc, double eps) {
  ScenarioRun run;
  run.eps = eps;
  if (sc.kind == ScenarioKind::slip_slider) run_slip(sc, eps, run);
  else run_traction(sc, eps, run);
  return run;
}

Metrics structural_limit_checks(const NewModel& model, const ModelState& s, const Scenario& sc) {
  Metrics m;
  const int N = s.grid.size();
  const double eps = model.eps();
  auto rms1 = [](const std::vector<double>& f) { return field_norms(f)[1]; };
  const auto lv = model.level(s.t);
  double w = 0.0;
  for (int node = 0; node < N; ++node) w = std::max(w, std::abs(s.u3[0][node] - lv->w[node]));
  m["u3bar0_defect"] = w;
  if (sc.kind == ScenarioKind::slip_slider) {
    for (int n = 1; n < kMom; ++n) {
      std::vector<double> q(s.p[n]);
      for (double& v : q) v *= eps * eps;
      m["eps2_pbar" + std::to_string(n)] = rms1(q);
      m["u3bar" + std::to_string(n)] = rms1(s.u3[n]);
    }
    m["ubar3"] = rms(s.u[3][0], s.u[3][1]);
  } else {
    m["ubar1"] = rms(s.u[1][0], s.u[1][1]);
    m["ubar2"] = rms(s.u[2][0], s.u[2][1]);
    const Grid& g = s.grid;
    const TractionData& td = model.problem().bc.traction();
    RelError e;
    for (int node = 0; node < N; ++node) {
      const double x = g.coord(0, g.ix(node)), y = g.coord(1, g.jx(node));
      const GapSample gs = model.problem().gap.eval(x, y, s.t);
      const double pi0 = td.pi0 ? td.pi0(x, y, s.t) : 0.0;
      e.add(s.p[0][node], thin_film_pressure(pi0, model.problem().fluid.mu(), gs.h, gs.ht));
    }
    m["p00_law"] = e.l2();
  }
  return m;
}

bool SweepReport::monotone(const std::string& name) const {
  const auto v = series(name);
  if (v.size() < 2) return false;
  for (size_t k = 1; k < v.size(); ++k)
    if (!(v[k] < v[k - 1])) return false;
  return true;
}

std::vector<double> SweepReport::series(const std::string& name) const {
  std::vector<double> v;
  for (const auto& p : points) {
    if (!p.converged) continue;
    auto it = p.values.find(name);
    if (it != p.values.end()) v.push_back(it->second);
  }
  return v;
}

SweepReport run_epsilon_sweep(const Scenario& sc, const std::vector<double>& eps, int threads) {
  if (eps.empty()) throw InsufficientPoints("empty eps list");
  for (size_t k = 0; k < eps.size(); ++k) {
    if (!(eps[k] > 0.0 && eps[k] <= 0.2)) throw std::invalid_argument("eps values must lie in (0, 0.2]");
    if (k > 0 && !(eps[k] < eps[k - 1])) throw std::invalid_argument("eps list must be strictly decreasing");
  }
  SweepReport rep;
  rep.scenario = sc.name;
  rep.points.resize(eps.size());
  auto one = [&sc](double e) {
    SweepPoint p;
    p.eps = e;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ScenarioRun r = run_scenario(sc, e);
      p.converged = true;
      p.values = r.errors;
      p.values.insert(r.structural.begin(), r.structural.end());
      p.values.insert(r.residuals.begin(), r.residuals.end());
      p.iterations = r.stats.iterations;
      p.factorizations = r.stats.factorizations;
    } catch (const NonConvergence& ex) {
      p.failure = ex.what();
      p.iterations = ex.iterations;
    } catch (const SingularOperator& ex) {
      p.failure = ex.what();
    }
    p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return p;
  };
  if (threads > 1) {
    for (size_t k0 = 0; k0 < eps.size(); k0 += threads) {
      std::vector<std::future<SweepPoint>> jobs;
      for (size_t k = k0; k < std::min(eps.size(), k0 + threads); ++k)
        jobs.push_back(std::async(std::launch::async, one, eps[k]));
      for (size_t k = 0; k < jobs.size(); ++k) rep.points[k0 + k] = jobs[k].get();
    }
  } else {
    for (size_t k = 0; k < eps.size(); ++k) rep.points[k] = one(eps[k]);
  }

  std::vector<double> es;
  for (const auto& p : rep.points)
    if (p.converged) es.push_back(p.eps);
  if (es.size() >= 2) {
    for (const auto& [name, v0] : rep.points[0].values) {
      (void)v0;
      const auto v = rep.series(name);
      if (v.size() != es.size()) continue;
      if (std::any_of(v.begin(), v.end(), [](double x) { return !(x > 0.0); })) continue;
      rep.slopes[name] = estimate_order(v, es);
    }
  }
  return rep;
}

std::vector<InvariantCheck> sweep_invariants(const SweepReport& r, ScenarioKind kind, double min_slope) {
  std::vector<InvariantCheck> out;
  auto check = [&](const std::string& name, bool need_monotone) {
    InvariantCheck c;
    c.name = name;
    const auto it = r.slopes.find(name);
    const bool mono = r.monotone(name);
    char b[160];
    if (it == r.slopes.end()) {
      c.detail = "no slope (fewer than two converged points)";
    } else {
      c.pass = it->second.slope >= min_slope && (!need_monotone || mono);
      std::snprintf(b, sizeof b, "slope %.3f (fit residual %.2e), %s", it->second.slope, it->second.residual,
                    mono ? "monotone" : "not monotone");
      c.detail = b;
    }
    out.push_back(c);
  };
  if (kind == ScenarioKind::slip_slider) {
    check("p_rel_l2", true);
    check("u_rel_l2", true);
    check("ubar3", false);
    check("u3bar2", false);
    check("u3bar3", false);
  } else {
    check("u_rel_l2", false);
    check("p_rel_l2", false);
    check("ubar1", false);
    check("ubar2", false);
  }
  return out;
}

namespace {

std::string num(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

}  // namespace

void write_sweep_csv(const SweepReport& r, std::ostream& os) {
  os << "eps,error_name,value,slope,fit_residual\n";
  for (const auto& p : r.points) {
    if (!p.converged) {
      os << num(p.eps) << ",not_converged,nan,,\n";
      continue;
    }
    for (const auto& [name, v] : p.values) {
      os << num(p.eps) << ',' << name << ',' << num(v) << ',';
      auto it = r.slopes.find(name);
      if (it != r.slopes.end()) os << num(it->second.slope) << ',' << num(it->second.residual);
      else os << ',';
      os << '\n';
    }
  }
  if (!os) throw IoError("failed to write sweep report");
}

void write_timing_csv(const SweepReport& r, std::ostream& os) {
  os << "eps,seconds,iterations,factorizations\n";
  for (const auto& p : r.points)
    os << num(p.eps) << ',' << num(p.seconds) << ',' << p.iterations << ',' << p.factorizations << '\n';
  if (!os) throw IoError("failed to write timing report");
}

void write_sweep_summary(const SweepReport& r, std::ostream& os) {
  char b[200];
  os << "scenario " << r.scenario << '\n';
  for (const auto& p : r.points) {
    std::snprintf(b, sizeof b, "eps %-8g %s  %.2f s, %d iterations, %d factorisations\n", p.eps,
                  p.converged ? "converged" : "FAILED", p.seconds, p.iterations, p.factorizations);
    os << b;
    if (!p.converged) os << "  " << p.failure << '\n';
  }
  os << "metric                        ";
  for (const auto& p : r.points) {
    std::snprintf(b, sizeof b, " %11g", p.eps);
    os << b;
  }
  os << "      slope  fit-resid\n";
  if (r.points.empty()) return;
  Metrics names;
  for (const auto& p : r.points) names.insert(p.values.begin(), p.values.end());
  for (const auto& [name, v0] : names) {
    (void)v0;
    std::snprintf(b, sizeof b, "%-30s", name.c_str());
    os << b;
    for (const auto& p : r.points) {
      auto it = p.values.find(name);
      if (p.converged && it != p.values.end()) std::snprintf(b, sizeof b, " %11.4e", it->second);
      else std::snprintf(b, sizeof b, " %11s", "-");
      os << b;
    }
    auto it = r.slopes.find(name);
    if (it != r.slopes.end()) std::snprintf(b, sizeof b, " %10.3f %10.2e\n", it->second.slope, it->second.residual);
    else std::snprintf(b, sizeof b, " %10s %10s\n", "-", "-");
    os << b;
  }
}

ManufacturedTargets trigonometric_targets(double eps) {
  ManufacturedTargets t;
  const double K = 2.0 * kPi;
  t.u = [K](int n, int i, double x, double y) {
    if (n == 0) return i == 0 ? 0.5 * std::sin(K * y) : 0.3 * std::cos(K * x);
    // curl of psi = c sin(K x) cos(K y + ph)
    const double c = 0.4 / n, ph = 0.7 * n;
    return i == 0 ? -c * K * std::sin(K * x) * std::sin(K * y + ph) : -c * K * std::cos(K * x) * std::cos(K * y + ph);
  };
  t.p0 = [K, eps](double x, double y) { return std::cos(K * x) * std::sin(K * y) / (eps * eps); };
  return t;
}

ManufacturedTargets zero_targets() {
  ManufacturedTargets t;
  t.u = [](int, int, double, double) { return 0.0; };
  t.p0 = [](double, double) { return 0.0; };
  return t;
}

ManufacturedSolution manufactured_solution(const Problem& base, const ManufacturedTargets& tg, double tol) {
  ManufacturedSolution ms;
  Problem& pb = ms.problem;
  pb = base;
  pb.forcing = ForcingField{};
  auto u = tg.u;
  auto p0 = tg.p0;
  SlipData sd;
  sd.velocity = [u](double x, double y, double, double V[2], double W[2]) {
    for (int i = 0; i < 2; ++i) {
      V[i] = u(0, i, x, y);
      W[i] = 0.0;
      for (int n = 0; n < kMom; ++n) W[i] += u(n, i, x, y);
    }
  };
  pb.bc.surface = sd;
  pb.bc.trace = [u, p0](double x, double y, double, double out[9]) {
    for (int n = 0; n < kMom; ++n)
      for (int i = 0; i < 2; ++i) out[2 * n + i] = u(n, i, x, y);
    out[8] = p0(x, y);
  };

  const Grid& g = pb.grid;
  const int N = g.size();
  ModelState& s = ms.exact;
  s.resize(g);
  double umax = 0.0;
  for (int node = 0; node < N; ++node) {
    const double x = g.coord(0, g.ix(node)), y = g.coord(1, g.jx(node));
    for (int n = 0; n < kMom; ++n)
      for (int i = 0; i < 2; ++i) {
        s.u[n][i][node] = u(n, i, x, y);
        umax = std::max(umax, std::abs(s.u[n][i][node]));
      }
    s.p[0][node] = p0(x, y);
  }
  NewModel probe(pb);
  const auto smp = probe.operator_sample(s, 4);
  for (int node = 0; node < N; ++node)
    if (!g.boundary(node)) ms.kinematic_defect = std::max(ms.kinematic_defect, std::abs(smp.kinematic[node]));
  if (ms.kinematic_defect > tol * std::max(1.0, umax))
    throw IncompatibleTargets("targets violate the kinematic constraint by " + std::to_string(ms.kinematic_defect));
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 2; ++i) pb.forcing.nodal[i][n] = smp.momentum[n][i];
  probe.reconstruct_vertical(s);
  probe.reconstruct_pressure(s);
  return ms;
}

ManufacturedError manufactured_error(const ModelState& s, const ModelState& exact) {
  RelError eu, ep;
  for (size_t node = 0; node < exact.p[0].size(); ++node) {
    for (int n = 0; n < kMom; ++n)
      for (int i = 0; i < 2; ++i) eu.add(s.u[n][i][node], exact.u[n][i][node]);
    ep.add(s.p[0][node], exact.p[0][node]);
  }
  return {eu.l2(), ep.l2()};
}

OrderStudy manufactured_order_study(const std::vector<int>& cells, double eps) {
  OrderStudy st;
  st.cells = cells;
  std::vector<double> hs, eu, ep;
  for (int n : cells) {
    Problem pb;
    pb.chart = std::make_shared<PlaneChart>();
    pb.gap = GapField("constant", {{"value", 1.0}}, eps, 0.1);
    pb.grid.n[0] = pb.grid.n[1] = n;
    const auto t0 = std::chrono::steady_clock::now();
    ManufacturedSolution ms = manufactured_solution(pb, trigonometric_targets(eps));
    NewModel m(ms.problem);
    ModelState s = m.initial_state(0.0);
    m.solve_steady(s);
    st.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    st.errors.push_back(manufactured_error(s, ms.exact));
    hs.push_back(1.0 / n);
    eu.push_back(st.errors.back().u);
    ep.push_back(st.errors.back().p);
  }
  if (cells.size() >= 2) {
    st.u = estimate_order(eu, hs);
    st.p = estimate_order(ep, hs);
  }
  return st;
}

}  // namespace gapflow
