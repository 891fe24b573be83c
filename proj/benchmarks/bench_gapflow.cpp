#include "gapflow/coefficients.hpp"
#include "gapflow/io.hpp"
#include "gapflow/verify.hpp"

#include <benchmark/benchmark.h>

using namespace gapflow;

namespace {

ProblemConfig slider(int n) {
  ProblemConfig c = parse_config(
      "grid = 8x8\nperiodic = false true\ngap = linear-slider\nh0 = 1\ngap.hb = 0.5\neps = 0.05\nV = 1 0\n");
  c.n[0] = c.n[1] = n;
  return c;
}

}  // namespace

static void BM_CoefficientTable(benchmark::State& state) {
  const Rect d{{0.0, 0.0}, {6.283185307179586, 1.0}};
  const ChartPtr chart = make_chart("cylinder", {}, d);
  const GapField gap("cosine", {{"value", 1.0}, {"amp", 0.3}, {"wavelength", 6.283185307179586}}, 0.05, 0.1);
  Grid g;
  g.n[0] = g.n[1] = static_cast<int>(state.range(0));
  g.D = d;
  for (auto _ : state) benchmark::DoNotOptimize(table_over_grid(*chart, gap, g, 0.0, 3, 1));
  state.SetItemsProcessed(state.iterations() * g.size());
}
BENCHMARK(BM_CoefficientTable)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_ReynoldsSolve(benchmark::State& state) {
  const LimitProblem lp = build_limit_problem(slider(static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(solve_reynolds(lp, 0.0));
}
BENCHMARK(BM_ReynoldsSolve)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

// Steady slip solve of the moment model; range(1) selects the condensed factorisation.
static void BM_NewModelSlider(benchmark::State& state) {
  Problem pb = build_problem(slider(static_cast<int>(state.range(0))));
  pb.opts.condense = state.range(1) != 0;
  NewModel m(pb);
  for (auto _ : state) {
    ModelState s = m.initial_state(0.0);
    benchmark::DoNotOptimize(m.solve_steady(s));
  }
}
BENCHMARK(BM_NewModelSlider)
    ->ArgsProduct({{16, 32, 64}, {0, 1}})
    ->ArgNames({"n", "condense"})
    ->Unit(benchmark::kMillisecond);

static void BM_TractionStep(benchmark::State& state) {
  Scenario sc = traction_wave_scenario();
  sc.n[0] = static_cast<int>(state.range(0));
  sc.n[1] = 4;
  for (auto _ : state) {
    sc.t_end = 0.0125;  // one step at eps = 0.05
    benchmark::DoNotOptimize(run_scenario(sc, 0.05));
  }
}
BENCHMARK(BM_TractionStep)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_ThinFilmStep(benchmark::State& state) {
  ProblemConfig c = parse_config("gap = wave-consistent\ngap.a = 0.1\nbc = traction\nCR1 = 0.5\nnu = 0.5\n");
  c.n[0] = c.n[1] = static_cast<int>(state.range(0));
  const ThinFilmSolver tf(build_limit_problem(c));
  ThinFilm s = tf.initial(0.0);
  for (auto _ : state) tf.step(s, 0.01);
}
BENCHMARK(BM_ThinFilmStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
