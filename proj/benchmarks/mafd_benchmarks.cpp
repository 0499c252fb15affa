#include <benchmark/benchmark.h>

#include <string>

#include "mafd/linearization.hpp"
#include "mafd/power_flow.hpp"
#include "mafd/simulator.hpp"
#include "mafd/synthesis.hpp"

namespace {

std::string data(const std::string& rel) { return std::string(MAFD_BENCH_DATA_DIR) + "/" + rel; }

void BM_PowerFlow(benchmark::State& state) {
  const mafd::NetworkModel net = mafd::load_network(data(state.range(0) == 3 ? "case3.json" : "case123x5.json"));
  for (auto _ : state) benchmark::DoNotOptimize(mafd::solve_power_flow(net));
}
BENCHMARK(BM_PowerFlow)->Arg(3)->Arg(5);

void BM_EnumerateModes(benchmark::State& state) {
  const mafd::NetworkModel net = mafd::load_network(data(state.range(0) == 3 ? "case3.json" : "case123x5.json"));
  const mafd::SwitchedSystem sys(net, mafd::solve_power_flow(net));
  for (auto _ : state) benchmark::DoNotOptimize(mafd::enumerate_modes(sys));
}
BENCHMARK(BM_EnumerateModes)->Arg(3)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_Case1Simulation(benchmark::State& state) {
  const mafd::NetworkModel net = mafd::load_network(data("case3.json"));
  const mafd::SwitchedSystem sys(net, mafd::solve_power_flow(net));
  const mafd::Scenario sc = mafd::load_scenario(data("scenarios/case1.json"), 3);
  mafd::GainSchedule gains;
  for (std::uint32_t m = 0; m < 8; ++m) gains.set(m, -0.3 * Eigen::MatrixXd::Identity(6, 6));
  for (auto _ : state) benchmark::DoNotOptimize(mafd::run_scenario(sys, gains, sc));
}
BENCHMARK(BM_Case1Simulation)->Unit(benchmark::kMillisecond);

void BM_AlternatingSynthesis(benchmark::State& state) {
  const mafd::NetworkModel net = mafd::load_network(data("case3.json"));
  const mafd::SwitchedSystem sys(net, mafd::solve_power_flow(net));
  const auto modes = mafd::enumerate_modes(sys);
  const mafd::QsrSpec qsr = mafd::QsrSpec::defaults(8, 6);
  for (auto _ : state) benchmark::DoNotOptimize(mafd::synthesize_alternating(modes, qsr));
}
BENCHMARK(BM_AlternatingSynthesis)->Unit(benchmark::kMillisecond)->Iterations(2);

void BM_SchurBlock(benchmark::State& state) {
  const mafd::NetworkModel net = mafd::load_network(data("case123x5.json"));
  const mafd::SwitchedSystem sys(net, mafd::solve_power_flow(net));
  const mafd::LinearMode lm = mafd::linearize_mode(sys, mafd::SwitchMode::from_index(5, 5));
  const mafd::QsrBlock qsr{-0.1 * Eigen::MatrixXd::Identity(10, 10), 0.5 * Eigen::MatrixXd::Identity(10, 10),
                           Eigen::MatrixXd::Identity(10, 10)};
  const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(15, 15);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mafd::min_eigenvalue(mafd::dissipativity_block(p, lm.coupled_a(), lm.b2, lm.c, lm.d, qsr)));
  }
}
BENCHMARK(BM_SchurBlock);

}  // namespace
BENCHMARK_MAIN();
