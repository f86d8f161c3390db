#include <benchmark/benchmark.h>

#include "ropf/mcsval.hpp"
#include "ropf/robustcore.hpp"

using namespace ropf;

namespace {

net::NetworkCase fixture14() {
    static net::NetworkCase c =
        net::place_res(net::load_case(std::string(ROPF_BENCH_DATA_DIR) + "/case14.m"),
                       0.15, 7);
    return c;
}

opf::BuildOptions bench_opts() {
    opf::BuildOptions opts;
    opts.ramp_mode = opf::RampMode::proportional_to_base;
    return opts;
}

} // namespace

static void BM_BuildAdmittance(benchmark::State &state) {
    net::NetworkCase c = fixture14();
    for (auto _ : state) {
        net::AdmittanceMatrix adm = net::build_admittance(c);
        benchmark::DoNotOptimize(adm.g.nonZeros());
    }
}
BENCHMARK(BM_BuildAdmittance);

static void BM_BuildDeterministic(benchmark::State &state) {
    net::NetworkCase c = fixture14();
    for (auto _ : state) {
        conic::ConicProgram p = opf::build_deterministic(c, bench_opts());
        benchmark::DoNotOptimize(p.num_vars());
    }
}
BENCHMARK(BM_BuildDeterministic);

static void BM_SolveDeterministic(benchmark::State &state) {
    net::NetworkCase c = fixture14();
    conic::ConicProgram p = opf::build_deterministic(c, bench_opts());
    for (auto _ : state) {
        conic::ConicSolution s = ipm::solve(p);
        benchmark::DoNotOptimize(s.objective);
    }
}
BENCHMARK(BM_SolveDeterministic);

static void BM_BuildDualRc(benchmark::State &state) {
    net::NetworkCase c = fixture14();
    opf::UncertaintySpec unc = opf::UncertaintySpec::fractional(c, 0.05, 0.05);
    for (auto _ : state) {
        robust::DualRcProgram rc =
            robust::build_dual_rc(c, unc, robust::RcMode::full, bench_opts());
        benchmark::DoNotOptimize(rc.program.num_vars());
    }
}
BENCHMARK(BM_BuildDualRc);

static void BM_SolveFullRc(benchmark::State &state) {
    net::NetworkCase c = fixture14();
    opf::UncertaintySpec unc = opf::UncertaintySpec::fractional(c, 0.05, 0.05);
    robust::DualRcProgram rc =
        robust::build_dual_rc(c, unc, robust::RcMode::full, bench_opts());
    for (auto _ : state) {
        robust::RobustSetpoints sp = robust::solve_rc_and_recover(rc);
        benchmark::DoNotOptimize(sp.objective);
    }
}
BENCHMARK(BM_SolveFullRc);

static void BM_PowerFlow(benchmark::State &state) {
    net::NetworkCase c = fixture14();
    opf::UncertaintySpec unc = opf::UncertaintySpec::fractional(c, 0.05, 0.05);
    robust::DualRcProgram rc =
        robust::build_dual_rc(c, unc, robust::RcMode::full, bench_opts());
    robust::RobustSetpoints sp = robust::solve_rc_and_recover(rc);
    auto scens = mcs::generate_scenarios(unc, acpf::ScenarioLabel::in_range, 64, 5);
    size_t k = 0;
    for (auto _ : state) {
        acpf::PfSolution pf = acpf::run_pf(c, sp, unc, scens[k++ % scens.size()]);
        benchmark::DoNotOptimize(pf.psi);
    }
}
BENCHMARK(BM_PowerFlow);

static void BM_ScenarioGeneration(benchmark::State &state) {
    net::NetworkCase c = fixture14();
    opf::UncertaintySpec unc = opf::UncertaintySpec::fractional(c, 0.05, 0.05);
    for (auto _ : state) {
        auto scens = mcs::generate_scenarios(
            unc, acpf::ScenarioLabel::in_range, static_cast<int>(state.range(0)), 5);
        benchmark::DoNotOptimize(scens.size());
    }
}
BENCHMARK(BM_ScenarioGeneration)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
