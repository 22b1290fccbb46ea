use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dadp_core::bench::{make_three_unit, ThreeUnitParams};
use dadp_core::dadp::{run_dadp, ScenarioPlan, UzawaConfig};
use dadp_core::dp::solve_global_dp;
use dadp_core::model::InformationSpec;
use dadp_core::scenario::sample_scenarios;
use dadp_core::Execution;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn global_dp(c: &mut Criterion) {
    let spec = make_three_unit(&ThreeUnitParams { horizon: 4, ..Default::default() }).unwrap();
    let grids = spec.discretization.clone().unwrap();
    let mut g = c.benchmark_group("global_dp_three_unit_T4");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| solve_global_dp(&spec, &grids, exec).unwrap()));
    }
    g.finish();
}

fn dadp_iterations(c: &mut Criterion) {
    let spec = make_three_unit(&ThreeUnitParams { horizon: 8, ..Default::default() }).unwrap();
    let mut cfg = UzawaConfig::new(0.01, 2, ScenarioPlan::Sampled { count: 200, seed: 1 }, spec.discretization.clone().unwrap());
    cfg.slack_unit = Some(2);
    let mut g = c.benchmark_group("dadp_two_iterations_three_unit_T8_S200");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_dadp(&spec, &InformationSpec::Constant, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let spec = make_three_unit(&ThreeUnitParams::default()).unwrap();
    let mut g = c.benchmark_group("sample_scenarios_T25_S10000");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sample_scenarios(&spec.noise, 10_000, 3, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, global_dp, dadp_iterations, sampling);
criterion_main!(benches);
