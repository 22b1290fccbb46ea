use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::bench::{independent_grids, make_independent_suite, make_three_unit, perfect_memory_info, tiny_instance, ThreeUnitParams};
use crate::condexp::BinSpec;
use crate::model::AffineMap;
use crate::model::Matrix;

fn tiny_config(max_iterations: usize) -> (ProblemSpec, InformationSpec, UzawaConfig) {
    let (spec, grids) = tiny_instance();
    let info = perfect_memory_info(&spec.noise, 0).unwrap();
    let mut cfg = UzawaConfig::new(0.25, max_iterations, ScenarioPlan::Exhaustive { max_paths: 1000 }, grids);
    cfg.estimator = EstimatorKind::Binned { bins: BinSpec::Distinct };
    cfg.slack_unit = Some(1);
    (spec, info, cfg)
}

#[test]
fn update_adds_scaled_residual() {
    let store = MultiplierStore::from_values(vec![vec![vec![1.0], vec![-1.0]]]).unwrap();
    let next = multiplier_update(&store, &[vec![vec![2.0], vec![0.0]]], &[0.5]).unwrap();
    assert_eq!(next.value(0, 0), &[2.0]);
    assert_eq!(next.value(0, 1), &[-1.0]);
    assert_eq!(next.iteration(), 1);
}

proptest! {
    #[test]
    fn update_is_an_exact_step_and_zero_residual_is_a_fixed_point(
        table in (1..6usize).prop_flat_map(|n| prop::collection::vec(prop::collection::vec((-50.0..50.0f64, -5.0..5.0f64), n), 1..5)),
        step in 0.001..2.0f64,
    ) {
        let store = MultiplierStore::from_values(table.iter().map(|st| st.iter().map(|p| vec![p.0]).collect()).collect()).unwrap();
        let residuals: Vec<Vec<Vec<f64>>> = table.iter().map(|st| st.iter().map(|p| vec![p.1]).collect()).collect();
        let steps = vec![step; table.len()];
        let next = multiplier_update(&store, &residuals, &steps).unwrap();
        for (t, st) in table.iter().enumerate() {
            for (s, p) in st.iter().enumerate() {
                prop_assert_eq!(next.value(t, s)[0], p.0 + step * p.1);
            }
        }
        let zeros: Vec<Vec<Vec<f64>>> = table.iter().map(|st| vec![vec![0.0]; st.len()]).collect();
        let same = multiplier_update(&store, &zeros, &steps).unwrap();
        prop_assert_eq!(same.stage(0), store.stage(0));
        prop_assert_eq!(same.iteration(), store.iteration() + 1);
    }
}

#[test]
fn update_rejects_nan_with_location() {
    let store = MultiplierStore::zeros(2, 3, 1);
    let mut r = vec![vec![vec![0.0]; 3]; 2];
    r[1][2][0] = f64::NAN;
    assert_eq!(multiplier_update(&store, &r, &[1.0, 1.0]), Err(Error::NonFiniteResidual { stage: 1, scenario: 2 }));
}

#[test]
fn constant_projection_is_the_mean() {
    let spec = tiny_instance().0;
    let scen = sample_scenarios(&spec.noise, 2, 1, Execution::Sequential).unwrap();
    let store = MultiplierStore::from_values(vec![vec![vec![1.0], vec![3.0]]; 3]).unwrap();
    let proj = project_price(&store, &scen, &InformationSpec::Constant, &EstimatorKind::Constant).unwrap();
    for t in 0..3 {
        assert_eq!(proj.price.price(t, &[]), vec![2.0]);
    }
}

#[test]
fn perfect_memory_projection_reproduces_path_multipliers() {
    let spec = tiny_instance().0;
    let info = perfect_memory_info(&spec.noise, 0).unwrap();
    let scen = enumerate_scenarios(&spec.noise, 100).unwrap();
    let values: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|t| {
            scen.scenarios
                .iter()
                .map(|s| vec![(0..=t).map(|r| s.noises[r][0] * (r + 2) as f64).sum::<f64>() - 0.3])
                .collect()
        })
        .collect();
    let store = MultiplierStore::from_values(values.clone()).unwrap();
    let proj = project_price(&store, &scen, &info, &EstimatorKind::Binned { bins: BinSpec::Distinct }).unwrap();
    for (s, sc) in scen.scenarios.iter().enumerate() {
        let ys = info.path(&sc.noises);
        for t in 0..3 {
            assert_eq!(proj.price.price(t, &ys[t]), values[t][s]);
        }
    }
    assert!(proj.deviance.iter().all(|d| d.is_none_or(|v| v == 1.0)));
}

#[test]
fn independent_information_has_small_deviance() {
    let spec = make_three_unit(&ThreeUnitParams::default()).unwrap();
    let scen = sample_scenarios(&spec.noise, 10_000, 3, Execution::Parallel).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let values = (0..spec.horizon).map(|_| (0..scen.len()).map(|_| vec![rng.random::<f64>()]).collect()).collect();
    let store = MultiplierStore::from_values(values).unwrap();
    let info = InformationSpec::Noise { map: AffineMap { a: None, b: Matrix::sparse(1, 3, &[(0, 2, 1.0)]), c: None } };
    let proj = project_price(&store, &scen, &info, &EstimatorKind::Binned { bins: BinSpec::Uniform(10) }).unwrap();
    for d in proj.deviance {
        assert!(d.unwrap() <= 0.02);
    }
}

#[test]
fn step_size_bound() {
    let r = check_step_size(1.0, 2f64.sqrt(), &[0.25, 0.5]).unwrap();
    assert!((r.bound - 1.0).abs() < 1e-15);
    assert!(r.ok);
    assert!(!check_step_size(1.0, 2f64.sqrt(), &[1.0]).unwrap().ok);
    assert!(!check_step_size(1.0, 1.0, &[-0.1]).unwrap().ok);
    assert!(check_step_size(0.0, 1.0, &[0.1]).is_err());
}

#[test]
fn uncoupled_problem_stops_on_residual_at_first_iteration() {
    let spec = make_independent_suite(2, false).unwrap();
    let mut cfg = UzawaConfig::new(1.0, 10, ScenarioPlan::Sampled { count: 20, seed: 1 }, independent_grids(2));
    cfg.residual_tolerance = Some(0.0);
    let res = run_dadp(&spec, &InformationSpec::Constant, &cfg, Execution::Sequential).unwrap();
    assert_eq!(res.stop, StopReason::Residual);
    assert_eq!(res.reports.len(), 1);
    assert_eq!(res.reports[0].iteration, 1);
    assert_eq!(res.store.iteration(), 0);
}

#[test]
fn zero_price_dual_is_sum_of_uncoupled_optima() {
    let (spec, grids) = tiny_instance();
    let scen = enumerate_scenarios(&spec.noise, 100).unwrap();
    let info = InformationSpec::Constant;
    let price = PricedTerm::zero(3, 1, 0);
    let eval = evaluate_price(&spec, &price, &info, &grids, &scen, None, Execution::Sequential).unwrap();
    let sols = solve_priced_units(&spec, &price, &info, &grids, Execution::Sequential).unwrap();
    let sum: f64 = sols.iter().map(|s| s.initial_value).sum();
    assert_eq!(eval.dual_exact, sum);
    assert!((eval.dual.mean - sum).abs() < 1e-12);
    assert_eq!(eval.dual.half_width, 0.0);
}

#[test]
fn simulated_dual_matches_value_functions_on_exhaustive_sets() {
    let (spec, info, cfg) = tiny_config(6);
    let res = run_dadp(&spec, &info, &cfg, Execution::Parallel).unwrap();
    for r in &res.reports {
        assert!((r.dual.mean - r.dual_exact).abs() < 1e-9, "{} vs {}", r.dual.mean, r.dual_exact);
    }
}

#[test]
fn tiny_instance_converges_with_nondecreasing_dual() {
    let (spec, info, mut cfg) = tiny_config(200);
    cfg.residual_tolerance = Some(1e-9);
    cfg.alpha = Some(1.0);
    cfg.lipschitz = Some(2f64.sqrt());
    let res = run_dadp(&spec, &info, &cfg, Execution::Parallel).unwrap();
    assert_eq!(res.stop, StopReason::Residual);
    assert!(res.step_check.unwrap().ok);
    for w in res.reports.windows(2) {
        assert!(w[1].dual.mean >= w[0].dual.mean - 1e-10);
    }
    let last = res.reports.last().unwrap();
    assert!((last.primal.unwrap().mean - last.dual.mean).abs() < 1e-9);
}

#[test]
fn runs_are_reproducible_across_execution_modes() {
    let spec = make_three_unit(&ThreeUnitParams { horizon: 4, ..Default::default() }).unwrap();
    let grids = spec.discretization.clone().unwrap();
    let mut cfg = UzawaConfig::new(0.002, 3, ScenarioPlan::Sampled { count: 40, seed: 5 }, grids);
    cfg.slack_unit = Some(2);
    let csv = |exec| {
        let res = run_dadp(&spec, &InformationSpec::Constant, &cfg, exec).unwrap();
        let mut out = Vec::new();
        write_iterations_csv(&res.reports, &mut out).unwrap();
        out
    };
    let a = csv(Execution::Parallel);
    assert_eq!(a, csv(Execution::Parallel));
    assert_eq!(a, csv(Execution::Sequential));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 4);
}

#[test]
fn observer_sees_every_report_in_order() {
    let (spec, info, cfg) = tiny_config(4);
    let scen = cfg.build_scenarios(&spec, Execution::Sequential).unwrap();
    let mut seen = Vec::new();
    let res = run_dadp_on(&spec, &info, &cfg, scen, Execution::Sequential, &mut |r| seen.push(r.iteration)).unwrap();
    assert_eq!(seen, vec![1, 2, 3, 4]);
    assert_eq!(res.stop, StopReason::MaxIterations);
    assert_eq!(res.store.iteration(), 3);
}

#[test]
fn histogram_masses_sum_to_one() {
    let h = Histogram::build(&[0.0, 1.0, 2.0, 2.0], &[0.1, 0.2, 0.3, 0.4], 4);
    assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(h.masses[3], 0.7);
    assert_eq!(h.edges(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    assert_eq!(Histogram::build(&[1.0, 1.0], &[0.5, 0.5], 5).masses, vec![1.0]);
}

#[test]
fn residual_histogram_csv_has_one_row_per_bin() {
    let (spec, info, mut cfg) = tiny_config(1);
    cfg.histogram_bins = 3;
    let res = run_dadp(&spec, &info, &cfg, Execution::Sequential).unwrap();
    let mut out = Vec::new();
    write_residual_histogram_csv(&res.reports[0], 1, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("coordinate,bin,lower,upper,mass"));
    let rows = text.lines().count() - 1;
    assert!(rows == 3 || rows == 1);
}
