use super::*;
use crate::model::*;

fn two_point(horizon: usize) -> NoiseModel {
    NoiseModel {
        stages: vec![StageDistribution::uniform(vec![vec![-1.0], vec![1.0]]); horizon],
        partition: vec![NoiseClass::Global],
    }
}

fn hydro_thermal() -> ProblemSpec {
    // hydro x' = x − u + a, thermal stateless with g = u − d
    let noise = NoiseModel {
        stages: vec![StageDistribution::uniform(vec![vec![0.0, 1.0], vec![1.0, 2.0]]); 2],
        partition: vec![NoiseClass::Local(0), NoiseClass::Global],
    };
    let hydro = storage_unit("hydro", Some(0), 2, 0.5, 0.5, 2.0, 2.0, (0.0, 4.0), (0.0, 2.0));
    let thermal = SubsystemSpec {
        name: "thermal".into(),
        state_dim: 0,
        control_dim: 1,
        initial_state: vec![],
        dynamics: StageSeq::Constant(Dynamics::default()),
        stage_cost: StageSeq::Constant(diagonal_quadratic(3, &[(0, 4.0)], &[], 0.0)),
        final_cost: Cost::zero(),
        coupling: StageSeq::Constant(Coupling::Affine {
            gx: None,
            gu: Some(Matrix::identity(1)),
            gw: Some(Matrix::from_rows(&[vec![0.0, -1.0]]).unwrap()),
            c: None,
        }),
        state_bounds: BoxBounds::constant(&[], &[]),
        control_bounds: BoxBounds::constant(&[0.0], &[1.5]),
    };
    ProblemSpec {
        name: None,
        horizon: 2,
        noise,
        subsystems: vec![hydro, thermal],
        coupling: CouplingSpec { dimension: 1 },
        discretization: None,
    }
}

#[test]
fn zero_count_is_rejected() {
    assert!(sample_scenarios(&two_point(1), 0, 1, Execution::Sequential).is_err());
}

#[test]
fn sampling_is_reproducible_and_mode_independent() {
    let a = sample_scenarios(&two_point(3), 50, 9, Execution::Parallel).unwrap();
    let b = sample_scenarios(&two_point(3), 50, 9, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    let c = sample_scenarios(&two_point(3), 50, 10, Execution::Sequential).unwrap();
    assert_ne!(a.scenarios, c.scenarios);
}

#[test]
fn two_point_sample_mean_is_near_zero() {
    let set = sample_scenarios(&two_point(1), 100_000, 3, Execution::Parallel).unwrap();
    let mean = set.scenarios.iter().map(|s| s.noises[0][0]).sum::<f64>() / set.len() as f64;
    assert!(mean.abs() <= 0.01, "{mean}");
}

#[test]
fn enumeration_covers_the_tree() {
    let set = enumerate_scenarios(&two_point(3), 100).unwrap();
    assert_eq!(set.len(), 8);
    assert!((set.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert_eq!(set.scenarios[1].noises, vec![vec![-1.0], vec![-1.0], vec![1.0]]);
    assert!(enumerate_scenarios(&two_point(3), 7).is_err());
}

#[test]
fn estimates_use_the_source() {
    let e = MonteCarloEstimate::from_values(&[1.0, 3.0], &[0.25, 0.75], ScenarioSource::Exhaustive);
    assert_eq!((e.mean, e.half_width), (2.5, 0.0));
    let s = MonteCarloEstimate::from_values(&[1.0, 3.0], &[0.5, 0.5], ScenarioSource::Sampled { seed: 0 });
    assert_eq!(s.mean, 2.0);
    assert!((s.half_width - 1.96 * 2f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn simulation_follows_dynamics_and_clips() {
    let spec = hydro_thermal();
    let scen = enumerate_scenarios(&spec.noise, 100).unwrap();
    let hydro = UnitFn(|_t: usize, _x: &[f64], _w: &[f64]| vec![5.0]);
    let thermal = UnitFn(|_t: usize, _x: &[f64], w: &[f64]| vec![w[1] - 2.0]);
    let policy = Decentralized { units: vec![&hydro, &thermal] };
    let bundle = simulate_policy(&spec, &policy, &scen, None, Execution::Parallel).unwrap();
    for (tr, sc) in bundle.trajectories.iter().zip(&scen.scenarios) {
        for t in 0..2 {
            assert_eq!(tr.controls[t][0], vec![2.0]);
            assert!(tr.clipped[t][0]);
            let x = tr.states[t][0][0];
            assert_eq!(tr.states[t + 1][0][0], x - 2.0 + sc.noises[t][0]);
            assert_eq!(tr.residuals[t], vec![2.0 + (sc.noises[t][1] - 2.0).max(0.0) - sc.noises[t][1]]);
        }
    }
}

#[test]
fn non_finite_controls_are_located() {
    let spec = hydro_thermal();
    let scen = enumerate_scenarios(&spec.noise, 100).unwrap();
    let hydro = UnitFn(|_t: usize, _x: &[f64], _w: &[f64]| vec![1.0]);
    let thermal = UnitFn(|t: usize, _x: &[f64], _w: &[f64]| vec![if t == 1 { f64::NAN } else { 0.0 }]);
    let policy = Decentralized { units: vec![&hydro, &thermal] };
    let err = simulate_policy(&spec, &policy, &scen, None, Execution::Parallel).unwrap_err();
    assert_eq!(err, Error::NonFiniteControl { scenario: 0, stage: 1, subsystem: 1 });
}

#[test]
fn recovery_closes_the_residual_with_the_slack() {
    let spec = hydro_thermal();
    let scen = enumerate_scenarios(&spec.noise, 100).unwrap();
    let hydro = UnitFn(|_t: usize, _x: &[f64], _w: &[f64]| vec![0.5]);
    let thermal = UnitFn(|_t: usize, _x: &[f64], _w: &[f64]| vec![0.0]);
    let policy = Decentralized { units: vec![&hydro, &thermal] };
    let bundle = simulate_policy(&spec, &policy, &scen, None, Execution::Sequential).unwrap();
    let slack = SlackUnit::new(&spec, 1).unwrap();
    let fixed = recover_feasibility(&spec, &bundle, &slack, &scen).unwrap();
    for (a, b) in bundle.trajectories.iter().zip(&fixed.trajectories) {
        assert_eq!(a.states, b.states);
        for t in 0..2 {
            assert_eq!(a.controls[t][0], b.controls[t][0]);
            assert!(b.residuals[t][0].abs() < 1e-12);
            assert!(!b.violated[t]);
        }
    }
    assert_eq!(fixed.violation_count(), 0);
    // hydro release 0 leaves demand 2 above the thermal bound 1.5
    let idle = UnitFn(|_t: usize, _x: &[f64], _w: &[f64]| vec![0.0]);
    let policy = Decentralized { units: vec![&idle, &thermal] };
    let bundle = simulate_policy(&spec, &policy, &scen, None, Execution::Sequential).unwrap();
    let fixed = recover_feasibility(&spec, &bundle, &slack, &scen).unwrap();
    let tr = &fixed.trajectories[3];
    assert_eq!(tr.controls[0][1], vec![1.5]);
    assert!(tr.violated[0]);
    assert_eq!(tr.residuals[0], vec![-0.5]);
    assert!(SlackUnit::new(&spec, 0).is_ok());
    assert!(SlackUnit::new(&spec, 2).is_err());
}

#[test]
fn recovery_leaves_feasible_bundles_untouched() {
    let spec = hydro_thermal();
    let scen = enumerate_scenarios(&spec.noise, 100).unwrap();
    let hydro = UnitFn(|_t: usize, _x: &[f64], _w: &[f64]| vec![0.5]);
    let thermal = UnitFn(|_t: usize, _x: &[f64], w: &[f64]| vec![w[1] - 0.5]);
    let policy = Decentralized { units: vec![&hydro, &thermal] };
    let bundle = simulate_policy(&spec, &policy, &scen, None, Execution::Sequential).unwrap();
    let fixed = recover_feasibility(&spec, &bundle, &SlackUnit::new(&spec, 1).unwrap(), &scen).unwrap();
    assert_eq!(bundle, fixed);
}

#[test]
fn scenario_csv_round_trips() {
    let set = sample_scenarios(&two_point(4), 7, 5, Execution::Sequential).unwrap();
    let mut buf = Vec::new();
    write_scenarios_csv(&set, &mut buf).unwrap();
    let back = read_scenarios_csv(buf.as_slice(), set.source).unwrap();
    assert_eq!(back, set);
}

#[test]
fn trajectory_csv_lists_every_stage() {
    let spec = hydro_thermal();
    let scen = enumerate_scenarios(&spec.noise, 100).unwrap();
    let hydro = UnitFn(|_t: usize, _x: &[f64], _w: &[f64]| vec![0.5]);
    let thermal = UnitFn(|_t: usize, _x: &[f64], _w: &[f64]| vec![0.0]);
    let policy = Decentralized { units: vec![&hydro, &thermal] };
    let bundle = simulate_policy(&spec, &policy, &scen, None, Execution::Sequential).unwrap();
    let mut buf = Vec::new();
    write_trajectories_csv(&bundle, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "scenario_id,t,subsystem,x0,u0,cost,clipped,r0,violated");
    assert_eq!(text.lines().count(), 1 + 4 * 3 * 2);
}
