use super::*;
use crate::model::*;

fn deterministic(horizon: usize) -> ProblemSpec {
    let mut unit = storage_unit("s", None, 1, 1.0, 1.0, 0.0, 1.0, (0.0, 1.0), (0.0, 1.0));
    unit.coupling = StageSeq::Constant(Coupling::Zero);
    ProblemSpec {
        name: None,
        horizon,
        noise: NoiseModel {
            stages: vec![StageDistribution::degenerate(vec![0.0]); horizon],
            partition: vec![NoiseClass::Global],
        },
        subsystems: vec![unit],
        coupling: CouplingSpec { dimension: 0 },
        discretization: None,
    }
}

fn grid(state: usize, control: usize) -> GridConfig {
    GridConfig::new(vec![UnitGrid { state_nodes: vec![state], control_nodes: vec![control] }])
}

fn stochastic_pair() -> ProblemSpec {
    let noise = NoiseModel {
        stages: vec![StageDistribution::uniform(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]); 3],
        partition: vec![NoiseClass::Local(0), NoiseClass::Local(1)],
    };
    let mut a = storage_unit("a", Some(0), 2, 0.5, 0.5, 2.0, 2.0, (0.0, 4.0), (0.0, 2.0));
    let mut b = storage_unit("b", Some(1), 2, 0.2, 1.0, 1.0, 1.0, (0.0, 3.0), (0.0, 1.0));
    a.coupling = StageSeq::Constant(Coupling::Zero);
    b.coupling = StageSeq::Constant(Coupling::Zero);
    ProblemSpec {
        name: None,
        horizon: 3,
        noise,
        subsystems: vec![a, b],
        coupling: CouplingSpec { dimension: 0 },
        discretization: None,
    }
}

fn pair_grid() -> GridConfig {
    GridConfig::new(vec![
        UnitGrid { state_nodes: vec![9], control_nodes: vec![5] },
        UnitGrid { state_nodes: vec![7], control_nodes: vec![3] },
    ])
}

fn stateless(q: usize, eps: f64, lo: f64, hi: f64) -> SubsystemSpec {
    SubsystemSpec {
        name: "stateless".into(),
        state_dim: 0,
        control_dim: 1,
        initial_state: vec![],
        dynamics: StageSeq::Constant(Dynamics::default()),
        stage_cost: StageSeq::Constant(diagonal_quadratic(1 + q, &[(0, 2.0 * eps)], &[], 0.0)),
        final_cost: Cost::zero(),
        coupling: StageSeq::Constant(Coupling::Affine { gx: None, gu: Some(Matrix::identity(1)), gw: None, c: None }),
        state_bounds: BoxBounds::constant(&[], &[]),
        control_bounds: BoxBounds::constant(&[lo], &[hi]),
    }
}

#[test]
fn single_stage_with_zero_horizon_value_is_final_cost() {
    let spec = deterministic(1);
    let sol = solve_global_dp(&spec, &grid(5, 5), Execution::Sequential).unwrap();
    let v = &sol.value;
    for node in 0..v.grid(1).len() {
        let x = v.grid(1).point(node)[0];
        assert_eq!(v.table(1)[node], x * x);
    }
}

#[test]
fn deterministic_one_stage_example() {
    let sol = solve_global_dp(&deterministic(1), &grid(5, 5), Execution::Sequential).unwrap();
    assert!((sol.initial_value - 0.5).abs() < 1e-12);
    let d = sol.policy.decide(0, &[&[1.0]], &[0.0], None).unwrap();
    assert_eq!(d.controls, vec![vec![0.5]]);
    assert!(!d.fallback);
}

#[test]
fn uncoupled_units_are_additive() {
    let spec = stochastic_pair();
    let joint = solve_global_dp(&spec, &pair_grid(), Execution::Parallel).unwrap();
    let solo: Vec<DpSolution> = (0..2)
        .map(|i| {
            let mut s = spec.clone();
            s.subsystems = vec![spec.subsystems[i].clone()];
            s.noise.partition = vec![NoiseClass::Global; 2];
            solve_global_dp(&s, &GridConfig::new(vec![pair_grid().units[i].clone()]), Execution::Sequential).unwrap()
        })
        .collect();
    for t in 0..=3 {
        let g = joint.value.grid(t);
        for node in 0..g.len() {
            let p = g.point(node);
            let a = interpolate_value(&solo[0].value, t, &p[..1]).unwrap();
            let b = interpolate_value(&solo[1].value, t, &p[1..]).unwrap();
            assert!((joint.value.table(t)[node] - (a + b)).abs() < 1e-9, "t={t} node={node}");
        }
    }
}

#[test]
fn parallel_and_sequential_tables_are_identical() {
    let spec = stochastic_pair();
    let a = solve_global_dp(&spec, &pair_grid(), Execution::Parallel).unwrap();
    let b = solve_global_dp(&spec, &pair_grid(), Execution::Sequential).unwrap();
    assert_eq!(*a.value, *b.value);
}

#[test]
fn constant_price_gives_shifted_minimizer() {
    let noise = NoiseModel { stages: vec![StageDistribution::degenerate(vec![0.0])], partition: vec![NoiseClass::Global] };
    let unit = stateless(1, 1.0, -5.0, 5.0);
    let price = PricedTerm::constant(vec![vec![1.0]], 0);
    let ug = UnitGrid { state_nodes: vec![], control_nodes: vec![101] };
    let sol = solve_priced_subproblem(&unit, &noise, &price, &InformationSpec::Constant, &ug, 1000, Execution::Sequential)
        .unwrap();
    let d = sol.policy.decide(0, &[&[]], &[0.0], None).unwrap();
    let res = sol.policy.control_resolution()[0];
    assert!((d.controls[0][0] - (-0.5)).abs() <= res);
    assert!((sol.initial_value - (-0.25)).abs() < 1e-12);
}

#[test]
fn zero_price_matches_uncoupled_solve() {
    let spec = stochastic_pair();
    let mut sub = spec.subsystems[0].clone();
    sub.coupling = StageSeq::Constant(Coupling::Affine { gx: None, gu: Some(Matrix::identity(1)), gw: None, c: None });
    let price = PricedTerm::zero(3, 1, 0);
    let priced =
        solve_priced_subproblem(&sub, &spec.noise, &price, &InformationSpec::Constant, &pair_grid().units[0], 1000, Execution::Parallel)
            .unwrap();
    let mut solo = spec.clone();
    solo.subsystems = vec![spec.subsystems[0].clone()];
    solo.noise.partition = vec![NoiseClass::Global; 2];
    let global = solve_global_dp(&solo, &GridConfig::new(vec![pair_grid().units[0].clone()]), Execution::Parallel).unwrap();
    assert_eq!(*priced.value, *global.value);
}

#[test]
fn frozen_markovian_information_leaves_values_flat() {
    let spec = stochastic_pair();
    let mut sub = spec.subsystems[0].clone();
    sub.coupling = StageSeq::Constant(Coupling::Affine { gx: None, gu: Some(Matrix::identity(1)), gw: None, c: None });
    let info = InformationSpec::Markovian {
        initial: AffineMap::select(&[0], 2),
        transition: AffineMap { a: Some(Matrix::identity(1)), b: Matrix::zeros(1, 2), c: None },
        grids: vec![InfoGrid { lower: vec![0.0], upper: vec![1.0], nodes: vec![3] }; 3],
    };
    let price = PricedTerm::constant(vec![vec![0.3]; 3], 1);
    let sol = solve_priced_subproblem(&sub, &spec.noise, &price, &info, &pair_grid().units[0], 1000, Execution::Sequential)
        .unwrap();
    for t in 1..=3 {
        let table = sol.value.table(t);
        assert_eq!(sol.value.grid(t).dim(), 2);
        for chunk in table.chunks(3) {
            assert!(chunk.iter().all(|v| (v - chunk[0]).abs() < 1e-12), "t={t} {chunk:?}");
        }
    }
    let memoryless = solve_priced_subproblem(
        &sub,
        &spec.noise,
        &PricedTerm::constant(vec![vec![0.3]; 3], 0),
        &InformationSpec::Constant,
        &pair_grid().units[0],
        1000,
        Execution::Sequential,
    )
    .unwrap();
    assert!((sol.initial_value - memoryless.initial_value).abs() < 1e-12);
}

#[test]
fn constant_cost_shift_moves_values_by_remaining_stages() {
    let spec = stochastic_pair();
    let mut shifted = spec.clone();
    for sub in &mut shifted.subsystems {
        let StageSeq::Constant(cost) = &mut sub.stage_cost else { unreachable!() };
        let CostTerm::Quadratic(f) = &mut cost.0[0] else { unreachable!() };
        f.constant += 0.75;
    }
    let a = solve_global_dp(&spec, &pair_grid(), Execution::Parallel).unwrap();
    let b = solve_global_dp(&shifted, &pair_grid(), Execution::Parallel).unwrap();
    for t in 0..=3 {
        let c = 2.0 * 0.75 * (3 - t) as f64;
        for (va, vb) in a.value.table(t).iter().zip(b.value.table(t)) {
            assert!((vb - va - c).abs() < 1e-9);
        }
    }
}

#[test]
fn infeasible_grid_is_reported() {
    let mut spec = deterministic(1);
    spec.subsystems[0].control_bounds = BoxBounds::constant(&[2.0], &[3.0]);
    let err = solve_global_dp(&spec, &grid(5, 3), Execution::Sequential).unwrap_err();
    assert_eq!(err, Error::InfeasibleOnGrid);
    assert_eq!(err.to_string(), "problem infeasible on grid");
}

#[test]
fn grid_cap_is_enforced() {
    let mut g = grid(5, 5);
    g.node_cap = 4;
    let err = solve_global_dp(&deterministic(1), &g, Execution::Sequential).unwrap_err();
    assert!(matches!(err, Error::GridCap { nodes: 5, cap: 4 }));
    assert!(err.to_string().contains("decompose the problem or coarsen the grid"));
}

#[test]
fn ties_pick_the_smallest_control() {
    let mut spec = deterministic(1);
    spec.subsystems[0].stage_cost = StageSeq::Constant(Cost::zero());
    spec.subsystems[0].final_cost = Cost::zero();
    let sol = solve_global_dp(&spec, &grid(5, 5), Execution::Sequential).unwrap();
    let d = sol.policy.decide(0, &[&[1.0]], &[0.0], None).unwrap();
    assert_eq!(d.controls, vec![vec![0.0]]);
}

#[test]
fn no_feasible_control_falls_back_towards_the_box() {
    let sol = solve_global_dp(&deterministic(1), &grid(5, 5), Execution::Sequential).unwrap();
    // from x = 3 the best reachable state is 2, still outside [0, 1]
    let d = sol.policy.decide(0, &[&[3.0]], &[0.0], None).unwrap();
    assert!(d.fallback);
    assert_eq!(d.controls, vec![vec![1.0]]);
}

#[test]
fn coupled_global_dp_respects_the_constraint() {
    let mut spec = stochastic_pair();
    for (i, sub) in spec.subsystems.iter_mut().enumerate() {
        let sign = if i == 0 { 1.0 } else { -1.0 };
        sub.coupling = StageSeq::Constant(Coupling::Affine {
            gx: None,
            gu: Some(Matrix::from_rows(&[vec![sign]]).unwrap()),
            gw: None,
            c: None,
        });
    }
    spec.coupling.dimension = 1;
    let g = GridConfig::new(vec![
        UnitGrid { state_nodes: vec![9], control_nodes: vec![3] },
        UnitGrid { state_nodes: vec![7], control_nodes: vec![3] },
    ]);
    let sol = solve_global_dp(&spec, &g, Execution::Sequential).unwrap();
    let d = sol.policy.decide(0, &[&[2.0], &[1.0]], &[1.0, 0.0], None).unwrap();
    assert!((d.controls[0][0] - d.controls[1][0]).abs() < 1e-12);
}

#[test]
fn value_csv_has_one_row_per_node() {
    let sol = solve_global_dp(&deterministic(1), &grid(5, 5), Execution::Sequential).unwrap();
    let mut buf = Vec::new();
    sol.value.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + 10);
    assert!(text.starts_with("t,x0,value\n"));
}
