use super::*;
use crate::dp::solve_global_dp;
use crate::exec::Execution;
use crate::model::{validate_problem, CostTerm, QuadraticForm};
use crate::scenario::{enumerate_scenarios, Scenario};

fn strugarek_params(n: usize) -> StrugarekParams {
    let costs = [1.0, 2.0, 0.5][..n].to_vec();
    let inflows = [Marginal::uniform(vec![0.0, 2.0]), Marginal::uniform(vec![1.0, 2.0]), Marginal::uniform(vec![0.5, 1.5])][..n].to_vec();
    StrugarekParams::proportional(costs, 0.5, 3, vec![5.0; n], Marginal::uniform(vec![1.0, 3.0]), inflows)
}

/// Scenario of every leaf of the tree, in leaf order.
fn leaf_paths(tree: &ScenarioTree) -> Vec<(Vec<usize>, Scenario)> {
    let last = tree.horizon() - 1;
    tree.stage_nodes(last)
        .map(|leaf| {
            let path = tree.path(leaf);
            let noises = path.iter().map(|&id| tree.nodes[id].noise.clone()).collect();
            (path, Scenario { noises })
        })
        .collect()
}

fn max_relative_error(params: &StrugarekParams, tree: &ScenarioTree, multipliers: &[Vec<f64>]) -> f64 {
    let mut worst = 0f64;
    for (path, sc) in leaf_paths(tree) {
        let oracle = strugarek_price_oracle(params, &sc).unwrap();
        for (t, id) in path.iter().enumerate() {
            let ours = -multipliers[*id][0];
            worst = worst.max((ours - oracle[t]).abs() / oracle[t].abs().max(1.0));
        }
    }
    worst
}

#[test]
fn marginal_defaults_to_uniform() {
    let m = Marginal::uniform(vec![1.0, 2.0, 6.0]);
    assert_eq!(m.probabilities(), vec![1.0 / 3.0; 3]);
    assert!((m.mean() - 3.0).abs() < 1e-15);
    assert!(Marginal { values: vec![1.0], probabilities: Some(vec![0.5]) }.check("x").is_err());
}

#[test]
fn oracle_matches_single_reservoir_kkt() {
    let params = strugarek_params(1);
    let spec = make_strugarek(&params).unwrap();
    let tree = ScenarioTree::new(&spec.noise, 1000).unwrap();
    let kkt = TreeLq::build(&spec, tree.clone()).unwrap().kkt().unwrap();
    assert!(max_relative_error(&params, &tree, &kkt.multipliers) <= 1e-9);
}

#[test]
fn oracle_matches_deterministic_kkt() {
    let mut params = strugarek_params(2);
    params.horizon = 5;
    params.demand = Marginal::uniform(vec![2.0]);
    params.inflows = vec![Marginal::uniform(vec![1.0]), Marginal::uniform(vec![0.5])];
    let spec = make_strugarek(&params).unwrap();
    let tree = ScenarioTree::new(&spec.noise, 1000).unwrap();
    assert_eq!(tree.len(), 4);
    let kkt = TreeLq::build(&spec, tree.clone()).unwrap().kkt().unwrap();
    assert!(max_relative_error(&params, &tree, &kkt.multipliers) <= 1e-9);
}

#[test]
fn tree_uzawa_duals_match_oracle() {
    let params = strugarek_params(2);
    let spec = make_strugarek(&params).unwrap();
    let tree = ScenarioTree::new(&spec.noise, 1000).unwrap();
    let lq = TreeLq::build(&spec, tree.clone()).unwrap();
    let uz = lq.uzawa(0.5, 10_000, 1e-12).unwrap();
    assert!(uz.max_residual <= 1e-12);
    assert!(max_relative_error(&params, &tree, &uz.multipliers) <= 1e-6);
    for w in uz.duals.windows(2) {
        assert!(w[1] >= w[0] - 1e-10);
    }
    let kkt = lq.kkt().unwrap();
    assert!((uz.duals.last().unwrap() - kkt.value).abs() <= 1e-8 * kkt.value.abs().max(1.0));
}

#[test]
fn oracle_is_affine_in_demand() {
    let params = strugarek_params(2);
    let base = Scenario { noises: vec![vec![1.0, 0.0, 0.0], vec![3.0, 2.0, 1.0]] };
    let mut bumped = base.clone();
    bumped.noises[1][0] += 1.0;
    let mut twice = base.clone();
    twice.noises[1][0] += 2.0;
    let (a, b, c) = (
        strugarek_price_oracle(&params, &base).unwrap(),
        strugarek_price_oracle(&params, &bumped).unwrap(),
        strugarek_price_oracle(&params, &twice).unwrap(),
    );
    assert_eq!(a[0], b[0]);
    assert!(((c[1] - b[1]) - (b[1] - a[1])).abs() < 1e-12);
    assert!(b[1] > a[1]);
}

#[test]
fn strugarek_rejects_penalty_mismatch() {
    let mut params = strugarek_params(2);
    params.gammas[0] += 1.0;
    assert!(make_strugarek(&params).is_err());
}

#[test]
fn tree_value_equals_global_dp_on_tiny_instance() {
    let (spec, grids) = tiny_instance();
    let dp = solve_global_dp(&spec, &grids, Execution::Sequential).unwrap();
    let tp = TreeProblem::new(&spec, &grids).unwrap();
    let tree = tree_exact_solve(&tp, Execution::Parallel).unwrap();
    assert_eq!(dp.initial_value.to_bits(), tree.value.to_bits());
    assert_eq!(tree.controls.len(), tp.tree.len());
    for (id, node) in tp.tree.nodes.iter().enumerate() {
        let u: f64 = tree.controls[id].iter().map(|c| c[0]).sum();
        assert!((u - node.noise[1]).abs() < 1e-9);
    }
}

#[test]
fn tree_value_is_separable_for_uncoupled_units() {
    let (spec, grids) = tiny_instance();
    let mut spec = spec;
    for s in &mut spec.subsystems {
        s.coupling = StageSeq::Constant(Coupling::Zero);
    }
    let joint = tree_exact_solve(&TreeProblem::new(&spec, &grids).unwrap(), Execution::Sequential).unwrap().value;
    let mut sum = 0.0;
    for i in 0..2 {
        let mut solo = spec.clone();
        solo.subsystems = vec![spec.subsystems[i].clone()];
        let g = GridConfig::new(vec![grids.units[i].clone()]);
        sum += tree_exact_solve(&TreeProblem::new(&solo, &g).unwrap(), Execution::Sequential).unwrap().value;
    }
    assert!((joint - sum).abs() < 1e-12);
}

#[test]
fn constant_cost_shift_moves_tree_value() {
    let (spec, grids) = tiny_instance();
    let base = tree_exact_solve(&TreeProblem::new(&spec, &grids).unwrap(), Execution::Sequential).unwrap().value;
    let mut shifted = spec.clone();
    if let StageSeq::Constant(cost) = &mut shifted.subsystems[1].stage_cost {
        cost.0.push(CostTerm::Quadratic(QuadraticForm { constant: 0.25, ..Default::default() }));
    }
    let v = tree_exact_solve(&TreeProblem::new(&shifted, &grids).unwrap(), Execution::Sequential).unwrap().value;
    assert!((v - base - 0.75).abs() < 1e-12);
}

#[test]
fn infeasible_tree_reports_node() {
    let (mut spec, grids) = tiny_instance();
    spec.subsystems[1].control_bounds = BoxBounds::constant(&[0.0], &[0.0]);
    spec.subsystems[0].control_bounds = BoxBounds::constant(&[0.0], &[0.5]);
    let g = GridConfig::new(vec![
        UnitGrid { state_nodes: vec![9], control_nodes: vec![2] },
        UnitGrid { state_nodes: vec![], control_nodes: vec![1] },
    ]);
    let _ = grids;
    assert!(matches!(
        tree_exact_solve(&TreeProblem::new(&spec, &g).unwrap(), Execution::Sequential),
        Err(crate::error::Error::InfeasibleNode(_))
    ));
}

#[test]
fn tree_search_respects_cap() {
    let spec = make_independent_suite(2, true).unwrap();
    let tp = TreeProblem::new(&spec, &independent_grids(2)).unwrap();
    assert!(matches!(tree_exact_solve(&tp, Execution::Sequential), Err(crate::error::Error::TreeCap { .. })));
}

#[test]
fn tree_numbering_is_stage_major() {
    let spec = tiny_instance().0;
    let tree = ScenarioTree::new(&spec.noise, 100).unwrap();
    assert_eq!(tree.len(), 2 + 4 + 8);
    assert_eq!(tree.children(0), 2..4);
    assert_eq!(tree.children(1), 4..6);
    assert_eq!(tree.path(13), vec![1, 5, 13]);
    assert!(ScenarioTree::new(&spec.noise, 10).is_err());
}

#[test]
fn perfect_memory_distinguishes_every_prefix() {
    let spec = tiny_instance().0;
    let info = perfect_memory_info(&spec.noise, 0).unwrap();
    assert!(info.errors(spec.horizon, spec.noise.dim()).is_empty());
    let scen = enumerate_scenarios(&spec.noise, 100).unwrap();
    for t in 0..3 {
        let mut ys: Vec<f64> = scen.scenarios.iter().map(|s| info.path(&s.noises)[t][0]).collect();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        assert_eq!(ys, (0..1usize << (t + 1)).map(|v| v as f64).collect::<Vec<_>>());
    }
    let mut uneven = spec.noise.clone();
    uneven.stages[0] = StageDistribution::uniform(vec![vec![0.0, 1.0], vec![3.0, 2.0]]);
    assert!(perfect_memory_info(&uneven, 0).is_err());
}

#[test]
fn independent_suite_shapes() {
    assert!(make_independent_suite(1, false).is_err());
    let s = make_independent_suite(3, true).unwrap();
    assert!(validate_problem(&s).is_valid());
    assert_eq!(s.noise.dim(), 4);
    assert_eq!(s.unit_count(), 3);
}

#[test]
fn three_unit_defaults_are_valid() {
    let p = ThreeUnitParams::default();
    let spec = make_three_unit(&p).unwrap();
    assert!(validate_problem(&spec).is_valid());
    assert_eq!(spec.horizon, 25);
    assert_eq!(spec.noise.stage(0).len(), 27);
    let (alpha, c) = p.step_constants();
    assert!((alpha - 0.02).abs() < 1e-15);
    assert!((c - 3f64.sqrt()).abs() < 1e-15);
    assert!(make_three_unit(&ThreeUnitParams { epsilon: 0.0, ..p }).unwrap_err().to_string().contains("ε>0"));
}

#[test]
fn multistock_generates_requested_dimensions() {
    let spec = make_multistock(7, 163, 42).unwrap();
    assert!(validate_problem(&spec).is_valid());
    assert_eq!(spec.unit_count(), 8);
    assert_eq!(spec.horizon, 163);
    assert_eq!(spec.noise.dim(), 9);
    assert_eq!(spec, make_multistock(7, 163, 42).unwrap());
    assert_ne!(spec, make_multistock(7, 163, 43).unwrap());
    assert!(make_multistock(0, 10, 1).is_err());
    assert!(make_multistock(2, 1, 1).is_err());
}

#[test]
fn multistock_states_stay_on_grid() {
    let spec = make_multistock(1, 2, 9).unwrap();
    let grids = spec.discretization.clone().unwrap();
    let dp = solve_global_dp(&spec, &grids, Execution::Parallel).unwrap();
    assert!(dp.initial_value.is_finite());
    let tp = TreeProblem::new(&spec, &grids).unwrap();
    assert_eq!(tree_exact_solve(&tp, Execution::Parallel).unwrap().value.to_bits(), dp.initial_value.to_bits());
}
