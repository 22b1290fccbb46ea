//! Benchmark generators and exact oracles.

mod lq;
mod multistock;
mod strugarek;
mod three_unit;
mod tree;

pub use lq::{TreeKkt, TreeLq, TreeUzawa};
pub use multistock::{make_multistock, multistock_grids};
pub use strugarek::{make_strugarek, strugarek_price_oracle, StrugarekParams};
pub use three_unit::{make_three_unit, three_unit_grids, GridNodes, ThreeUnitParams};
pub use tree::{tree_exact_solve, ScenarioTree, TreeNode, TreeProblem, TreeSolution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    diagonal_quadratic, storage_unit, AffineMap, BoxBounds, Cost, Coupling, CouplingSpec, Dynamics, GridConfig, InfoGrid,
    InformationSpec, Matrix, NoiseClass, NoiseModel, ProblemSpec, StageDistribution, StageSeq, SubsystemSpec, UnitGrid,
};

/// Finite law of a scalar; equal probabilities when none are given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

impl Marginal {
    pub fn uniform(values: Vec<f64>) -> Self {
        Marginal { values, probabilities: None }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        match &self.probabilities {
            Some(p) => p.clone(),
            None => vec![1.0 / self.values.len() as f64; self.values.len()],
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(self.probabilities()).map(|(v, p)| v * p).sum()
    }

    fn check(&self, what: &str) -> Result<()> {
        let p = self.probabilities();
        if self.values.is_empty() || p.len() != self.values.len() || p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("{what} law must have matching non-negative probabilities summing to 1")));
        }
        Ok(())
    }
}

/// Unit without state: cost `k u²` on `u ∈ [lo, hi]`, coupling
/// `u − w_j` (or `u` with no coordinate).
pub fn stateless_unit(name: &str, k: f64, lo: f64, hi: f64, demand_coord: Option<usize>, noise_dim: usize) -> SubsystemSpec {
    SubsystemSpec {
        name: name.to_string(),
        state_dim: 0,
        control_dim: 1,
        initial_state: vec![],
        dynamics: StageSeq::Constant(Dynamics::default()),
        stage_cost: StageSeq::Constant(diagonal_quadratic(1 + noise_dim, &[(0, 2.0 * k)], &[], 0.0)),
        final_cost: Cost::zero(),
        coupling: StageSeq::Constant(Coupling::Affine {
            gx: None,
            gu: Some(Matrix::identity(1)),
            gw: demand_coord.map(|j| Matrix::sparse(1, noise_dim, &[(0, j, -1.0)])),
            c: None,
        }),
        state_bounds: BoxBounds::constant(&[], &[]),
        control_bounds: BoxBounds::constant(&[lo], &[hi]),
    }
}

/// Small hydro-thermal instance whose states stay on grid nodes: `T = 3`,
/// `(a, d) ∈ {(0, 1), (1, 2)}` equally likely, hydro `x' = x − u + a` on
/// `[0, 4]` with cost `½u²` and final cost `½(x − 2)²`, thermal cost `2u²`
/// on `[0, 4]`, and `u_hydro + u_thermal = d`.
///
/// The Lagrangian is strongly convex in the controls with modulus 1 and the
/// coupling has Lipschitz constant `√2`, so steps below 1 are admissible.
pub fn tiny_instance() -> (ProblemSpec, GridConfig) {
    let noise = NoiseModel {
        stages: vec![StageDistribution::uniform(vec![vec![0.0, 1.0], vec![1.0, 2.0]]); 3],
        partition: vec![NoiseClass::Global, NoiseClass::Global],
    };
    let spec = ProblemSpec {
        name: Some("tiny".into()),
        horizon: 3,
        noise,
        subsystems: vec![
            storage_unit("hydro", Some(0), 2, 0.5, 0.5, 2.0, 2.0, (0.0, 4.0), (0.0, 2.0)),
            stateless_unit("thermal", 2.0, 0.0, 4.0, Some(1), 2),
        ],
        coupling: CouplingSpec { dimension: 1 },
        discretization: None,
    };
    let grids = GridConfig::new(vec![
        UnitGrid { state_nodes: vec![9], control_nodes: vec![5] },
        UnitGrid { state_nodes: vec![], control_nodes: vec![9] },
    ]);
    (spec, grids)
}

/// `(α, c)` of [`tiny_instance`].
pub const TINY_STEP_CONSTANTS: (f64, f64) = (1.0, std::f64::consts::SQRT_2);

/// Information that remembers the whole noise path: with `k` equally spaced
/// values of coordinate `coord`, `y_t = k·y_{t−1} + index(w_t)`, which takes
/// a distinct integer on every path prefix.
pub fn perfect_memory_info(noise: &NoiseModel, coord: usize) -> Result<InformationSpec> {
    let values = |st: &StageDistribution| {
        let mut v: Vec<f64> = st.points.iter().map(|p| p[coord]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let first = values(noise.stage(0));
    if noise.stages.iter().any(|st| values(st) != first || st.len() != first.len()) {
        return Err(Error::InvalidArgument("perfect memory needs the same distinct values of the coordinate at every stage".into()));
    }
    let k = first.len();
    let delta = if k > 1 { first[1] - first[0] } else { 1.0 };
    if first.windows(2).any(|w| ((w[1] - w[0]) - delta).abs() > 1e-12 * delta.abs().max(1.0)) {
        return Err(Error::InvalidArgument("perfect memory needs equally spaced values".into()));
    }
    let q = noise.dim();
    let index = AffineMap { a: None, b: Matrix::sparse(1, q, &[(0, coord, 1.0 / delta)]), c: Some(vec![-first[0] / delta]) };
    let transition = AffineMap { a: Some(Matrix::from_rows(&[vec![k as f64]]).expect("1x1")), ..index.clone() };
    let grids = (0..noise.horizon())
        .map(|t| {
            let nodes = k.pow(t as u32 + 1);
            InfoGrid { lower: vec![0.0], upper: vec![(nodes - 1) as f64], nodes: vec![nodes] }
        })
        .collect();
    Ok(InformationSpec::Markovian { initial: index, transition, grids })
}

/// `n` uncoupled storage units over `T = 4` stages, each with its own
/// inflow in `{0, 1}`; with `shared_noise` a common inflow `z ∈ {0, 1}` is
/// added to every unit. All states stay on the nodes of [`independent_grids`].
pub fn make_independent_suite(n: usize, shared_noise: bool) -> Result<ProblemSpec> {
    if n < 2 {
        return Err(Error::InvalidArgument("an independent suite needs at least two subsystems".into()));
    }
    let q = n + usize::from(shared_noise);
    let local = if shared_noise { 1 } else { 0 };
    let marginals: Vec<(Vec<f64>, Vec<f64>)> = (0..q).map(|_| (vec![0.0, 1.0], vec![0.5, 0.5])).collect();
    let mut partition = Vec::with_capacity(q);
    if shared_noise {
        partition.push(NoiseClass::Global);
    }
    partition.extend((0..n).map(NoiseClass::Local));
    let subsystems = (0..n)
        .map(|i| {
            let mut unit = storage_unit(
                &format!("unit{i}"),
                Some(local + i),
                q,
                0.1 * (i + 1) as f64,
                0.2 + 0.1 * i as f64,
                3.0,
                2.0 + 0.5 * i as f64,
                (0.0, 6.0),
                (0.0, 2.0),
            );
            if let (true, StageSeq::Constant(Dynamics::Affine { e: Some(e), .. })) = (shared_noise, &mut unit.dynamics) {
                e.set(0, 0, 1.0);
            }
            unit.coupling = StageSeq::Constant(Coupling::Zero);
            unit
        })
        .collect();
    Ok(ProblemSpec {
        name: Some(format!("independent{n}{}", if shared_noise { "_shared" } else { "" })),
        horizon: 4,
        noise: NoiseModel { stages: vec![StageDistribution::product(&marginals); 4], partition },
        subsystems,
        coupling: CouplingSpec { dimension: 1 },
        discretization: None,
    })
}

pub fn independent_grids(n: usize) -> GridConfig {
    GridConfig::new(vec![UnitGrid { state_nodes: vec![13], control_nodes: vec![5] }; n])
}

#[cfg(test)]
mod tests;
