use serde::{Deserialize, Serialize};

use super::{stateless_unit, Marginal};
use crate::error::{Error, Result};
use crate::model::{storage_unit, CouplingSpec, GridConfig, NoiseClass, NoiseModel, ProblemSpec, StageDistribution, UnitGrid};

const DEFAULTS: &str = include_str!("three_unit_defaults.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridNodes {
    pub state: usize,
    pub hydro_control: usize,
    pub thermal_control: usize,
}

/// Two hydro plants and a thermal plant meeting a random demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeUnitParams {
    pub horizon: usize,
    /// Hydro cost `ε u²`.
    pub epsilon: f64,
    /// Thermal cost `k u²`.
    pub thermal_quadratic: f64,
    pub thermal_upper: f64,
    pub stock_lower: f64,
    pub stock_upper: f64,
    pub initial_stock: f64,
    pub control_upper: f64,
    /// Final cost `w (x − target)²` on each stock.
    pub final_weight: f64,
    pub final_target: f64,
    pub demand: Marginal,
    pub inflows: Marginal,
    pub grid: GridNodes,
}

impl Default for ThreeUnitParams {
    fn default() -> Self {
        serde_json::from_str(DEFAULTS).expect("embedded defaults parse")
    }
}

impl ThreeUnitParams {
    /// `(α, c)`: the Lagrangian is strongly convex in the controls with
    /// modulus `min(2ε, 2k)` and the coupling `u¹ + u² + u³` is `√3`-Lipschitz.
    pub fn step_constants(&self) -> (f64, f64) {
        ((2.0 * self.epsilon).min(2.0 * self.thermal_quadratic), 3f64.sqrt())
    }
}

/// Noise `w = (a¹, a², d)`; hydro `x' = x − u + a`, thermal stateless with
/// the demand folded into its coupling `u³ − d`.
pub fn make_three_unit(params: &ThreeUnitParams) -> Result<ProblemSpec> {
    if !(params.epsilon > 0.0) {
        return Err(Error::InvalidArgument("strong convexity requires ε>0".into()));
    }
    if !(params.thermal_quadratic >= 0.0 && params.thermal_upper >= 0.0) {
        return Err(Error::InvalidArgument("thermal cost and upper bound must be non-negative".into()));
    }
    if params.horizon == 0 || params.stock_lower > params.stock_upper || params.control_upper < 0.0 {
        return Err(Error::InvalidArgument("horizon, stock bounds or control bound are invalid".into()));
    }
    params.demand.check("demand")?;
    params.inflows.check("inflow")?;
    let inflow = (params.inflows.values.clone(), params.inflows.probabilities());
    let demand = (params.demand.values.clone(), params.demand.probabilities());
    let stage = StageDistribution::product(&[inflow.clone(), inflow, demand]);
    let hydro = |i: usize| {
        storage_unit(
            &format!("hydro{}", i + 1),
            Some(i),
            3,
            params.epsilon,
            params.final_weight,
            params.final_target,
            params.initial_stock,
            (params.stock_lower, params.stock_upper),
            (0.0, params.control_upper),
        )
    };
    Ok(ProblemSpec {
        name: Some("three_unit".into()),
        horizon: params.horizon,
        noise: NoiseModel {
            stages: vec![stage; params.horizon],
            partition: vec![NoiseClass::Local(0), NoiseClass::Local(1), NoiseClass::Global],
        },
        subsystems: vec![
            hydro(0),
            hydro(1),
            stateless_unit("thermal", params.thermal_quadratic, 0.0, params.thermal_upper, Some(2), 3),
        ],
        coupling: CouplingSpec { dimension: 1 },
        discretization: Some(three_unit_grids(params)),
    })
}

pub fn three_unit_grids(params: &ThreeUnitParams) -> GridConfig {
    let hydro = UnitGrid { state_nodes: vec![params.grid.state], control_nodes: vec![params.grid.hydro_control] };
    GridConfig::new(vec![
        hydro.clone(),
        hydro,
        UnitGrid { state_nodes: vec![], control_nodes: vec![params.grid.thermal_control] },
    ])
}
