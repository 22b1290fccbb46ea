use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::catalog::{Cost, Coupling, Dynamics, Matrix};
use super::noise::NoiseModel;

/// A bound value; serialized as a number or as `"inf"` / `"-inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound(pub f64);

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Bound(v)),
            Raw::Text(s) => match s.as_str() {
                "inf" | "+inf" | "infinity" => Ok(Bound(f64::INFINITY)),
                "-inf" | "-infinity" => Ok(Bound(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("invalid bound {other:?}"))),
            },
        }
    }
}

/// Bound vector, either stage-invariant or given per stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundSeq {
    Constant(Vec<Bound>),
    PerStage(Vec<Vec<Bound>>),
}

impl Default for BoundSeq {
    fn default() -> Self {
        BoundSeq::Constant(Vec::new())
    }
}

impl BoundSeq {
    pub fn constant(values: &[f64]) -> Self {
        BoundSeq::Constant(values.iter().map(|v| Bound(*v)).collect())
    }

    pub fn at(&self, t: usize) -> Vec<f64> {
        let v = match self {
            BoundSeq::Constant(v) => v,
            BoundSeq::PerStage(stages) => &stages[t.min(stages.len().saturating_sub(1))],
        };
        v.iter().map(|b| b.0).collect()
    }

    pub fn stage_count(&self) -> Option<usize> {
        match self {
            BoundSeq::Constant(_) => None,
            BoundSeq::PerStage(s) => Some(s.len()),
        }
    }

    fn is_empty_seq(&self) -> bool {
        matches!(self, BoundSeq::PerStage(s) if s.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct BoxBounds {
    #[serde(default)]
    pub lower: BoundSeq,
    #[serde(default)]
    pub upper: BoundSeq,
}

impl BoxBounds {
    pub fn constant(lower: &[f64], upper: &[f64]) -> Self {
        BoxBounds { lower: BoundSeq::constant(lower), upper: BoundSeq::constant(upper) }
    }

    pub fn unbounded(dim: usize) -> Self {
        BoxBounds::constant(&vec![f64::NEG_INFINITY; dim], &vec![f64::INFINITY; dim])
    }

    pub fn at(&self, t: usize) -> (Vec<f64>, Vec<f64>) {
        (self.lower.at(t), self.upper.at(t))
    }
}

/// A mapping that is either stage-invariant or listed per stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StageSeq<T> {
    PerStage { per_stage: Vec<T> },
    Constant(T),
}

impl<T: Default> Default for StageSeq<T> {
    fn default() -> Self {
        StageSeq::Constant(T::default())
    }
}

impl<T> StageSeq<T> {
    pub fn at(&self, t: usize) -> &T {
        match self {
            StageSeq::Constant(v) => v,
            StageSeq::PerStage { per_stage } => &per_stage[t.min(per_stage.len() - 1)],
        }
    }

    pub fn stage_count(&self) -> Option<usize> {
        match self {
            StageSeq::Constant(_) => None,
            StageSeq::PerStage { per_stage } => Some(per_stage.len()),
        }
    }

    pub fn all(&self) -> Vec<&T> {
        match self {
            StageSeq::Constant(v) => vec![v],
            StageSeq::PerStage { per_stage } => per_stage.iter().collect(),
        }
    }
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics::Affine { a: Matrix::zeros(0, 0), b: Matrix::zeros(0, 0), e: None, c: None }
    }
}

/// One unit of a decomposable problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsystemSpec {
    #[serde(default)]
    pub name: String,
    pub state_dim: usize,
    pub control_dim: usize,
    #[serde(default)]
    pub initial_state: Vec<f64>,
    #[serde(default)]
    pub dynamics: StageSeq<Dynamics>,
    #[serde(default)]
    pub stage_cost: StageSeq<Cost>,
    #[serde(default)]
    pub final_cost: Cost,
    #[serde(default)]
    pub coupling: StageSeq<Coupling>,
    #[serde(default)]
    pub state_bounds: BoxBounds,
    #[serde(default)]
    pub control_bounds: BoxBounds,
}

impl SubsystemSpec {
    pub fn next_state(&self, t: usize, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        self.dynamics.at(t).eval(x, u, w, &mut out);
        out
    }

    /// Stage cost at `(x, u, w)`; `scratch` holds the stacked argument.
    pub fn stage_cost_with(&self, t: usize, x: &[f64], u: &[f64], w: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.extend_from_slice(x);
        scratch.extend_from_slice(u);
        scratch.extend_from_slice(w);
        self.stage_cost.at(t).eval(scratch, w)
    }

    pub fn stage_cost(&self, t: usize, x: &[f64], u: &[f64], w: &[f64]) -> f64 {
        self.stage_cost_with(t, x, u, w, &mut Vec::new())
    }

    pub fn final_cost(&self, x: &[f64]) -> f64 {
        self.final_cost.eval(x, &[])
    }

    pub fn coupling(&self, t: usize, x: &[f64], u: &[f64], w: &[f64], d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        self.coupling.at(t).eval(x, u, w, &mut out);
        out
    }

    pub fn state_box(&self, t: usize) -> (Vec<f64>, Vec<f64>) {
        if self.state_dim == 0 {
            return (Vec::new(), Vec::new());
        }
        self.state_bounds.at(t)
    }

    pub fn control_box(&self, t: usize) -> (Vec<f64>, Vec<f64>) {
        self.control_bounds.at(t)
    }

    /// Noise coordinates this unit's mappings depend on at stage `t`.
    pub fn noise_support(&self, t: usize, noise_dim: usize) -> Vec<usize> {
        let offset = self.state_dim + self.control_dim;
        let mut coords: Vec<usize> = self.dynamics.at(t).noise_support();
        coords.extend(self.coupling.at(t).noise_support());
        let cost = self.stage_cost.at(t);
        coords.extend((0..noise_dim).filter(|&j| cost.touches(offset + j, offset)));
        coords.sort_unstable();
        coords.dedup();
        coords
    }

    pub(crate) fn shape_errors(&self, t: usize, d: usize, q: usize) -> Vec<String> {
        let (n, m) = (self.state_dim, self.control_dim);
        let mut errs = self.dynamics.at(t).shape_errors(n, m, q);
        errs.extend(self.stage_cost.at(t).shape_errors(n + m + q, q));
        errs.extend(self.coupling.at(t).shape_errors(d, n, m, q));
        errs
    }

    pub(crate) fn bound_seqs(&self) -> [(&BoundSeq, usize, &'static str); 4] {
        [
            (&self.state_bounds.lower, self.state_dim, "state lower bound"),
            (&self.state_bounds.upper, self.state_dim, "state upper bound"),
            (&self.control_bounds.lower, self.control_dim, "control lower bound"),
            (&self.control_bounds.upper, self.control_dim, "control upper bound"),
        ]
    }

    pub(crate) fn has_empty_bound_seq(&self) -> bool {
        self.bound_seqs().iter().any(|(s, _, _)| s.is_empty_seq())
    }
}

/// Node counts for the state and control grids of one unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitGrid {
    pub state_nodes: Vec<usize>,
    pub control_nodes: Vec<usize>,
}

/// Per-unit discretization used by the grid solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub units: Vec<UnitGrid>,
    /// Maximum number of nodes of any value table.
    #[serde(default = "default_grid_cap")]
    pub node_cap: usize,
}

fn default_grid_cap() -> usize {
    2_000_000
}

impl GridConfig {
    pub fn new(units: Vec<UnitGrid>) -> Self {
        GridConfig { units, node_cap: default_grid_cap() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub dimension: usize,
}

/// Decomposable problem: units coupled by `Σ_i g_t^i(x, u, w) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub horizon: usize,
    pub noise: NoiseModel,
    pub subsystems: Vec<SubsystemSpec>,
    pub coupling: CouplingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discretization: Option<GridConfig>,
}

impl ProblemSpec {
    pub fn coupling_dim(&self) -> usize {
        self.coupling.dimension
    }

    pub fn unit_count(&self) -> usize {
        self.subsystems.len()
    }

    /// Stage residual `Σ_i g_t^i`.
    pub fn residual(&self, t: usize, states: &[Vec<f64>], controls: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
        let d = self.coupling_dim();
        let mut r = vec![0.0; d];
        for (i, sub) in self.subsystems.iter().enumerate() {
            let g = sub.coupling(t, &states[i], &controls[i], w, d);
            for (ri, gi) in r.iter_mut().zip(g) {
                *ri += gi;
            }
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }
}
