//! Grid dynamic programming in hazard-decision form: the global recursion
//! over all units, and priced single-unit subproblems under an information
//! variable (memoryless or Markovian).

mod grid;
pub(crate) mod search;

use std::io::Write;
use std::sync::Arc;

pub use grid::{Axis, Grid};
pub(crate) use search::{fallback_indices, search_joint, CouplingRule, Resolver, UnitCandidates, UnitModel};

use crate::condexp::Estimator;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{validate_problem, GridConfig, InformationSpec, NoiseModel, ProblemSpec, SubsystemSpec, UnitGrid};

/// Per-stage price `λ̂_t(y_t) ∈ R^d`, the conditional mean of the multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct PricedTerm {
    dim: usize,
    stages: Vec<Estimator>,
}

impl PricedTerm {
    pub fn new(dim: usize, stages: Vec<Estimator>) -> Result<Self> {
        if stages.iter().any(|e| e.output_dim() != dim) {
            return Err(Error::InvalidArgument(format!("every stage price must have dimension {dim}")));
        }
        Ok(PricedTerm { dim, stages })
    }

    pub fn zero(horizon: usize, dim: usize, info_dim: usize) -> Self {
        Self::constant(vec![vec![0.0; dim]; horizon], info_dim)
    }

    /// Price that ignores the information, one vector per stage.
    pub fn constant(values: Vec<Vec<f64>>, info_dim: usize) -> Self {
        let dim = values.first().map_or(0, Vec::len);
        PricedTerm { dim, stages: values.into_iter().map(|v| Estimator::constant(v, info_dim)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, t: usize) -> &Estimator {
        &self.stages[t]
    }

    pub fn price(&self, t: usize, y: &[f64]) -> Vec<f64> {
        self.stages[t].predict_unchecked(y)
    }
}

/// Value tables `V_0..V_T` on per-stage grids. In Markovian mode the grid of
/// stage `t ≥ 1` is the state grid times the information grid of `t − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction {
    state_dim: usize,
    grids: Vec<Grid>,
    tables: Vec<Vec<f64>>,
}

impl ValueFunction {
    pub fn horizon(&self) -> usize {
        self.tables.len() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn grid(&self, t: usize) -> &Grid {
        &self.grids[t]
    }

    pub fn table(&self, t: usize) -> &[f64] {
        &self.tables[t]
    }

    /// Writes `t, x..., y..., value` rows; absent coordinates are blank.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let info_dim = self.grids.iter().map(Grid::dim).max().unwrap_or(0) - self.state_dim;
        let mut header = vec!["t".to_string()];
        header.extend((0..self.state_dim).map(|j| format!("x{j}")));
        header.extend((0..info_dim).map(|j| format!("y{j}")));
        header.push("value".into());
        w.write_record(&header)?;
        let mut p = Vec::new();
        for (t, (g, table)) in self.grids.iter().zip(&self.tables).enumerate() {
            for (node, v) in table.iter().enumerate() {
                g.point_into(node, &mut p);
                let mut row = vec![t.to_string()];
                row.extend(p.iter().map(|c| format!("{c:?}")));
                row.extend((p.len()..self.state_dim + info_dim).map(|_| String::new()));
                row.push(if v.is_finite() { format!("{v:?}") } else { "inf".into() });
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Multilinear interpolation of `V_t` at `point = [x; y_{t-1}]`.
pub fn interpolate_value(v: &ValueFunction, t: usize, point: &[f64]) -> Result<f64> {
    if t > v.horizon() {
        return Err(Error::InvalidArgument(format!("stage {t} beyond horizon {}", v.horizon())));
    }
    if point.len() != v.grids[t].dim() {
        return Err(Error::InvalidArgument(format!(
            "point has dimension {}, stage {t} grid has {}",
            point.len(),
            v.grids[t].dim()
        )));
    }
    v.grids[t].interpolate(&v.tables[t], point)
}

#[derive(Clone, Debug)]
struct Pricing {
    price: PricedTerm,
    info: InformationSpec,
    info_grids: Vec<Grid>,
}

#[derive(Debug)]
pub(crate) struct Engine {
    horizon: usize,
    units: Vec<UnitModel>,
    d: usize,
    resolvers: Vec<Option<Resolver>>,
    enforce: bool,
    pricing: Option<Pricing>,
    supports: Vec<Vec<(Vec<f64>, f64)>>,
    node_cap: usize,
}

impl Engine {
    fn global(spec: &ProblemSpec, grids: &GridConfig) -> Result<Self> {
        let units = UnitModel::build_all(&spec.subsystems, grids, spec.horizon)?;
        let d = spec.coupling_dim();
        let q = spec.noise.dim();
        let supports = (0..spec.horizon)
            .map(|t| {
                let mut coords: Vec<usize> = units.iter().flat_map(|u| u.spec.noise_support(t, q)).collect();
                coords.sort_unstable();
                coords.dedup();
                spec.noise.stage(t).marginalize(&coords)
            })
            .collect();
        let resolvers = (0..spec.horizon).map(|t| Resolver::find(&units, t, d)).collect();
        Ok(Engine {
            horizon: spec.horizon,
            units,
            d,
            resolvers,
            enforce: true,
            pricing: None,
            supports,
            node_cap: grids.node_cap,
        })
    }

    fn priced(
        sub: &SubsystemSpec,
        noise: &NoiseModel,
        price: &PricedTerm,
        info: &InformationSpec,
        grid: &UnitGrid,
        node_cap: usize,
    ) -> Result<Self> {
        let horizon = noise.horizon();
        if price.horizon() != horizon {
            return Err(Error::InvalidArgument(format!("price covers {} stages, horizon is {horizon}", price.horizon())));
        }
        if price.stages.iter().any(|e| e.input_dim() != info.dim()) {
            return Err(Error::InvalidArgument("price input dimension differs from the information dimension".into()));
        }
        let errs = info.errors(horizon, noise.dim());
        if !errs.is_empty() {
            return Err(Error::InvalidArgument(errs.join("; ")));
        }
        let unit = UnitModel::build(sub, grid, horizon)?;
        let q = noise.dim();
        let info_coords = info.noise_support();
        let supports = (0..horizon)
            .map(|t| {
                let mut coords = unit.spec.noise_support(t, q);
                coords.extend(&info_coords);
                coords.sort_unstable();
                coords.dedup();
                noise.stage(t).marginalize(&coords)
            })
            .collect();
        let info_grids = match info {
            InformationSpec::Markovian { grids, .. } => grids
                .iter()
                .map(|g| {
                    let axes = g
                        .lower
                        .iter()
                        .zip(&g.upper)
                        .zip(&g.nodes)
                        .map(|((l, u), n)| Axis::uniform(*l, *u, *n))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Grid::new(axes))
                })
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        Ok(Engine {
            horizon,
            units: vec![unit],
            d: price.dim(),
            resolvers: vec![None; horizon],
            enforce: false,
            pricing: Some(Pricing { price: price.clone(), info: info.clone(), info_grids }),
            supports,
            node_cap,
        })
    }

    fn state_dim(&self) -> usize {
        self.units.iter().map(|u| u.spec.state_dim).sum()
    }

    fn markovian(&self) -> Option<&Pricing> {
        self.pricing.as_ref().filter(|p| p.info.is_markovian())
    }

    fn value_grid(&self, t: usize) -> Grid {
        let mut parts: Vec<&Grid> = self.units.iter().map(|u| &u.state_grids[t]).collect();
        if let Some(p) = self.markovian() {
            if t >= 1 {
                parts.push(&p.info_grids[t - 1]);
            }
        }
        Grid::concat(&parts)
    }

    fn rule(&self, t: usize) -> CouplingRule<'_> {
        if self.enforce {
            CouplingRule::Enforce { resolver: self.resolvers[t].as_ref() }
        } else {
            CouplingRule::Free
        }
    }

    fn split_states<'a>(&self, x: &'a [f64]) -> Vec<&'a [f64]> {
        let mut out = Vec::with_capacity(self.units.len());
        let mut off = 0;
        for u in &self.units {
            out.push(&x[off..off + u.spec.state_dim]);
            off += u.spec.state_dim;
        }
        out
    }

    fn terminal(&self, grid: &Grid) -> Vec<f64> {
        let n = self.state_dim();
        let mut p = Vec::new();
        (0..grid.len())
            .map(|node| {
                grid.point_into(node, &mut p);
                let xs = self.split_states(&p[..n]);
                let mut acc = 0.0;
                for (u, x) in self.units.iter().zip(xs) {
                    acc += u.spec.final_cost(x);
                }
                acc
            })
            .collect()
    }

    fn backward(&self, exec: Execution) -> Result<ValueFunction> {
        let grids: Vec<Grid> = (0..=self.horizon).map(|t| self.value_grid(t)).collect();
        if let Some(g) = grids.iter().find(|g| g.len() > self.node_cap) {
            return Err(Error::GridCap { nodes: g.len(), cap: self.node_cap });
        }
        let mut tables = vec![Vec::new(); self.horizon + 1];
        tables[self.horizon] = self.terminal(&grids[self.horizon]);
        for t in (0..self.horizon).rev() {
            let table = match self.pricing {
                None => self.global_stage(t, &grids[t], &grids[t + 1], &tables[t + 1], exec),
                Some(_) => self.priced_stage(t, &grids[t], &grids[t + 1], &tables[t + 1], exec),
            }
            .map_err(|e| e.at_stage(t))?;
            tables[t] = table;
        }
        Ok(ValueFunction { state_dim: self.state_dim(), grids, tables })
    }

    fn global_stage(&self, t: usize, grid: &Grid, next_grid: &Grid, next: &[f64], exec: Execution) -> Result<Vec<f64>> {
        let support = &self.supports[t];
        // candidates depend on one unit's own node only, so build them once per (w, unit, node)
        let cands: Vec<Vec<Vec<UnitCandidates>>> = support
            .iter()
            .map(|(w, _)| {
                self.units
                    .iter()
                    .map(|u| {
                        let g = &u.state_grids[t];
                        exec.map_indexed(g.len(), |k| u.candidates(t, &g.point(k), w, self.d, None))
                    })
                    .collect()
            })
            .collect();
        let lens: Vec<usize> = self.units.iter().map(|u| u.state_grids[t].len()).collect();
        exec.try_map_indexed(grid.len(), |node| {
            let mut unit_nodes = vec![0; lens.len()];
            let mut rest = node;
            for i in (0..lens.len()).rev() {
                unit_nodes[i] = rest % lens[i];
                rest /= lens[i];
            }
            let mut acc = 0.0;
            for (wi, (_, p)) in support.iter().enumerate() {
                let refs: Vec<&UnitCandidates> = unit_nodes.iter().enumerate().map(|(i, &k)| &cands[wi][i][k]).collect();
                let best = search_joint(&self.units, t, &refs, self.rule(t), |x| next_grid.interpolate(next, x))?;
                match best {
                    Some(c) => acc += p * c.value,
                    None => return Ok(f64::INFINITY),
                }
            }
            Ok(acc)
        })
    }

    fn priced_stage(&self, t: usize, grid: &Grid, next_grid: &Grid, next: &[f64], exec: Execution) -> Result<Vec<f64>> {
        let pricing = self.pricing.as_ref().expect("priced engine");
        let n = self.state_dim();
        let unit = &self.units[0];
        exec.try_map_indexed(grid.len(), |node| {
            let point = grid.point(node);
            let (x, yprev) = point.split_at(n);
            let prev = (t >= 1 && pricing.info.is_markovian()).then_some(yprev);
            let mut acc = 0.0;
            let mut buf = Vec::new();
            for (w, p) in &self.supports[t] {
                let y = pricing.info.value(t, prev, w);
                let lambda = pricing.price.price(t, &y);
                let cands = unit.candidates(t, x, w, self.d, Some(&lambda));
                let markov = pricing.info.is_markovian();
                let best = search_joint(&self.units, t, &[&cands], CouplingRule::Free, |xn| {
                    if markov {
                        buf.clear();
                        buf.extend_from_slice(xn);
                        buf.extend_from_slice(&y);
                        next_grid.interpolate(next, &buf)
                    } else {
                        next_grid.interpolate(next, xn)
                    }
                })?;
                match best {
                    Some(c) => acc += p * c.value,
                    None => return Ok(f64::INFINITY),
                }
            }
            Ok(acc)
        })
    }

    fn initial_point(&self) -> Vec<f64> {
        self.units.iter().flat_map(|u| u.spec.initial_state.iter().copied()).collect()
    }
}

/// Outcome of one policy query.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    /// One control vector per unit of the policy.
    pub controls: Vec<Vec<f64>>,
    /// Minimized stage objective, `+∞` when the fallback rule was used.
    pub value: f64,
    pub fallback: bool,
}

/// Feedback obtained by re-solving the stage minimization at query time.
#[derive(Clone, Debug)]
pub struct Policy {
    engine: Arc<Engine>,
    value: Arc<ValueFunction>,
}

impl Policy {
    pub fn unit_count(&self) -> usize {
        self.engine.units.len()
    }

    pub fn value_function(&self) -> &ValueFunction {
        &self.value
    }

    /// Controls at stage `t` for the units' states, the observed noise and
    /// (Markovian mode) the information memory `y_{t-1}`.
    pub fn decide(&self, t: usize, states: &[&[f64]], w: &[f64], memory: Option<&[f64]>) -> Result<Decision> {
        let e = &*self.engine;
        if states.len() != e.units.len() {
            return Err(Error::InvalidArgument(format!("policy expects {} unit states", e.units.len())));
        }
        let (y, lambda) = match &e.pricing {
            Some(p) => {
                let prev = if t >= 1 && p.info.is_markovian() {
                    Some(memory.ok_or_else(|| Error::InvalidArgument("markovian policy needs the information memory".into()))?)
                } else {
                    None
                };
                let y = p.info.value(t, prev, w);
                let lambda = p.price.price(t, &y);
                (y, Some(lambda))
            }
            None => (Vec::new(), None),
        };
        let cands: Vec<UnitCandidates> =
            e.units.iter().zip(states).map(|(u, x)| u.candidates(t, x, w, e.d, lambda.as_deref())).collect();
        let refs: Vec<&UnitCandidates> = cands.iter().collect();
        let next_grid = self.value.grid(t + 1);
        let next = self.value.table(t + 1);
        let markov = e.markovian().is_some();
        let mut buf = Vec::new();
        let best = search_joint(&e.units, t, &refs, e.rule(t), |xn| {
            if markov {
                buf.clear();
                buf.extend_from_slice(xn);
                buf.extend_from_slice(&y);
                next_grid.interpolate(next, &buf)
            } else {
                next_grid.interpolate(next, xn)
            }
        })?;
        let (indices, value, fallback) = match best {
            Some(c) => (c.indices, c.value, false),
            None => (fallback_indices(&e.units, t, states, w), f64::INFINITY, true),
        };
        let controls = e.units.iter().zip(indices).map(|(u, k)| u.control_grids[t].point(k)).collect();
        Ok(Decision { controls, value, fallback })
    }

    /// Largest control-grid spacing over stages, per unit.
    pub fn control_resolution(&self) -> Vec<f64> {
        self.engine
            .units
            .iter()
            .map(|u| u.control_grids.iter().flat_map(|g| g.axes().iter().map(Axis::resolution)).fold(0.0, f64::max))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct DpSolution {
    pub value: Arc<ValueFunction>,
    pub policy: Policy,
    /// `V_0` at the initial state.
    pub initial_value: f64,
}

fn finish(engine: Engine, exec: Execution) -> Result<DpSolution> {
    let value = Arc::new(engine.backward(exec)?);
    let x0 = engine.initial_point();
    let initial_value = interpolate_value(&value, 0, &x0)?;
    if initial_value == f64::INFINITY {
        return Err(Error::InfeasibleOnGrid);
    }
    let policy = Policy { engine: Arc::new(engine), value: value.clone() };
    Ok(DpSolution { value, policy, initial_value })
}

/// Backward recursion over all units jointly with the coupling enforced as
/// a hard constraint on the control grids.
pub fn solve_global_dp(spec: &ProblemSpec, grids: &GridConfig, exec: Execution) -> Result<DpSolution> {
    let report = validate_problem(spec);
    if !report.is_valid() {
        return Err(Error::InvalidProblem(report.to_string()));
    }
    finish(Engine::global(spec, grids)?, exec)
}

/// Backward recursion for one unit with the coupling priced by
/// `λ̂_t(y_t)ᵀ g_t` instead of enforced.
pub fn solve_priced_subproblem(
    sub: &SubsystemSpec,
    noise: &NoiseModel,
    price: &PricedTerm,
    info: &InformationSpec,
    grid: &UnitGrid,
    node_cap: usize,
    exec: Execution,
) -> Result<DpSolution> {
    let errs = sub.shape_errors(0, price.dim(), noise.dim());
    if !errs.is_empty() {
        return Err(Error::InvalidArgument(errs.join("; ")));
    }
    finish(Engine::priced(sub, noise, price, info, grid, node_cap)?, exec)
}

#[cfg(test)]
mod tests;
