//! Exhaustive minimization over the joint control grid of several units.

use nalgebra::DMatrix;

use super::grid::{tol, Axis, Grid};
use crate::error::{Error, Result};
use crate::model::{Coupling, GridConfig, SubsystemSpec, UnitGrid};

pub(crate) const COUPLING_TOL: f64 = 1e-9;

/// A unit with its per-stage state and control grids.
#[derive(Clone, Debug)]
pub(crate) struct UnitModel {
    pub spec: SubsystemSpec,
    pub state_grids: Vec<Grid>,
    pub control_grids: Vec<Grid>,
    pub state_boxes: Vec<(Vec<f64>, Vec<f64>)>,
}

fn axes_for(lo: &[f64], hi: &[f64], nodes: &[usize], what: &str) -> Result<Grid> {
    let axes = lo
        .iter()
        .zip(hi)
        .zip(nodes)
        .map(|((l, h), n)| {
            if !(l.is_finite() && h.is_finite()) {
                return Err(Error::InvalidArgument(format!("{what} bounds must be finite to build a grid")));
            }
            Axis::uniform(*l, *h, *n)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Grid::new(axes))
}

impl UnitModel {
    pub fn build(spec: &SubsystemSpec, grid: &UnitGrid, horizon: usize) -> Result<Self> {
        if grid.state_nodes.len() != spec.state_dim || grid.control_nodes.len() != spec.control_dim {
            return Err(Error::InvalidArgument("grid node counts do not match unit dimensions".into()));
        }
        let mut state_grids = Vec::with_capacity(horizon + 1);
        let mut state_boxes = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            let (lo, hi) = spec.state_box(t);
            state_grids.push(axes_for(&lo, &hi, &grid.state_nodes, "state")?);
            state_boxes.push((lo, hi));
        }
        let control_grids = (0..horizon)
            .map(|t| {
                let (lo, hi) = spec.control_box(t);
                axes_for(&lo, &hi, &grid.control_nodes, "control")
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(UnitModel { spec: spec.clone(), state_grids, control_grids, state_boxes })
    }

    pub fn build_all(units: &[SubsystemSpec], config: &GridConfig, horizon: usize) -> Result<Vec<Self>> {
        if config.units.len() != units.len() {
            return Err(Error::InvalidArgument("grid configuration must list one entry per subsystem".into()));
        }
        units
            .iter()
            .zip(&config.units)
            .enumerate()
            .map(|(i, (u, g))| UnitModel::build(u, g, horizon).map_err(|e| e.at_subsystem(i)))
            .collect()
    }

    pub fn in_box(&self, t: usize, x: &[f64]) -> bool {
        let (lo, hi) = &self.state_boxes[t];
        x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *v >= l - tol(*l) && *v <= h + tol(*h))
    }

    /// Euclidean distance from `x` to the stage-`t` state box.
    pub fn box_distance(&self, t: usize, x: &[f64]) -> f64 {
        let (lo, hi) = &self.state_boxes[t];
        x.iter()
            .zip(lo.iter().zip(hi))
            .map(|(v, (l, h))| {
                let e = if v < l { l - v } else if v > h { v - h } else { 0.0 };
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Feasible candidates of one unit at `(t, x, w)`.
    pub fn candidates(&self, t: usize, x: &[f64], w: &[f64], d: usize, price: Option<&[f64]>) -> UnitCandidates {
        let grid = &self.control_grids[t];
        let mut list = Vec::with_capacity(grid.len());
        let mut u = Vec::new();
        let mut scratch = Vec::new();
        let coupling = self.spec.coupling.at(t);
        for k in 0..grid.len() {
            grid.point_into(k, &mut u);
            let next = self.spec.next_state(t, x, &u, w);
            if !self.in_box(t + 1, &next) {
                continue;
            }
            let mut g = vec![0.0; d];
            coupling.eval(x, &u, w, &mut g);
            let mut cost = self.spec.stage_cost_with(t, x, &u, w, &mut scratch);
            if let Some(lambda) = price {
                cost += lambda.iter().zip(&g).map(|(l, gi)| l * gi).sum::<f64>();
            }
            list.push(Candidate { index: k, cost, g, next });
        }
        let mut offset = vec![0.0; d];
        coupling.eval(x, &vec![0.0; self.spec.control_dim], w, &mut offset);
        UnitCandidates { list, offset, grid_len: grid.len() }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Candidate {
    pub index: usize,
    pub cost: f64,
    pub g: Vec<f64>,
    pub next: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct UnitCandidates {
    pub list: Vec<Candidate>,
    /// Coupling value at zero control, used to solve for a resolver control.
    pub offset: Vec<f64>,
    grid_len: usize,
}

impl UnitCandidates {
    fn position_table(&self) -> Vec<Option<usize>> {
        let mut table = vec![None; self.grid_len];
        for (p, c) in self.list.iter().enumerate() {
            table[c.index] = Some(p);
        }
        table
    }
}

/// A unit whose control is solved from the coupling equation instead of
/// enumerated: `m_i = d` with an invertible control coefficient.
#[derive(Clone, Debug)]
pub(crate) struct Resolver {
    pub unit: usize,
    inverse: DMatrix<f64>,
}

impl Resolver {
    /// Picks the last unit whose control coefficient is square and invertible.
    pub fn find(units: &[UnitModel], t: usize, d: usize) -> Option<Resolver> {
        units.iter().enumerate().rev().find_map(|(i, u)| {
            if u.spec.control_dim != d || d == 0 {
                return None;
            }
            let Coupling::Affine { gu: Some(gu), .. } = u.spec.coupling.at(t) else {
                return None;
            };
            let m = DMatrix::from_fn(d, d, |r, c| gu.get(r, c));
            let inverse = m.clone().try_inverse()?;
            let scale = m.amax().max(1.0);
            (m.determinant().abs() > 1e-12 * scale.powi(d as i32)).then_some(Resolver { unit: i, inverse })
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Choice {
    pub value: f64,
    /// Control grid index per unit.
    pub indices: Vec<usize>,
}

pub(crate) enum CouplingRule<'a> {
    Free,
    Enforce { resolver: Option<&'a Resolver> },
}

/// Minimizes `Σ_i cost_i + cont(next)` over the joint candidates. Ties are
/// broken towards the lexicographically smallest control-index tuple.
/// Returns `None` when no combination has a finite value.
pub(crate) fn search_joint<F>(
    units: &[UnitModel],
    t: usize,
    cands: &[&UnitCandidates],
    rule: CouplingRule<'_>,
    mut cont: F,
) -> Result<Option<Choice>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = cands.len();
    let d = cands.first().map_or(0, |c| c.offset.len());
    let (enforce, resolver) = match rule {
        CouplingRule::Free => (false, None),
        CouplingRule::Enforce { resolver } => (true, resolver),
    };
    let resolver_unit = resolver.map(|r| r.unit);
    let resolver_table = resolver.map(|r| cands[r.unit].position_table());
    let free: Vec<usize> = (0..n).filter(|i| Some(*i) != resolver_unit).collect();
    if free.iter().any(|&i| cands[i].list.is_empty()) {
        return Ok(None);
    }
    let mut pos = vec![0usize; n];
    let mut best: Option<Choice> = None;
    let mut gsum = vec![0.0; d];
    let mut target = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut next = Vec::new();
    let mut indices = vec![0usize; n];
    'outer: loop {
        let mut feasible = true;
        gsum.iter_mut().for_each(|g| *g = 0.0);
        for &i in &free {
            for (s, g) in gsum.iter_mut().zip(&cands[i].list[pos[i]].g) {
                *s += g;
            }
        }
        if let (Some(r), Some(table)) = (resolver, &resolver_table) {
            let c = cands[r.unit];
            for ((tg, s), o) in target.iter_mut().zip(&gsum).zip(&c.offset) {
                *tg = -s - o;
            }
            for (row, ur) in u.iter_mut().enumerate() {
                *ur = (0..d).map(|k| r.inverse[(row, k)] * target[k]).sum();
            }
            let grid = &units[r.unit].control_grids[t];
            let mut idx = 0usize;
            let mut stride = 1usize;
            for j in (0..d).rev() {
                let axis = &grid.axes()[j];
                match axis.snap(u[j]) {
                    Some(k) => idx += k * stride,
                    None => {
                        feasible = false;
                        break;
                    }
                }
                stride *= axis.len();
            }
            match feasible.then(|| table[idx]).flatten() {
                Some(p) => pos[r.unit] = p,
                None => feasible = false,
            }
            if feasible {
                for (s, g) in gsum.iter_mut().zip(&c.list[pos[r.unit]].g) {
                    *s += g;
                }
            }
        }
        if feasible && enforce && gsum.iter().any(|g| g.abs() > COUPLING_TOL) {
            feasible = false;
        }
        if feasible {
            let mut cost = 0.0;
            next.clear();
            for i in 0..n {
                let c = &cands[i].list[pos[i]];
                cost += c.cost;
                next.extend_from_slice(&c.next);
                indices[i] = c.index;
            }
            let value = cost + cont(&next)?;
            let better = match &best {
                None => value < f64::INFINITY,
                Some(b) => value < b.value || (value == b.value && indices < b.indices),
            };
            if better {
                best = Some(Choice { value, indices: indices.clone() });
            }
        }
        // odometer over the enumerated units, last one fastest
        for &i in free.iter().rev() {
            pos[i] += 1;
            if pos[i] < cands[i].list.len() {
                continue 'outer;
            }
            pos[i] = 0;
        }
        break;
    }
    Ok(best)
}

/// Per-unit control index minimizing the next-state distance to the box,
/// then the stage cost; used when no joint control is feasible.
pub(crate) fn fallback_indices(units: &[UnitModel], t: usize, states: &[&[f64]], w: &[f64]) -> Vec<usize> {
    let mut u = Vec::new();
    units
        .iter()
        .zip(states)
        .map(|(unit, x)| {
            let grid = &unit.control_grids[t];
            let mut best = (f64::INFINITY, f64::INFINITY, 0usize);
            for k in 0..grid.len() {
                grid.point_into(k, &mut u);
                let next = unit.spec.next_state(t, x, &u, w);
                let dist = unit.box_distance(t + 1, &next);
                let cost = unit.spec.stage_cost(t, x, &u, w);
                if (dist, cost) < (best.0, best.1) {
                    best = (dist, cost, k);
                }
            }
            best.2
        })
        .collect()
}
