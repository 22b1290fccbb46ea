//! Noise scenarios, forward simulation of feedback policies, Monte Carlo
//! cost estimates and coupling feasibility recovery.

mod io;

pub use io::{read_scenarios_csv, write_scenarios_csv, write_trajectories_csv};

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::dp::Policy;
use crate::exec::Execution;
use crate::model::{Coupling, InformationSpec, NoiseModel, ProblemSpec};

/// One noise path `w_0..w_{T-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub noises: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSource {
    Sampled { seed: u64 },
    /// Every path of the scenario tree, weighted by its probability.
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    /// Equal weights for sampled sets, path probabilities for exhaustive ones.
    pub weights: Vec<f64>,
    pub source: ScenarioSource,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn is_exhaustive(&self) -> bool {
        self.source == ScenarioSource::Exhaustive
    }

    pub fn horizon(&self) -> usize {
        self.scenarios.first().map_or(0, |s| s.noises.len())
    }
}

/// Draws `count` stage-wise independent paths. Scenario `s` uses its own
/// ChaCha8 stream, so the set is reproducible and order-independent.
pub fn sample_scenarios(noise: &NoiseModel, count: usize, seed: u64, exec: Execution) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(Error::InvalidArgument("scenario count must be at least 1".into()));
    }
    let dists = noise
        .stages
        .iter()
        .map(|st| WeightedIndex::new(&st.probabilities).map_err(|e| Error::InvalidArgument(format!("noise probabilities: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let scenarios = exec.map_indexed(count, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let noises = dists.iter().zip(&noise.stages).map(|(d, st)| st.points[d.sample(&mut rng)].clone()).collect();
        Scenario { noises }
    });
    Ok(ScenarioSet { scenarios, weights: vec![1.0 / count as f64; count], source: ScenarioSource::Sampled { seed } })
}

/// All root-to-leaf paths with their probabilities; the first stage varies
/// slowest. Zero-probability points are kept so path ids match the tree.
pub fn enumerate_scenarios(noise: &NoiseModel, max_paths: usize) -> Result<ScenarioSet> {
    let count = noise.path_count();
    if count > max_paths as f64 {
        return Err(Error::InvalidArgument(format!("scenario tree has {count} paths, cap is {max_paths}")));
    }
    let mut scenarios = vec![Scenario { noises: Vec::new() }];
    let mut weights = vec![1.0];
    for st in &noise.stages {
        let mut ns = Vec::with_capacity(scenarios.len() * st.len());
        let mut nw = Vec::with_capacity(scenarios.len() * st.len());
        for (sc, w) in scenarios.iter().zip(&weights) {
            for (pt, p) in st.points.iter().zip(&st.probabilities) {
                let mut noises = sc.noises.clone();
                noises.push(pt.clone());
                ns.push(Scenario { noises });
                nw.push(w * p);
            }
        }
        scenarios = ns;
        weights = nw;
    }
    Ok(ScenarioSet { scenarios, weights, source: ScenarioSource::Exhaustive })
}

/// Joint feedback for all units: `(t, x_t, w_t, y_{t-1}) ↦ u_t`.
pub trait JointFeedback: Sync {
    fn controls(&self, t: usize, states: &[Vec<f64>], w: &[f64], memory: Option<&[f64]>) -> Result<Vec<Vec<f64>>>;
}

/// Feedback of a single unit.
pub trait UnitFeedback: Sync {
    fn control(&self, t: usize, x: &[f64], w: &[f64], memory: Option<&[f64]>) -> Result<Vec<f64>>;
}

/// Closure adapter for [`UnitFeedback`].
pub struct UnitFn<F>(pub F);

impl<F> UnitFeedback for UnitFn<F>
where
    F: Fn(usize, &[f64], &[f64]) -> Vec<f64> + Sync,
{
    fn control(&self, t: usize, x: &[f64], w: &[f64], _memory: Option<&[f64]>) -> Result<Vec<f64>> {
        Ok((self.0)(t, x, w))
    }
}

/// Unit feedbacks applied side by side.
pub struct Decentralized<'a> {
    pub units: Vec<&'a dyn UnitFeedback>,
}

impl JointFeedback for Decentralized<'_> {
    fn controls(&self, t: usize, states: &[Vec<f64>], w: &[f64], memory: Option<&[f64]>) -> Result<Vec<Vec<f64>>> {
        self.units.iter().zip(states).map(|(u, x)| u.control(t, x, w, memory)).collect()
    }
}

impl JointFeedback for Policy {
    fn controls(&self, t: usize, states: &[Vec<f64>], w: &[f64], memory: Option<&[f64]>) -> Result<Vec<Vec<f64>>> {
        let refs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
        Ok(self.decide(t, &refs, w, memory)?.controls)
    }
}

impl UnitFeedback for Policy {
    fn control(&self, t: usize, x: &[f64], w: &[f64], memory: Option<&[f64]>) -> Result<Vec<f64>> {
        if self.unit_count() != 1 {
            return Err(Error::InvalidArgument("a unit feedback needs a single-unit policy".into()));
        }
        Ok(self.decide(t, &[x], w, memory)?.controls.remove(0))
    }
}

/// Paths of one simulated scenario. Stage-indexed vectors hold one entry per
/// unit; `states` has `T + 1` stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<Vec<f64>>>,
    pub controls: Vec<Vec<Vec<f64>>>,
    pub stage_costs: Vec<Vec<f64>>,
    pub final_costs: Vec<f64>,
    /// `Σ_i g_t^i` per stage.
    pub residuals: Vec<Vec<f64>>,
    /// Control clipped to its bounds, per stage and unit.
    pub clipped: Vec<Vec<bool>>,
    /// Slack requirement could not be met within bounds at this stage.
    pub violated: Vec<bool>,
}

impl Trajectory {
    /// Stage costs summed stage by stage, then the final costs.
    pub fn total_cost(&self) -> f64 {
        let mut acc = 0.0;
        for stage in &self.stage_costs {
            for c in stage {
                acc += c;
            }
        }
        for c in &self.final_costs {
            acc += c;
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBundle {
    pub trajectories: Vec<Trajectory>,
    pub weights: Vec<f64>,
    pub source: ScenarioSource,
}

impl TrajectoryBundle {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Number of stages where recovery left a residual.
    pub fn violation_count(&self) -> usize {
        self.trajectories.iter().map(|tr| tr.violated.iter().filter(|v| **v).count()).sum()
    }

    /// Probability-weighted mean of `max_t ‖r_t‖_∞` over scenarios.
    pub fn mean_abs_residual(&self) -> f64 {
        let total: f64 = self.weights.iter().sum();
        self.trajectories
            .iter()
            .zip(&self.weights)
            .map(|(tr, w)| w * tr.residuals.iter().flatten().fold(0.0f64, |m, r| m.max(r.abs())))
            .sum::<f64>()
            / total
    }
}

/// Mean with a 95% confidence half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub count: usize,
}

impl MonteCarloEstimate {
    /// Sampled sets: `1.96 · sd / √S`. Exhaustive sets: exact weighted mean.
    pub fn from_values(values: &[f64], weights: &[f64], source: ScenarioSource) -> Self {
        let count = values.len();
        if source == ScenarioSource::Exhaustive {
            let mut mean = 0.0;
            for (v, w) in values.iter().zip(weights) {
                mean += w * v;
            }
            return MonteCarloEstimate { mean, half_width: 0.0, count };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let half_width = if count > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64;
            1.96 * var.sqrt() / (count as f64).sqrt()
        } else {
            0.0
        };
        MonteCarloEstimate { mean, half_width, count }
    }
}

fn clip(u: &mut [f64], lo: &[f64], hi: &[f64]) -> bool {
    let mut changed = false;
    for ((v, l), h) in u.iter_mut().zip(lo).zip(hi) {
        let c = v.clamp(*l, *h);
        if c != *v {
            *v = c;
            changed = true;
        }
    }
    changed
}

/// Forward simulation of a feedback along every scenario. Controls are
/// clipped to their bounds (recorded); the dynamics are applied exactly.
/// `info` supplies the memory `y_{t-1}` of Markovian information.
pub fn simulate_policy(
    spec: &ProblemSpec,
    policy: &dyn JointFeedback,
    scenarios: &ScenarioSet,
    info: Option<&InformationSpec>,
    exec: Execution,
) -> Result<TrajectoryBundle> {
    let horizon = spec.horizon;
    let d = spec.coupling_dim();
    if scenarios.horizon() != horizon {
        return Err(Error::InvalidArgument(format!("scenarios have {} stages, horizon is {horizon}", scenarios.horizon())));
    }
    let markov = info.filter(|i| i.is_markovian());
    let trajectories = exec.try_map_indexed(scenarios.len(), |s| {
        let noises = &scenarios.scenarios[s].noises;
        let ys = markov.map(|i| i.path(noises));
        let mut x: Vec<Vec<f64>> = spec.subsystems.iter().map(|u| u.initial_state.clone()).collect();
        let mut tr = Trajectory {
            states: vec![x.clone()],
            controls: Vec::with_capacity(horizon),
            stage_costs: Vec::with_capacity(horizon),
            final_costs: Vec::new(),
            residuals: Vec::with_capacity(horizon),
            clipped: Vec::with_capacity(horizon),
            violated: vec![false; horizon],
        };
        for (t, w) in noises.iter().enumerate() {
            let memory = match (&ys, t) {
                (Some(ys), t) if t >= 1 => Some(ys[t - 1].as_slice()),
                _ => None,
            };
            let mut u = policy.controls(t, &x, w, memory)?;
            let mut clipped = Vec::with_capacity(u.len());
            for (i, (ui, sub)) in u.iter_mut().zip(&spec.subsystems).enumerate() {
                if ui.len() != sub.control_dim || ui.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteControl { scenario: s, stage: t, subsystem: i });
                }
                let (lo, hi) = sub.control_box(t);
                clipped.push(clip(ui, &lo, &hi));
            }
            let mut scratch = Vec::new();
            let costs: Vec<f64> = spec
                .subsystems
                .iter()
                .enumerate()
                .map(|(i, sub)| sub.stage_cost_with(t, &x[i], &u[i], w, &mut scratch))
                .collect();
            let r = spec.residual(t, &x, &u, w);
            debug_assert_eq!(r.len(), d);
            x = spec.subsystems.iter().enumerate().map(|(i, sub)| sub.next_state(t, &x[i], &u[i], w)).collect();
            tr.controls.push(u);
            tr.stage_costs.push(costs);
            tr.residuals.push(r);
            tr.clipped.push(clipped);
            tr.states.push(x.clone());
        }
        tr.final_costs = spec.subsystems.iter().zip(&x).map(|(sub, xi)| sub.final_cost(xi)).collect();
        Ok(tr)
    })?;
    Ok(TrajectoryBundle { trajectories, weights: scenarios.weights.clone(), source: scenarios.source })
}

/// Mean total cost (stage plus final) with its 95% half-width.
pub fn estimate_cost(bundle: &TrajectoryBundle) -> Result<MonteCarloEstimate> {
    if bundle.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory bundle".into()));
    }
    let totals: Vec<f64> = bundle.trajectories.iter().map(Trajectory::total_cost).collect();
    Ok(MonteCarloEstimate::from_values(&totals, &bundle.weights, bundle.source))
}

/// A unit whose control absorbs the coupling residual in simulation.
#[derive(Clone, Debug)]
pub struct SlackUnit {
    pub unit: usize,
    inverses: Vec<DMatrix<f64>>,
}

impl SlackUnit {
    /// Checks that the unit's coupling is affine and invertible in its control
    /// at every stage.
    pub fn new(spec: &ProblemSpec, unit: usize) -> Result<Self> {
        let d = spec.coupling_dim();
        let sub = spec
            .subsystems
            .get(unit)
            .ok_or_else(|| Error::InvalidArgument(format!("slack unit {unit} does not exist")))?;
        let inverses = (0..spec.horizon)
            .map(|t| {
                let Coupling::Affine { gu: Some(gu), .. } = sub.coupling.at(t) else {
                    return Err(Error::InvalidArgument(format!("slack unit {unit} coupling has no control term at stage {t}")));
                };
                if sub.control_dim != d || gu.rows() != d {
                    return Err(Error::InvalidArgument(format!("slack unit {unit} coupling is not square in its control")));
                }
                DMatrix::from_fn(d, d, |r, c| gu.get(r, c))
                    .try_inverse()
                    .ok_or_else(|| Error::InvalidArgument(format!("slack unit {unit} coupling is not invertible at stage {t}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SlackUnit { unit, inverses })
    }
}

/// Overwrites the slack unit's controls so each stage residual vanishes.
/// A requirement outside the control bounds is clipped and the remaining
/// residual is kept with a violation flag. The slack unit's costs and states
/// are recomputed; other units are untouched.
pub fn recover_feasibility(
    spec: &ProblemSpec,
    bundle: &TrajectoryBundle,
    slack: &SlackUnit,
    scenarios: &ScenarioSet,
) -> Result<TrajectoryBundle> {
    let s_unit = slack.unit;
    let sub = &spec.subsystems[s_unit];
    let d = spec.coupling_dim();
    let mut out = bundle.clone();
    for (tr, sc) in out.trajectories.iter_mut().zip(&scenarios.scenarios) {
        for t in 0..tr.controls.len() {
            let w = &sc.noises[t];
            if tr.residuals[t].iter().all(|r| *r == 0.0) {
                continue;
            }
            let xs = tr.states[t][s_unit].clone();
            let mut others = vec![0.0; d];
            for (i, other) in spec.subsystems.iter().enumerate() {
                if i != s_unit {
                    let g = other.coupling(t, &tr.states[t][i], &tr.controls[t][i], w, d);
                    for (o, gi) in others.iter_mut().zip(g) {
                        *o += gi;
                    }
                }
            }
            let offset = sub.coupling(t, &xs, &vec![0.0; sub.control_dim], w, d);
            let target = DVector::from_iterator(d, others.iter().zip(&offset).map(|(o, c)| -o - c));
            let mut u: Vec<f64> = (&slack.inverses[t] * target).iter().copied().collect();
            let (lo, hi) = sub.control_box(t);
            tr.clipped[t][s_unit] = clip(&mut u, &lo, &hi);
            tr.stage_costs[t][s_unit] = sub.stage_cost(t, &xs, &u, w);
            tr.controls[t][s_unit] = u;
            let r = spec.residual(t, &tr.states[t], &tr.controls[t], w);
            tr.violated[t] = r.iter().any(|v| v.abs() > 1e-9);
            tr.residuals[t] = r;
            if sub.state_dim > 0 {
                let next = sub.next_state(t, &xs, &tr.controls[t][s_unit], w);
                tr.states[t + 1][s_unit] = next;
            }
        }
        if sub.state_dim > 0 {
            let last = tr.states.len() - 1;
            tr.final_costs[s_unit] = sub.final_cost(&tr.states[last][s_unit]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
