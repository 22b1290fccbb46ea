//! The coordination loop: priced subproblems solved by DP, simulated on a
//! fixed set of coordination scenarios, multipliers updated scenario-wise and
//! projected back on the information variable.

mod report;

pub use report::{write_iterations_csv, write_residual_histogram_csv, Histogram, IterationReport, StageReport};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::condexp::{deviance, fit_estimator, EstimatorKind, SampleTable};
use crate::dp::{solve_priced_subproblem, DpSolution, Policy, PricedTerm};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{validate_problem, GridConfig, InformationSpec, ProblemSpec};
use crate::scenario::{
    enumerate_scenarios, estimate_cost, recover_feasibility, sample_scenarios, simulate_policy, Decentralized,
    MonteCarloEstimate, ScenarioSet, SlackUnit, TrajectoryBundle, UnitFeedback,
};

/// Multipliers `λ_t^{k,s}` per stage and scenario, with the update counter.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierStore {
    values: Vec<Vec<Vec<f64>>>,
    iteration: usize,
}

impl MultiplierStore {
    pub fn zeros(horizon: usize, scenarios: usize, dim: usize) -> Self {
        MultiplierStore { values: vec![vec![vec![0.0; dim]; scenarios]; horizon], iteration: 0 }
    }

    /// Store from `values[t][s]`; every entry must be finite.
    pub fn from_values(values: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let s = values.first().map_or(0, Vec::len);
        let d = values.first().and_then(|v| v.first()).map_or(0, Vec::len);
        for (t, stage) in values.iter().enumerate() {
            if stage.len() != s || stage.iter().any(|l| l.len() != d) {
                return Err(Error::InvalidArgument(format!("multipliers at stage {t} have inconsistent shape")));
            }
            if let Some(sc) = stage.iter().position(|l| l.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteResidual { stage: t, scenario: sc });
            }
        }
        Ok(MultiplierStore { values, iteration: 0 })
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn scenario_count(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn dim(&self) -> usize {
        self.values.first().and_then(|v| v.first()).map_or(0, Vec::len)
    }

    /// Number of updates applied so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn value(&self, t: usize, s: usize) -> &[f64] {
        &self.values[t][s]
    }

    pub fn stage(&self, t: usize) -> &[Vec<f64>] {
        &self.values[t]
    }
}

/// `λ_t^s + ρ_t r_t^s` for every stage and scenario; `residuals[t][s]`.
pub fn multiplier_update(store: &MultiplierStore, residuals: &[Vec<Vec<f64>>], steps: &[f64]) -> Result<MultiplierStore> {
    let (t_len, s_len, d) = (store.horizon(), store.scenario_count(), store.dim());
    if residuals.len() != t_len || steps.len() != t_len || residuals.iter().any(|r| r.len() != s_len) {
        return Err(Error::InvalidArgument("residuals or steps do not match the multiplier store".into()));
    }
    let mut values = store.values.clone();
    for (t, (stage, rs)) in values.iter_mut().zip(residuals).enumerate() {
        for (s, (lambda, r)) in stage.iter_mut().zip(rs).enumerate() {
            if r.len() != d {
                return Err(Error::InvalidArgument(format!("residual at stage {t}, scenario {s} has wrong dimension")));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteResidual { stage: t, scenario: s });
            }
            for (l, v) in lambda.iter_mut().zip(r) {
                *l += steps[t] * v;
            }
        }
    }
    Ok(MultiplierStore { values, iteration: store.iteration + 1 })
}

/// `residuals[t][s]` from a simulated bundle.
pub fn residual_table(bundle: &TrajectoryBundle) -> Vec<Vec<Vec<f64>>> {
    let horizon = bundle.trajectories.first().map_or(0, |tr| tr.residuals.len());
    (0..horizon).map(|t| bundle.trajectories.iter().map(|tr| tr.residuals[t].clone()).collect()).collect()
}

/// Per-stage price with the deviance of each stage fit (`None` when the
/// multipliers do not vary).
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub price: PricedTerm,
    pub deviance: Vec<Option<f64>>,
}

/// Fits `E[λ_t | y_t]` on the pairs `(y_t^s, λ_t^s)` of every stage.
pub fn project_price(
    store: &MultiplierStore,
    scenarios: &ScenarioSet,
    info: &InformationSpec,
    kind: &EstimatorKind,
) -> Result<Projection> {
    if store.scenario_count() != scenarios.len() {
        return Err(Error::InvalidArgument("multiplier store and scenario set differ in size".into()));
    }
    let kind = if info.dim() == 0 { &EstimatorKind::Constant } else { kind };
    let paths: Vec<Vec<Vec<f64>>> = scenarios.scenarios.iter().map(|s| info.path(&s.noises)).collect();
    let mut stages = Vec::with_capacity(store.horizon());
    let mut devs = Vec::with_capacity(store.horizon());
    for t in 0..store.horizon() {
        let inputs: Vec<Vec<f64>> = paths.iter().map(|p| p[t].clone()).collect();
        let targets = store.stage(t).to_vec();
        let table = if scenarios.is_exhaustive() {
            SampleTable::weighted(inputs, targets, scenarios.weights.clone())
        } else {
            SampleTable::new(inputs, targets)
        }
        .map_err(|e| e.at_stage(t))?;
        let est = fit_estimator(&table, kind).map_err(|e| e.at_stage(t))?;
        devs.push(match deviance(&est, &table) {
            Ok(v) => Some(v),
            Err(Error::DevianceUndefined) => None,
            Err(e) => return Err(e.at_stage(t)),
        });
        stages.push(est);
    }
    Ok(Projection { price: PricedTerm::new(store.dim(), stages)?, deviance: devs })
}

/// Priced subproblem of every unit.
pub fn solve_priced_units(
    spec: &ProblemSpec,
    price: &PricedTerm,
    info: &InformationSpec,
    grids: &GridConfig,
    exec: Execution,
) -> Result<Vec<DpSolution>> {
    if grids.units.len() != spec.unit_count() {
        return Err(Error::InvalidArgument("grid configuration must list one entry per subsystem".into()));
    }
    spec.subsystems
        .iter()
        .zip(&grids.units)
        .enumerate()
        .map(|(i, (sub, g))| {
            solve_priced_subproblem(sub, &spec.noise, price, info, g, grids.node_cap, exec).map_err(|e| e.at_subsystem(i))
        })
        .collect()
}

/// Everything computed for one price: unit policies, the simulated bundle,
/// dual and (with a slack unit) primal estimates.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub policies: Vec<Policy>,
    pub bundle: TrajectoryBundle,
    /// `E[Σ_i C^i + λ̂ᵀ g^i + K^i]` along the scenarios.
    pub dual: MonteCarloEstimate,
    /// `Σ_i V_0^i(x_0^i)` from the subproblem value functions.
    pub dual_exact: f64,
    pub recovered: Option<TrajectoryBundle>,
    pub primal: Option<MonteCarloEstimate>,
}

pub fn evaluate_price(
    spec: &ProblemSpec,
    price: &PricedTerm,
    info: &InformationSpec,
    grids: &GridConfig,
    scenarios: &ScenarioSet,
    slack: Option<&SlackUnit>,
    exec: Execution,
) -> Result<Evaluation> {
    let solutions = solve_priced_units(spec, price, info, grids, exec)?;
    let mut dual_exact = 0.0;
    for s in &solutions {
        dual_exact += s.initial_value;
    }
    let policies: Vec<Policy> = solutions.into_iter().map(|s| s.policy).collect();
    let units: Vec<&dyn UnitFeedback> = policies.iter().map(|p| p as &dyn UnitFeedback).collect();
    let joint = Decentralized { units };
    let bundle = simulate_policy(spec, &joint, scenarios, Some(info), exec)?;
    let values: Vec<f64> = bundle
        .trajectories
        .iter()
        .zip(&scenarios.scenarios)
        .map(|(tr, sc)| {
            let ys = info.path(&sc.noises);
            let mut acc = tr.total_cost();
            for (t, r) in tr.residuals.iter().enumerate() {
                let lambda = price.price(t, &ys[t]);
                acc += lambda.iter().zip(r).map(|(l, g)| l * g).sum::<f64>();
            }
            acc
        })
        .collect();
    let dual = MonteCarloEstimate::from_values(&values, &bundle.weights, bundle.source);
    let (recovered, primal) = match slack {
        Some(slack) => {
            let rec = recover_feasibility(spec, &bundle, slack, scenarios)?;
            let est = estimate_cost(&rec)?;
            (Some(rec), Some(est))
        }
        None => (None, None),
    };
    Ok(Evaluation { policies, bundle, dual, dual_exact, recovered, primal })
}

/// Dual function estimate for a price: separable priced optimum simulated
/// along `scenarios`.
pub fn dual_value(
    spec: &ProblemSpec,
    price: &PricedTerm,
    info: &InformationSpec,
    grids: &GridConfig,
    scenarios: &ScenarioSet,
    exec: Execution,
) -> Result<MonteCarloEstimate> {
    Ok(evaluate_price(spec, price, info, grids, scenarios, None, exec)?.dual)
}

/// True cost of the priced policies after slack recovery.
pub fn primal_value(
    spec: &ProblemSpec,
    price: &PricedTerm,
    info: &InformationSpec,
    grids: &GridConfig,
    scenarios: &ScenarioSet,
    slack_unit: usize,
    exec: Execution,
) -> Result<MonteCarloEstimate> {
    let slack = SlackUnit::new(spec, slack_unit)?;
    let eval = evaluate_price(spec, price, info, grids, scenarios, Some(&slack), exec)?;
    Ok(eval.primal.expect("slack unit supplied"))
}

/// Bound `2α/c²` and the margin `bound − ρ_t` of every stage step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizeReport {
    pub bound: f64,
    pub margins: Vec<f64>,
    pub ok: bool,
}

/// Whether every `ρ_t` lies strictly inside `(0, 2α/c²)`.
pub fn check_step_size(alpha: f64, lipschitz: f64, steps: &[f64]) -> Result<StepSizeReport> {
    if !(alpha > 0.0 && lipschitz > 0.0) {
        return Err(Error::InvalidArgument("step-size check needs α > 0 and c > 0".into()));
    }
    let bound = 2.0 * alpha / (lipschitz * lipschitz);
    let margins: Vec<f64> = steps.iter().map(|r| bound - r).collect();
    let ok = steps.iter().all(|r| *r > 0.0 && *r < bound);
    Ok(StepSizeReport { bound, margins, ok })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioPlan {
    Sampled { count: usize, seed: u64 },
    Exhaustive {
        #[serde(default = "default_max_paths")]
        max_paths: usize,
    },
}

fn default_max_paths() -> usize {
    100_000
}

fn default_histogram_bins() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UzawaConfig {
    /// Step `ρ` used at every stage unless `stage_steps` is given.
    pub step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_steps: Option<Vec<f64>>,
    pub max_iterations: usize,
    pub scenarios: ScenarioPlan,
    /// Stop once `(primal − dual) / |primal|` falls below this.
    #[serde(default)]
    pub gap_tolerance: Option<f64>,
    /// Stop once every stage mean residual is below this in absolute value.
    #[serde(default)]
    pub residual_tolerance: Option<f64>,
    /// Strong convexity modulus, for the step-size check.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Coupling Lipschitz constant, for the step-size check.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub estimator: EstimatorKind,
    pub grids: GridConfig,
    /// Unit absorbing the coupling residual when estimating the primal value.
    #[serde(default)]
    pub slack_unit: Option<usize>,
    #[serde(default = "default_histogram_bins")]
    pub histogram_bins: usize,
}

impl UzawaConfig {
    pub fn new(step: f64, max_iterations: usize, scenarios: ScenarioPlan, grids: GridConfig) -> Self {
        UzawaConfig {
            step,
            stage_steps: None,
            max_iterations,
            scenarios,
            gap_tolerance: None,
            residual_tolerance: None,
            alpha: None,
            lipschitz: None,
            estimator: EstimatorKind::Constant,
            grids,
            slack_unit: None,
            histogram_bins: default_histogram_bins(),
        }
    }

    /// Per-stage steps, checked positive and finite.
    pub fn steps(&self, horizon: usize) -> Result<Vec<f64>> {
        let steps = match &self.stage_steps {
            Some(s) if s.len() != horizon => {
                return Err(Error::InvalidArgument(format!("{} stage steps given, horizon is {horizon}", s.len())))
            }
            Some(s) => s.clone(),
            None => vec![self.step; horizon],
        };
        if steps.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidArgument("step sizes must be positive".into()));
        }
        Ok(steps)
    }

    fn check(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("at least one iteration is required".into()));
        }
        if let ScenarioPlan::Sampled { count: 0, .. } = self.scenarios {
            return Err(Error::InvalidArgument("scenario count must be at least 1".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::InvalidArgument("histograms need at least one bin".into()));
        }
        Ok(())
    }

    pub fn build_scenarios(&self, spec: &ProblemSpec, exec: Execution) -> Result<ScenarioSet> {
        match self.scenarios {
            ScenarioPlan::Sampled { count, seed } => sample_scenarios(&spec.noise, count, seed, exec),
            ScenarioPlan::Exhaustive { max_paths } => enumerate_scenarios(&spec.noise, max_paths),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    DualityGap,
    Residual,
}

#[derive(Clone, Debug)]
pub struct DadpResult {
    /// Multipliers behind the final price.
    pub store: MultiplierStore,
    pub projection: Projection,
    pub policies: Vec<Policy>,
    pub reports: Vec<IterationReport>,
    pub stop: StopReason,
    pub step_check: Option<StepSizeReport>,
    pub scenarios: ScenarioSet,
    pub bundle: TrajectoryBundle,
    pub recovered: Option<TrajectoryBundle>,
}

/// Runs the loop on scenarios drawn from `config.scenarios`.
pub fn run_dadp(spec: &ProblemSpec, info: &InformationSpec, config: &UzawaConfig, exec: Execution) -> Result<DadpResult> {
    let scenarios = config.build_scenarios(spec, exec)?;
    run_dadp_on(spec, info, config, scenarios, exec, &mut |_| {})
}

/// Runs the loop on a given coordination set, passing each report to
/// `observer` as soon as it is complete.
pub fn run_dadp_on(
    spec: &ProblemSpec,
    info: &InformationSpec,
    config: &UzawaConfig,
    scenarios: ScenarioSet,
    exec: Execution,
    observer: &mut dyn FnMut(&IterationReport),
) -> Result<DadpResult> {
    let report = validate_problem(spec);
    if !report.is_valid() {
        return Err(Error::InvalidProblem(report.to_string()));
    }
    let errs = info.errors(spec.horizon, spec.noise.dim());
    if !errs.is_empty() {
        return Err(Error::InvalidArgument(errs.join("; ")));
    }
    config.check()?;
    if scenarios.horizon() != spec.horizon {
        return Err(Error::InvalidArgument("coordination scenarios do not match the horizon".into()));
    }
    let steps = config.steps(spec.horizon)?;
    let step_check = match (config.alpha, config.lipschitz) {
        (Some(a), Some(c)) => Some(check_step_size(a, c, &steps)?),
        _ => None,
    };
    let slack = config.slack_unit.map(|u| SlackUnit::new(spec, u)).transpose()?;
    let mut store = MultiplierStore::zeros(spec.horizon, scenarios.len(), spec.coupling_dim());
    let mut reports = Vec::new();
    for k in 1..=config.max_iterations {
        let started = Instant::now();
        let step = (|| {
            let projection = project_price(&store, &scenarios, info, &config.estimator)?;
            let eval = evaluate_price(spec, &projection.price, info, &config.grids, &scenarios, slack.as_ref(), exec)?;
            let residuals = residual_table(&eval.bundle);
            Ok::<_, Error>((projection, eval, residuals))
        })();
        let (projection, eval, residuals) = step.map_err(|e| Error::AtIteration { iteration: k, source: Box::new(e) })?;
        let report = IterationReport::build(k, &eval, &projection, &residuals, &scenarios, config.histogram_bins, started.elapsed());
        observer(&report);
        let stop = if config.residual_tolerance.is_some_and(|tol| report.max_mean_residual() <= tol) {
            Some(StopReason::Residual)
        } else if config.gap_tolerance.is_some_and(|tol| report.relative_gap().is_some_and(|g| g <= tol)) {
            Some(StopReason::DualityGap)
        } else if k == config.max_iterations {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        reports.push(report);
        if let Some(stop) = stop {
            return Ok(DadpResult {
                store,
                projection,
                policies: eval.policies,
                reports,
                stop,
                step_check,
                scenarios,
                bundle: eval.bundle,
                recovered: eval.recovered,
            });
        }
        store = multiplier_update(&store, &residuals, &steps).map_err(|e| Error::AtIteration { iteration: k, source: Box::new(e) })?;
    }
    unreachable!("the last iteration always stops")
}

#[cfg(test)]
mod tests;
