use serde::{Deserialize, Serialize};

use super::Marginal;
use crate::error::{Error, Result};
use crate::model::{
    storage_unit, BoxBounds, CouplingSpec, Matrix, NoiseClass, NoiseModel, ProblemSpec, StageDistribution, StageSeq,
};
use crate::model::Coupling;
use crate::scenario::Scenario;

/// Reservoirs with costs `c_j u²/2`, terminal penalty `γ_j/2 (x_T − x_1)²`,
/// `γ_j = α c_j`, and demand `Σ_j u_j = d_t`. `horizon` counts the time
/// points `1..T`; decisions are taken at `1..T−1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrugarekParams {
    pub costs: Vec<f64>,
    pub gammas: Vec<f64>,
    pub alpha: f64,
    pub horizon: usize,
    pub initial_stocks: Vec<f64>,
    pub demand: Marginal,
    /// Inflow law of each reservoir, the same at every time point.
    pub inflows: Vec<Marginal>,
}

impl StrugarekParams {
    pub fn proportional(
        costs: Vec<f64>,
        alpha: f64,
        horizon: usize,
        initial_stocks: Vec<f64>,
        demand: Marginal,
        inflows: Vec<Marginal>,
    ) -> Self {
        let gammas = costs.iter().map(|c| alpha * c).collect();
        StrugarekParams { costs, gammas, alpha, horizon, initial_stocks, demand, inflows }
    }

    pub fn check(&self) -> Result<()> {
        let n = self.costs.len();
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if n == 0 || self.gammas.len() != n || self.initial_stocks.len() != n || self.inflows.len() != n {
            return bad("costs, gammas, initial stocks and inflows must have one entry per reservoir");
        }
        if self.costs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return bad("reservoir costs must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("α must be positive");
        }
        if self.costs.iter().zip(&self.gammas).any(|(c, g)| (g - self.alpha * c).abs() > 1e-12 * (self.alpha * c).abs().max(1.0)) {
            return bad("penalty weights must equal α times the costs");
        }
        if self.horizon < 2 {
            return bad("at least two time points are required");
        }
        self.demand.check("demand")?;
        for m in &self.inflows {
            m.check("inflow")?;
        }
        Ok(())
    }

    /// `1 / Σ_j 1/c_j`.
    fn aggregate_cost(&self) -> f64 {
        1.0 / self.costs.iter().map(|c| 1.0 / c).sum::<f64>()
    }

    fn mean_total_inflow(&self) -> f64 {
        self.inflows.iter().map(Marginal::mean).sum()
    }
}

/// Builds the decision problem on the pre-inflow stock `z_t = x_t − a_t`,
/// which follows `z_{t+1} = z_t + a_t − u_t` with `a_t` revealed at `t`.
/// Noise is `w = (d, a^1, ..., a^n)`; the first stage has no inflow.
/// No bounds are imposed.
pub fn make_strugarek(params: &StrugarekParams) -> Result<ProblemSpec> {
    params.check()?;
    let n = params.costs.len();
    let q = 1 + n;
    let stages = (0..params.horizon - 1)
        .map(|t| {
            let mut marginals = vec![(params.demand.values.clone(), params.demand.probabilities())];
            for m in &params.inflows {
                marginals.push(if t == 0 { (vec![0.0], vec![1.0]) } else { (m.values.clone(), m.probabilities()) });
            }
            StageDistribution::product(&marginals)
        })
        .collect();
    let mut partition = vec![NoiseClass::Global];
    partition.extend((0..n).map(NoiseClass::Local));
    let inf = f64::INFINITY;
    let subsystems = (0..n)
        .map(|j| {
            // only the mean of the last inflow matters for the terminal penalty
            let target = params.initial_stocks[j] - params.inflows[j].mean();
            let mut unit = storage_unit(
                &format!("reservoir{j}"),
                Some(1 + j),
                q,
                params.costs[j] / 2.0,
                params.gammas[j] / 2.0,
                target,
                params.initial_stocks[j],
                (-inf, inf),
                (-inf, inf),
            );
            unit.state_bounds = BoxBounds::unbounded(1);
            unit.control_bounds = BoxBounds::unbounded(1);
            if j == n - 1 {
                unit.coupling = StageSeq::Constant(Coupling::Affine {
                    gx: None,
                    gu: Some(Matrix::identity(1)),
                    gw: Some(Matrix::sparse(1, q, &[(0, 0, -1.0)])),
                    c: None,
                });
            }
            unit
        })
        .collect();
    Ok(ProblemSpec {
        name: Some("strugarek".into()),
        horizon: params.horizon - 1,
        noise: NoiseModel { stages, partition },
        subsystems,
        coupling: CouplingSpec { dimension: 1 },
        discretization: None,
    })
}

/// Closed-form price `λ_1..λ_{T−1}` (a marginal cost, positive when demand
/// is expensive) along a scenario of [`make_strugarek`]'s problem.
pub fn strugarek_price_oracle(params: &StrugarekParams, scenario: &Scenario) -> Result<Vec<f64>> {
    params.check()?;
    let decisions = params.horizon - 1;
    if scenario.noises.len() != decisions {
        return Err(Error::InvalidArgument(format!("scenario must have {decisions} stages")));
    }
    let c = params.aggregate_cost();
    let alpha = params.alpha;
    let ea = params.mean_total_inflow();
    let ed = params.demand.mean();
    let d = |t: usize| scenario.noises[t - 1][0];
    let a = |t: usize| scenario.noises[t - 1][1..].iter().sum::<f64>();
    let big_t = params.horizon as f64;
    let mut lambda = c * (d(1) * (1.0 + alpha) - alpha * (big_t - 1.0) * ea + alpha * (big_t - 2.0) * ed);
    let mut out = vec![lambda];
    for t in 1..decisions {
        lambda += c * (d(t + 1) * (1.0 + alpha) - d(t) - alpha * ed - alpha * (a(t + 1) - ea));
        out.push(lambda);
    }
    Ok(out)
}
