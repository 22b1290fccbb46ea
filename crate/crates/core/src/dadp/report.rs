use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Evaluation, Projection};
use crate::error::Result;
use crate::scenario::{MonteCarloEstimate, ScenarioSet};

/// Equal-width histogram of one residual coordinate; masses sum to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lower: f64,
    pub upper: f64,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn build(values: &[f64], weights: &[f64], bins: usize) -> Self {
        let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
        let upper = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = weights.iter().sum();
        if !(upper > lower) {
            return Histogram { lower, upper, masses: vec![1.0] };
        }
        let mut masses = vec![0.0; bins];
        let width = (upper - lower) / bins as f64;
        for (v, w) in values.iter().zip(weights) {
            let b = (((v - lower) / width) as usize).min(bins - 1);
            masses[b] += w / total;
        }
        Histogram { lower, upper, masses }
    }

    pub fn edges(&self) -> Vec<f64> {
        let n = self.masses.len();
        (0..=n).map(|b| if b == n { self.upper } else { self.lower + (self.upper - self.lower) * b as f64 / n as f64 }).collect()
    }
}

/// Residual statistics of one stage, per coupling coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// 95% half-width of the mean; 0 on exhaustive sets.
    pub half_width: Vec<f64>,
    /// Weighted mean of `‖r_t^s‖_∞`.
    pub mean_abs: f64,
    pub deviance: Option<f64>,
    pub histograms: Vec<Histogram>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub dual: MonteCarloEstimate,
    pub dual_exact: f64,
    pub primal: Option<MonteCarloEstimate>,
    /// Stages where recovery could not close the residual.
    pub violations: usize,
    pub stages: Vec<StageReport>,
    pub wall_time: Duration,
}

impl IterationReport {
    pub(crate) fn build(
        iteration: usize,
        eval: &Evaluation,
        projection: &Projection,
        residuals: &[Vec<Vec<f64>>],
        scenarios: &ScenarioSet,
        bins: usize,
        wall_time: Duration,
    ) -> Self {
        let weights = &scenarios.weights;
        let total: f64 = weights.iter().sum();
        let stages = residuals
            .iter()
            .zip(&projection.deviance)
            .map(|(rs, dev)| {
                let d = rs.first().map_or(0, Vec::len);
                let mut mean = Vec::with_capacity(d);
                let mut sd = Vec::with_capacity(d);
                let mut half_width = Vec::with_capacity(d);
                let mut histograms = Vec::with_capacity(d);
                for j in 0..d {
                    let col: Vec<f64> = rs.iter().map(|r| r[j]).collect();
                    let est = MonteCarloEstimate::from_values(&col, weights, scenarios.source);
                    let m = col.iter().zip(weights).map(|(v, w)| w * v).sum::<f64>() / total;
                    let var = col.iter().zip(weights).map(|(v, w)| w * (v - m) * (v - m)).sum::<f64>() / total;
                    mean.push(est.mean);
                    sd.push(var.max(0.0).sqrt());
                    half_width.push(est.half_width);
                    histograms.push(Histogram::build(&col, weights, bins));
                }
                let mean_abs = rs
                    .iter()
                    .zip(weights)
                    .map(|(r, w)| w * r.iter().fold(0.0f64, |a, v| a.max(v.abs())))
                    .sum::<f64>()
                    / total;
                StageReport { mean, sd, half_width, mean_abs, deviance: *dev, histograms }
            })
            .collect();
        IterationReport {
            iteration,
            dual: eval.dual,
            dual_exact: eval.dual_exact,
            primal: eval.primal,
            violations: eval.recovered.as_ref().map_or(0, |b| b.violation_count()),
            stages,
            wall_time,
        }
    }

    /// Largest `|mean residual|` over stages and coordinates.
    pub fn max_mean_residual(&self) -> f64 {
        self.stages.iter().flat_map(|s| s.mean.iter()).fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest weighted mean of `‖r_t^s‖_∞` over stages.
    pub fn max_mean_abs_residual(&self) -> f64 {
        self.stages.iter().fold(0.0, |a, s| a.max(s.mean_abs))
    }

    /// `(primal − dual) / |primal|`, when a primal estimate exists.
    pub fn relative_gap(&self) -> Option<f64> {
        self.primal.map(|p| (p.mean - self.dual.mean) / p.mean.abs().max(f64::MIN_POSITIVE))
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// One row per iteration. Wall time is left out so that identical runs give
/// identical files.
pub fn write_iterations_csv<W: Write>(reports: &[IterationReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = reports.first() else {
        w.flush()?;
        return Ok(());
    };
    let d = first.stages.first().map_or(0, |s| s.mean.len());
    let mut header: Vec<String> =
        ["k", "dual", "dual_ci", "dual_exact", "primal", "primal_ci", "gap", "violations"].map(String::from).to_vec();
    for t in 0..first.stages.len() {
        for j in 0..d {
            header.push(format!("mean_t{t}_r{j}"));
            header.push(format!("sd_t{t}_r{j}"));
        }
        header.push(format!("deviance_t{t}"));
    }
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![r.iteration.to_string(), num(r.dual.mean), num(r.dual.half_width), num(r.dual_exact)];
        match r.primal {
            Some(p) => {
                row.push(num(p.mean));
                row.push(num(p.half_width));
                row.push(num(p.mean - r.dual.mean));
            }
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        row.push(r.violations.to_string());
        for s in &r.stages {
            for (m, sd) in s.mean.iter().zip(&s.sd) {
                row.push(num(*m));
                row.push(num(*sd));
            }
            row.push(s.deviance.map(num).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Residual histogram of stage `t`: `coordinate, bin, lower, upper, mass`.
pub fn write_residual_histogram_csv<W: Write>(report: &IterationReport, t: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["coordinate", "bin", "lower", "upper", "mass"])?;
    for (j, h) in report.stages[t].histograms.iter().enumerate() {
        let edges = h.edges();
        for (b, m) in h.masses.iter().enumerate() {
            w.write_record([j.to_string(), b.to_string(), num(edges[b]), num(edges[b + 1]), num(*m)])?;
        }
    }
    w.flush()?;
    Ok(())
}
