//! Conditional-expectation estimators `E[λ | y]` fitted on per-scenario
//! samples, and the deviance fit indicator.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Paired samples `(y_s, λ_s)` for one stage, optionally weighted.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTable {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

impl SampleTable {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(inputs, targets, None)
    }

    /// Weighted table, e.g. path probabilities of an exhaustive tree.
    pub fn weighted(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        Self::build(inputs, targets, Some(weights))
    }

    fn build(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidArgument("sample table needs at least one row and equal column counts".into()));
        }
        let (p, d) = (inputs[0].len(), targets[0].len());
        if inputs.iter().any(|y| y.len() != p) || targets.iter().any(|l| l.len() != d) {
            return Err(Error::InvalidArgument("sample table rows differ in dimension".into()));
        }
        for (s, (y, l)) in inputs.iter().zip(&targets).enumerate() {
            if y.iter().chain(l).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteSample(s));
            }
        }
        if let Some(w) = &weights {
            if w.len() != inputs.len() {
                return Err(Error::InvalidArgument("one weight per row required".into()));
            }
            if let Some(s) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::NonFiniteSample(s));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidArgument("weights sum to zero".into()));
            }
        }
        Ok(SampleTable { inputs, targets, weights })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn target_dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn weight(&self, s: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[s])
    }
}

/// Weighted mean over a subset of rows: `Σ (w_s / W) λ_s`.
///
/// Normalizing each weight first makes a single-row mean reproduce the row.
fn subset_mean(table: &SampleTable, rows: &[usize]) -> (Vec<f64>, f64) {
    let total: f64 = rows.iter().map(|&s| table.weight(s)).sum();
    let mut mean = vec![0.0; table.target_dim()];
    for &s in rows {
        let share = table.weight(s) / total;
        for (m, v) in mean.iter_mut().zip(&table.targets[s]) {
            *m += share * v;
        }
    }
    (mean, total)
}

fn global_mean(table: &SampleTable) -> Vec<f64> {
    let rows: Vec<usize> = (0..table.len()).collect();
    subset_mean(table, &rows).0
}

fn weighted_sd(values: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let total: f64 = values.clone().map(|(_, w)| w).sum();
    let mean = values.clone().map(|(v, w)| w * v).sum::<f64>() / total;
    let var = values.map(|(v, w)| w * (v - mean) * (v - mean)).sum::<f64>() / total;
    var.max(0.0).sqrt()
}

/// How bin boundaries are chosen along each information coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinSpec {
    /// Interior cut points per dimension; `m` cuts make `m + 1` bins.
    Edges(Vec<Vec<f64>>),
    /// `n` equal-width bins spanning the sample range of each dimension.
    Uniform(usize),
    /// One bin per distinct sample value.
    Distinct,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    Constant,
    Binned { bins: BinSpec },
    /// Gaussian Nadaraya–Watson; `None` uses `sd · S^(-1/5)` per dimension.
    Kernel {
        #[serde(default)]
        bandwidth: Option<Vec<f64>>,
    },
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Constant => "constant",
            EstimatorKind::Binned { .. } => "binned",
            EstimatorKind::Kernel { .. } => "kernel",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Bin {
    mean: Vec<f64>,
    weight: f64,
    count: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Fitted {
    Constant,
    Binned { cuts: Vec<Vec<f64>>, bins: BTreeMap<usize, Bin> },
    Kernel { bandwidth: Vec<f64>, table: SampleTable },
}

/// A fitted conditional-mean estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimator {
    input_dim: usize,
    mean: Vec<f64>,
    fitted: Fitted,
}

impl Estimator {
    /// Fixed prediction regardless of the query.
    pub fn constant(value: Vec<f64>, input_dim: usize) -> Self {
        Estimator { input_dim, mean: value, fitted: Fitted::Constant }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn global_mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn kind_label(&self) -> &'static str {
        match self.fitted {
            Fitted::Constant => "constant",
            Fitted::Binned { .. } => "binned",
            Fitted::Kernel { .. } => "kernel",
        }
    }

    /// Number of nonempty bins, or `None` for other kinds.
    pub fn occupied_bins(&self) -> Option<usize> {
        match &self.fitted {
            Fitted::Binned { bins, .. } => Some(bins.len()),
            _ => None,
        }
    }

    pub fn bandwidth(&self) -> Option<&[f64]> {
        match &self.fitted {
            Fitted::Kernel { bandwidth, .. } => Some(bandwidth),
            _ => None,
        }
    }

    pub fn predict(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.input_dim {
            return Err(Error::InvalidArgument(format!(
                "query has dimension {}, estimator expects {}",
                y.len(),
                self.input_dim
            )));
        }
        Ok(self.predict_unchecked(y))
    }

    pub(crate) fn predict_unchecked(&self, y: &[f64]) -> Vec<f64> {
        match &self.fitted {
            Fitted::Constant => self.mean.clone(),
            Fitted::Binned { cuts, bins } => match bins.get(&bin_index(cuts, y)) {
                Some(b) => b.mean.clone(),
                None => self.mean.clone(),
            },
            Fitted::Kernel { bandwidth, table } => kernel_predict(table, bandwidth, y),
        }
    }

    /// Audit dump: one row per bin (or retained sample) with its parameters.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.output_dim();
        let mut header = vec!["id".to_string(), "kind".into(), "count".into(), "weight".into()];
        for j in 0..self.input_dim {
            header.push(format!("y{j}_lo"));
            header.push(format!("y{j}_hi"));
        }
        header.extend((0..d).map(|j| format!("value{j}")));
        w.write_record(&header)?;
        let fmt = |v: &f64| format!("{v:?}");
        let blank = |n: usize| (0..2 * n).map(|_| String::new());
        match &self.fitted {
            Fitted::Constant => {
                let mut row = vec!["global".to_string(), "constant".into(), String::new(), String::new()];
                row.extend(blank(self.input_dim));
                row.extend(self.mean.iter().map(fmt));
                w.write_record(&row)?;
            }
            Fitted::Binned { cuts, bins } => {
                for (id, b) in bins {
                    let mut row = vec![id.to_string(), "bin".into(), b.count.to_string(), fmt(&b.weight)];
                    for (lo, hi) in bin_bounds(cuts, *id) {
                        row.push(lo.as_ref().map_or(String::new(), fmt));
                        row.push(hi.as_ref().map_or(String::new(), fmt));
                    }
                    row.extend(b.mean.iter().map(fmt));
                    w.write_record(&row)?;
                }
                let mut row = vec!["fallback".to_string(), "global".into(), String::new(), String::new()];
                row.extend(blank(self.input_dim));
                row.extend(self.mean.iter().map(fmt));
                w.write_record(&row)?;
            }
            Fitted::Kernel { bandwidth, table } => {
                let mut row = vec!["bandwidth".to_string(), "kernel".into(), table.len().to_string(), String::new()];
                for h in bandwidth {
                    row.push(fmt(h));
                    row.push(fmt(h));
                }
                row.extend((0..d).map(|_| String::new()));
                w.write_record(&row)?;
                for s in 0..table.len() {
                    let mut row = vec![s.to_string(), "sample".into(), "1".into(), fmt(&table.weight(s))];
                    for y in &table.inputs[s] {
                        row.push(fmt(y));
                        row.push(fmt(y));
                    }
                    row.extend(table.targets[s].iter().map(fmt));
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Mixed-radix product bin index; dimension 0 varies slowest.
fn bin_index(cuts: &[Vec<f64>], y: &[f64]) -> usize {
    let mut idx = 0;
    for (c, v) in cuts.iter().zip(y) {
        idx = idx * (c.len() + 1) + c.partition_point(|e| e <= v);
    }
    idx
}

/// Per-dimension `(lower, upper)` cut bounding a bin; open ends are `None`.
fn bin_bounds(cuts: &[Vec<f64>], mut id: usize) -> Vec<(Option<f64>, Option<f64>)> {
    let mut bounds = vec![(None, None); cuts.len()];
    for (j, c) in cuts.iter().enumerate().rev() {
        let k = id % (c.len() + 1);
        id /= c.len() + 1;
        bounds[j] = (k.checked_sub(1).map(|i| c[i]), c.get(k).copied());
    }
    bounds
}

fn cuts_for(table: &SampleTable, spec: &BinSpec) -> Result<Vec<Vec<f64>>> {
    let p = table.input_dim();
    match spec {
        BinSpec::Edges(edges) => {
            if edges.len() != p {
                return Err(Error::InvalidArgument(format!("bin edges given for {} dimensions, need {p}", edges.len())));
            }
            for e in edges {
                if e.windows(2).any(|w| !(w[0] < w[1])) || e.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("bin edges must be finite and strictly increasing".into()));
                }
            }
            Ok(edges.clone())
        }
        BinSpec::Uniform(n) => {
            if *n == 0 {
                return Err(Error::InvalidArgument("uniform binning needs at least one bin".into()));
            }
            Ok((0..p)
                .map(|j| {
                    let lo = table.inputs.iter().map(|y| y[j]).fold(f64::INFINITY, f64::min);
                    let hi = table.inputs.iter().map(|y| y[j]).fold(f64::NEG_INFINITY, f64::max);
                    if hi > lo {
                        (1..*n).map(|k| lo + (hi - lo) * k as f64 / *n as f64).collect()
                    } else {
                        Vec::new()
                    }
                })
                .collect())
        }
        BinSpec::Distinct => Ok((0..p)
            .map(|j| {
                let mut vals: Vec<f64> = table.inputs.iter().map(|y| y[j]).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                vals.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            })
            .collect()),
    }
}

fn kernel_predict(table: &SampleTable, bandwidth: &[f64], y: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = (0..table.len())
        .map(|s| {
            let q: f64 = table.inputs[s]
                .iter()
                .zip(y)
                .zip(bandwidth)
                .map(|((a, b), h)| {
                    let z = (a - b) / h;
                    z * z
                })
                .sum();
            table.weight(s).ln() - 0.5 * q
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    let mut out = vec![0.0; table.target_dim()];
    for (s, r) in raw.iter().enumerate() {
        let share = r / total;
        for (o, v) in out.iter_mut().zip(&table.targets[s]) {
            *o += share * v;
        }
    }
    out
}

/// Fits an estimator of the given kind. Deterministic.
pub fn fit_estimator(table: &SampleTable, kind: &EstimatorKind) -> Result<Estimator> {
    let mean = global_mean(table);
    let input_dim = table.input_dim();
    let fitted = match kind {
        EstimatorKind::Constant => Fitted::Constant,
        EstimatorKind::Binned { bins: spec } => {
            let cuts = cuts_for(table, spec)?;
            let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (s, y) in table.inputs.iter().enumerate() {
                members.entry(bin_index(&cuts, y)).or_default().push(s);
            }
            let bins = members
                .into_iter()
                .filter_map(|(id, rows)| {
                    let (m, weight) = subset_mean(table, &rows);
                    (weight > 0.0).then_some((id, Bin { mean: m, weight, count: rows.len() }))
                })
                .collect();
            Fitted::Binned { cuts, bins }
        }
        EstimatorKind::Kernel { bandwidth } => {
            let h = match bandwidth {
                Some(h) => {
                    if h.len() != input_dim || h.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                        return Err(Error::InvalidArgument("kernel bandwidth must be positive in every dimension".into()));
                    }
                    h.clone()
                }
                None => default_bandwidth(table),
            };
            Fitted::Kernel { bandwidth: h, table: table.clone() }
        }
    };
    Ok(Estimator { input_dim, mean, fitted })
}

/// `sd_j · S^(-1/5)` per dimension, 1 where the sample is constant.
pub fn default_bandwidth(table: &SampleTable) -> Vec<f64> {
    let factor = (table.len() as f64).powf(-0.2);
    (0..table.input_dim())
        .map(|j| {
            let sd = weighted_sd((0..table.len()).map(|s| (table.inputs[s][j], table.weight(s))));
            if sd > 0.0 {
                sd * factor
            } else {
                1.0
            }
        })
        .collect()
}

fn sse(table: &SampleTable, predict: impl Fn(usize) -> Vec<f64>) -> f64 {
    let mut acc = 0.0;
    for s in 0..table.len() {
        let p = predict(s);
        let e: f64 = table.targets[s].iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += table.weight(s) * e;
    }
    acc
}

/// `1 − SSE(est) / SSE(mean)`, weighted by row weights.
pub fn deviance(est: &Estimator, table: &SampleTable) -> Result<f64> {
    if table.len() < 2 || table.input_dim() != est.input_dim() {
        return Err(Error::DevianceUndefined);
    }
    let mean = global_mean(table);
    let base = sse(table, |_| mean.clone());
    if base <= 0.0 {
        return Err(Error::DevianceUndefined);
    }
    let fit = sse(table, |s| est.predict_unchecked(&table.inputs[s]));
    Ok(1.0 - fit / base)
}
