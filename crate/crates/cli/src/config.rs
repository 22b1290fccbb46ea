use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InfoMode {
    /// No information: stage-mean prices.
    Constant,
    /// The global noise coordinates of the current stage.
    Demand,
    /// The noise coordinates listed in `info_coords`.
    Noise,
    /// The whole path of the coordinate `info_coords[0]`.
    PerfectMemory,
    /// An information specification read from `info_file`.
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    Constant,
    Binned,
    Kernel,
}

/// Every knob of every subcommand. Keys of the `--config` file are the
/// flag names with `_` for `-`; flags win over file values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Problem file (JSON, `model` schema).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Grid configuration file; defaults to the problem's discretization.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_file: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Run every solver sequentially.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequential: Option<bool>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Number of sampled scenarios.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<usize>,
    /// Enumerate every noise path instead of sampling.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exhaustive: Option<bool>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_paths: Option<usize>,
    /// Scenario CSV (`scenario_id, weight, t, w0, ...`).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_file: Option<PathBuf>,
    /// Uzawa step, used at every stage.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Per-stage steps, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_steps: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_tol: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    /// Strong convexity modulus for the step-size check.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Coupling Lipschitz constant for the step-size check.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    /// Unit absorbing the coupling residual for primal estimates.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack_unit: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<InfoMode>,
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info_coords: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorChoice>,
    /// `distinct` or a number of equal-width bins per dimension.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<String>,
    /// Kernel bandwidth per information dimension, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram_bins: Option<usize>,
    /// Write residual histograms of every iteration, not only the last.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all_histograms: Option<bool>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RunConfig {
    /// `self` with every field set in `top` replaced.
    pub fn overlay(mut self, top: &RunConfig) -> RunConfig {
        overlay!(
            self, top, problem, out, grid_file, threads, sequential, seed, scenarios, exhaustive, max_paths,
            scenario_file, step, stage_steps, iters, gap_tol, residual_tol, alpha, lipschitz, slack_unit, info,
            info_coords, info_file, estimator, bins, bandwidth, histogram_bins, all_histograms
        );
        self
    }

    /// Fills the defaults so that the manifest records every value used.
    pub fn resolved(mut self) -> RunConfig {
        self.out.get_or_insert_with(|| PathBuf::from("."));
        self.threads.get_or_insert(0);
        self.sequential.get_or_insert(false);
        self.seed.get_or_insert(0);
        self.scenarios.get_or_insert(500);
        self.exhaustive.get_or_insert(false);
        self.max_paths.get_or_insert(100_000);
        self.step.get_or_insert(0.01);
        self.iters.get_or_insert(20);
        self.info.get_or_insert(InfoMode::Constant);
        self.estimator.get_or_insert(EstimatorChoice::Constant);
        self.bins.get_or_insert_with(|| "distinct".into());
        self.histogram_bins.get_or_insert(20);
        self.all_histograms.get_or_insert(false);
        self
    }
}
