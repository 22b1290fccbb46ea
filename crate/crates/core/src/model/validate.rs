use std::fmt;

use serde::Serialize;

use super::noise::NoiseClass;
use super::problem::ProblemSpec;

/// One violated invariant with its location.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub subsystem: Option<usize>,
    pub stage: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.subsystem, self.stage) {
            (Some(i), Some(t)) => write!(f, "subsystem {i}, stage {t}: {}", self.message),
            (Some(i), None) => write!(f, "subsystem {i}: {}", self.message),
            (None, Some(t)) => write!(f, "stage {t}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, subsystem: Option<usize>, stage: Option<usize>, message: impl Into<String>) {
        self.violations.push(Violation { subsystem, stage, message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("OK");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Parses a problem document; schema errors come back as a report.
pub fn parse_problem(text: &str) -> Result<ProblemSpec, ValidationReport> {
    match serde_json::from_str::<ProblemSpec>(text) {
        Ok(spec) => {
            let report = validate_problem(&spec);
            if report.is_valid() {
                Ok(spec)
            } else {
                Err(report)
            }
        }
        Err(e) => {
            let mut r = ValidationReport::default();
            r.push(None, None, format!("schema: {e}"));
            Err(r)
        }
    }
}

/// Checks every structural invariant and reports all violations.
pub fn validate_problem(spec: &ProblemSpec) -> ValidationReport {
    let mut r = ValidationReport::default();
    let horizon = spec.horizon;
    let q = spec.noise.dim();
    let d = spec.coupling_dim();
    if horizon == 0 {
        r.push(None, None, "horizon must be at least 1");
    }
    if spec.noise.horizon() != horizon {
        r.push(None, None, format!("noise has {} stages, horizon is {horizon}", spec.noise.horizon()));
    }
    if spec.subsystems.is_empty() {
        r.push(None, None, "problem has no subsystems");
    }
    for (t, msg) in spec.noise.errors() {
        r.push(None, t, msg);
    }
    for (j, class) in spec.noise.partition.iter().enumerate() {
        if let NoiseClass::Local(i) = class {
            if *i >= spec.subsystems.len() {
                r.push(None, None, format!("noise coordinate {j} is local to missing subsystem {i}"));
            }
        }
    }

    // coupling dimensions first: a mismatch is reported once, not per stage
    let dims_ok = spec
        .subsystems
        .iter()
        .flat_map(|sub| sub.coupling.all())
        .all(|g| g.dimension().is_none_or(|gd| gd == d));
    if !dims_ok {
        r.push(None, None, "coupling dimension mismatch");
    }

    for (i, sub) in spec.subsystems.iter().enumerate() {
        let (n, m) = (sub.state_dim, sub.control_dim);
        if sub.initial_state.len() != n {
            r.push(Some(i), None, format!("initial state must have length {n}"));
        }
        for (name, count, expected) in [
            ("dynamics", sub.dynamics.stage_count(), horizon),
            ("stage cost", sub.stage_cost.stage_count(), horizon),
            ("coupling", sub.coupling.stage_count(), horizon),
        ] {
            if count.is_some_and(|c| c != expected) {
                r.push(Some(i), None, format!("{name} lists {} stages, expected {expected}", count.unwrap_or(0)));
            }
        }
        if sub.has_empty_bound_seq() {
            r.push(Some(i), None, "per-stage bounds list is empty");
            continue;
        }
        let mut bound_len_ok = true;
        for (seq, dim, name) in sub.bound_seqs() {
            let expected_stages = if name.starts_with("state") { horizon + 1 } else { horizon };
            if dim == 0 && matches!(seq, super::problem::BoundSeq::Constant(v) if v.is_empty()) {
                continue;
            }
            if seq.stage_count().is_some_and(|c| c != expected_stages) {
                r.push(Some(i), None, format!("{name} lists {} stages, expected {expected_stages}", seq.stage_count().unwrap_or(0)));
                bound_len_ok = false;
                continue;
            }
            for t in 0..expected_stages {
                if seq.at(t).len() != dim {
                    r.push(Some(i), Some(t), format!("{name} must have length {dim}"));
                    bound_len_ok = false;
                    break;
                }
            }
        }
        let counts = [sub.dynamics.stage_count(), sub.stage_cost.stage_count(), sub.coupling.stage_count()];
        if dims_ok && counts.iter().all(|c| c.is_none_or(|c| c == horizon)) {
            // stage-invariant mappings only need one check
            let stages = if counts.iter().all(Option::is_none) { horizon.min(1) } else { horizon };
            for t in 0..stages {
                for msg in sub.shape_errors(t, d, q) {
                    r.push(Some(i), Some(t), msg);
                }
            }
        }
        for msg in sub.final_cost.shape_errors(n, 0) {
            r.push(Some(i), None, format!("final cost: {msg}"));
        }
        if !bound_len_ok {
            continue;
        }
        for t in 0..=horizon {
            if n > 0 {
                let (lo, hi) = sub.state_box(t);
                if lo.iter().zip(&hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
                    r.push(Some(i), Some(t), "state bounds inverted");
                }
            }
            if t < horizon && m > 0 {
                let (lo, hi) = sub.control_box(t);
                if lo.iter().zip(&hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
                    r.push(Some(i), Some(t), "control bounds inverted");
                }
            }
        }
        if sub.initial_state.len() == n && n > 0 {
            let (lo, hi) = sub.state_box(0);
            if sub.initial_state.iter().zip(lo.iter().zip(&hi)).any(|(x, (l, h))| !x.is_finite() || x < l || x > h) {
                r.push(Some(i), Some(0), "initial state outside stage-0 state bounds");
            }
        }
    }
    if let Some(grid) = &spec.discretization {
        if grid.units.len() != spec.subsystems.len() {
            r.push(None, None, "discretization must list one entry per subsystem");
        } else {
            for (i, (g, sub)) in grid.units.iter().zip(&spec.subsystems).enumerate() {
                if g.state_nodes.len() != sub.state_dim || g.control_nodes.len() != sub.control_dim {
                    r.push(Some(i), None, "discretization node counts do not match dimensions");
                } else if g.state_nodes.iter().chain(&g.control_nodes).any(|&k| k == 0) {
                    r.push(Some(i), None, "discretization node counts must be positive");
                }
            }
        }
    }
    r
}
