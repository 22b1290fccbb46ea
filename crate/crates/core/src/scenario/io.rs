use std::io::{Read, Write};

use super::{Scenario, ScenarioSet, ScenarioSource, TrajectoryBundle};
use crate::error::{Error, Result};

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// One row per `(scenario, stage)`: `scenario_id, weight, t, w0, ...`.
pub fn write_scenarios_csv<W: Write>(set: &ScenarioSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let q = set.scenarios.first().and_then(|s| s.noises.first()).map_or(0, Vec::len);
    let mut header = vec!["scenario_id".to_string(), "weight".into(), "t".into()];
    header.extend((0..q).map(|j| format!("w{j}")));
    w.write_record(&header)?;
    for (s, (sc, weight)) in set.scenarios.iter().zip(&set.weights).enumerate() {
        for (t, noise) in sc.noises.iter().enumerate() {
            let mut row = vec![s.to_string(), num(*weight), t.to_string()];
            row.extend(noise.iter().map(|v| num(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the layout of [`write_scenarios_csv`]. Rows must be grouped by
/// scenario with stages in order; the source is recorded as `source`.
pub fn read_scenarios_csv<R: Read>(input: R, source: ScenarioSource) -> Result<ScenarioSet> {
    let mut r = csv::Reader::from_reader(input);
    let mut scenarios: Vec<Scenario> = Vec::new();
    let mut weights = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Io(format!("row {}: bad field {k}", line + 1)))
        };
        let id = field(0)? as usize;
        let t = field(2)? as usize;
        let noise = (3..rec.len()).map(field).collect::<Result<Vec<_>>>()?;
        if id == scenarios.len() && t == 0 {
            scenarios.push(Scenario { noises: vec![noise] });
            weights.push(field(1)?);
        } else if id + 1 == scenarios.len() && t == scenarios[id].noises.len() {
            scenarios[id].noises.push(noise);
        } else {
            return Err(Error::Io(format!("row {}: scenarios must be listed in order", line + 1)));
        }
    }
    if scenarios.is_empty() {
        return Err(Error::Io("no scenarios in file".into()));
    }
    let horizon = scenarios[0].noises.len();
    if scenarios.iter().any(|s| s.noises.len() != horizon) {
        return Err(Error::Io("scenarios have different lengths".into()));
    }
    Ok(ScenarioSet { scenarios, weights, source })
}

/// One row per `(scenario, stage, subsystem)`, including the final stage
/// with state and final cost only. Shorter vectors leave blank columns.
pub fn write_trajectories_csv<W: Write>(bundle: &TrajectoryBundle, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let first = bundle.trajectories.first();
    let n = first.map_or(0, |tr| tr.states[0].iter().map(Vec::len).max().unwrap_or(0));
    let m = first.and_then(|tr| tr.controls.first()).map_or(0, |c| c.iter().map(Vec::len).max().unwrap_or(0));
    let d = first.and_then(|tr| tr.residuals.first()).map_or(0, Vec::len);
    let mut header = vec!["scenario_id".to_string(), "t".into(), "subsystem".into()];
    header.extend((0..n).map(|j| format!("x{j}")));
    header.extend((0..m).map(|j| format!("u{j}")));
    header.push("cost".into());
    header.push("clipped".into());
    header.extend((0..d).map(|j| format!("r{j}")));
    header.push("violated".into());
    w.write_record(&header)?;
    let pad = |row: &mut Vec<String>, v: Option<&Vec<f64>>, len: usize| {
        let v = v.map_or(&[][..], Vec::as_slice);
        row.extend(v.iter().map(|c| num(*c)));
        row.extend((v.len()..len).map(|_| String::new()));
    };
    for (s, tr) in bundle.trajectories.iter().enumerate() {
        let horizon = tr.controls.len();
        for t in 0..=horizon {
            for i in 0..tr.states[t].len() {
                let mut row = vec![s.to_string(), t.to_string(), i.to_string()];
                pad(&mut row, Some(&tr.states[t][i]), n);
                if t < horizon {
                    pad(&mut row, Some(&tr.controls[t][i]), m);
                    row.push(num(tr.stage_costs[t][i]));
                    row.push(tr.clipped[t][i].to_string());
                    pad(&mut row, Some(&tr.residuals[t]), d);
                    row.push(tr.violated[t].to_string());
                } else {
                    pad(&mut row, None, m);
                    row.push(num(tr.final_costs[i]));
                    row.push(String::new());
                    pad(&mut row, None, d);
                    row.push(String::new());
                }
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
