use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dadp_core::bench::{
    make_independent_suite, make_multistock, make_strugarek, make_three_unit, perfect_memory_info, strugarek_price_oracle,
    tiny_instance, StrugarekParams, ThreeUnitParams,
};
use dadp_core::condexp::{BinSpec, EstimatorKind};
use dadp_core::dadp::{run_dadp_on, write_iterations_csv, write_residual_histogram_csv, ScenarioPlan, UzawaConfig};
use dadp_core::dp::solve_global_dp;
use dadp_core::model::{parse_problem, AffineMap, GridConfig, InformationSpec, Matrix, NoiseClass, ProblemSpec, ValidationReport};
use dadp_core::scenario::{
    enumerate_scenarios, estimate_cost, read_scenarios_csv, sample_scenarios, simulate_policy, write_scenarios_csv,
    write_trajectories_csv, ScenarioSet, ScenarioSource,
};
use dadp_core::{Error, Execution};
use serde::Serialize;
use serde_json::json;

use crate::config::{EstimatorChoice, InfoMode, RunConfig};
use crate::{Command, GenerateKind, Opts};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Invalid(ValidationReport),
    Runtime(Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Invalid(_) | Failure::Runtime(Error::InvalidProblem(_)) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "error: {m}"),
            Failure::Invalid(r) => write!(f, "invalid problem:\n{}", r.to_string().trim_end()),
            Failure::Runtime(e) => write!(f, "error in module `{}`: {e}", e.module()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn usage<T>(m: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(m.into()))
}

fn read_text(path: &Path, what: &str) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {what} file {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Outcome<T> {
    let text = read_text(path, what)?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{what} file {}: {e}", path.display())))
}

fn load_config(opts: &Opts) -> Outcome<RunConfig> {
    let base = match &opts.config {
        Some(p) => read_json::<RunConfig>(p, "config")?,
        None => RunConfig::default(),
    };
    Ok(base.overlay(&opts.flags).resolved())
}

fn execution(cfg: &RunConfig) -> Outcome<Execution> {
    let threads = cfg.threads.unwrap_or(0);
    #[cfg(feature = "parallel")]
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(if cfg.sequential == Some(true) { Execution::Sequential } else { Execution::Parallel })
}

fn load_problem(cfg: &RunConfig) -> Outcome<ProblemSpec> {
    let Some(path) = &cfg.problem else {
        return usage("no problem given; pass --problem <file.json>");
    };
    parse_problem(&read_text(path, "problem")?).map_err(Failure::Invalid)
}

fn grids(cfg: &RunConfig, spec: &ProblemSpec) -> Outcome<GridConfig> {
    match (&cfg.grid_file, &spec.discretization) {
        (Some(p), _) => read_json(p, "grid"),
        (None, Some(g)) => Ok(g.clone()),
        (None, None) => usage("no grid; add `discretization` to the problem or pass --grid-file"),
    }
}

fn scenarios(cfg: &RunConfig, spec: &ProblemSpec, exec: Execution) -> Outcome<ScenarioSet> {
    let seed = cfg.seed.unwrap_or(0);
    let exhaustive = cfg.exhaustive == Some(true);
    if let Some(p) = &cfg.scenario_file {
        let file = File::open(p).map_err(|e| Failure::Usage(format!("cannot read scenario file {}: {e}", p.display())))?;
        let source = if exhaustive { ScenarioSource::Exhaustive } else { ScenarioSource::Sampled { seed } };
        return Ok(read_scenarios_csv(file, source)?);
    }
    Ok(if exhaustive {
        enumerate_scenarios(&spec.noise, cfg.max_paths.unwrap_or(100_000))?
    } else {
        sample_scenarios(&spec.noise, cfg.scenarios.unwrap_or(500), seed, exec)?
    })
}

fn noise_info(coords: &[usize], q: usize) -> InformationSpec {
    let entries: Vec<(usize, usize, f64)> = coords.iter().enumerate().map(|(r, &c)| (r, c, 1.0)).collect();
    InformationSpec::Noise { map: AffineMap { a: None, b: Matrix::sparse(coords.len(), q, &entries), c: None } }
}

fn information(cfg: &RunConfig, spec: &ProblemSpec) -> Outcome<InformationSpec> {
    let q = spec.noise.dim();
    let coords = || -> Outcome<Vec<usize>> {
        match &cfg.info_coords {
            Some(c) if !c.is_empty() && c.iter().all(|j| *j < q) => Ok(c.clone()),
            _ => usage(format!("--info-coords must list noise coordinates below {q}")),
        }
    };
    Ok(match cfg.info.unwrap_or(InfoMode::Constant) {
        InfoMode::Constant => InformationSpec::Constant,
        InfoMode::Demand => {
            let global: Vec<usize> = (0..q).filter(|&j| spec.noise.partition[j] == NoiseClass::Global).collect();
            if global.is_empty() {
                return usage("--info demand needs at least one global noise coordinate");
            }
            noise_info(&global, q)
        }
        InfoMode::Noise => noise_info(&coords()?, q),
        InfoMode::PerfectMemory => perfect_memory_info(&spec.noise, coords()?[0])?,
        InfoMode::File => match &cfg.info_file {
            Some(p) => read_json(p, "information")?,
            None => return usage("--info file needs --info-file <info.json>"),
        },
    })
}

fn estimator(cfg: &RunConfig) -> Outcome<EstimatorKind> {
    Ok(match cfg.estimator.unwrap_or(EstimatorChoice::Constant) {
        EstimatorChoice::Constant => EstimatorKind::Constant,
        EstimatorChoice::Binned => {
            let bins = match cfg.bins.as_deref().unwrap_or("distinct") {
                "distinct" => BinSpec::Distinct,
                n => match n.parse::<usize>() {
                    Ok(n) if n > 0 => BinSpec::Uniform(n),
                    _ => return usage(format!("--bins must be `distinct` or a positive integer, got `{n}`")),
                },
            };
            EstimatorKind::Binned { bins }
        }
        EstimatorChoice::Kernel => EstimatorKind::Kernel { bandwidth: cfg.bandwidth.clone() },
    })
}

fn out_dir(cfg: &RunConfig) -> Outcome<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Outcome<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, outputs: &[String], results: impl Serialize) -> Outcome {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "parallel_feature": cfg!(feature = "parallel"),
        "config": cfg,
        "outputs": outputs,
        "results": results,
        "created_unix": created,
    });
    let mut w = create(dir, "manifest.json")?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::Runtime(e.into()))
}

pub fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Validate { file, opts } => validate(file, &opts),
        Command::SolveDp { opts } => solve_dp(&load_config(&opts)?),
        Command::SolveDadp { opts } => solve_dadp(&load_config(&opts)?),
        Command::Simulate { opts } => simulate(&load_config(&opts)?),
        Command::Oracle { strugarek, scenario, opts } => oracle(&strugarek, scenario.as_deref(), &load_config(&opts)?),
        Command::Generate { kind, units, horizon, shared, params, output, seed } => {
            generate(kind, units, horizon, shared, params.as_deref(), output.as_deref(), seed)
        }
    }
}

fn validate(file: Option<PathBuf>, opts: &Opts) -> Outcome {
    let mut cfg = load_config(opts)?;
    if file.is_some() {
        cfg.problem = file;
    }
    load_problem(&cfg)?;
    println!("OK");
    Ok(())
}

fn solve_dp(cfg: &RunConfig) -> Outcome {
    let exec = execution(cfg)?;
    let spec = load_problem(cfg)?;
    let grids = grids(cfg, &spec)?;
    let dir = out_dir(cfg)?;
    let sol = solve_global_dp(&spec, &grids, exec)?;
    let mut w = create(&dir, "value_function.csv")?;
    sol.value.write_csv(&mut w)?;
    w.flush().map_err(|e| Failure::Runtime(e.into()))?;
    println!("value {:?}", sol.initial_value);
    write_manifest(&dir, "solve-dp", cfg, &["value_function.csv".into()], json!({ "initial_value": sol.initial_value }))
}

fn solve_dadp(cfg: &RunConfig) -> Outcome {
    let exec = execution(cfg)?;
    let spec = load_problem(cfg)?;
    let info = information(cfg, &spec)?;
    let plan = if cfg.exhaustive == Some(true) {
        ScenarioPlan::Exhaustive { max_paths: cfg.max_paths.unwrap_or(100_000) }
    } else {
        ScenarioPlan::Sampled { count: cfg.scenarios.unwrap_or(500), seed: cfg.seed.unwrap_or(0) }
    };
    let mut uz = UzawaConfig::new(cfg.step.unwrap_or(0.01), cfg.iters.unwrap_or(20), plan, grids(cfg, &spec)?);
    uz.stage_steps = cfg.stage_steps.clone();
    uz.gap_tolerance = cfg.gap_tol;
    uz.residual_tolerance = cfg.residual_tol;
    uz.alpha = cfg.alpha;
    uz.lipschitz = cfg.lipschitz;
    uz.estimator = estimator(cfg)?;
    uz.slack_unit = cfg.slack_unit;
    uz.histogram_bins = cfg.histogram_bins.unwrap_or(20);
    let set = match &cfg.scenario_file {
        Some(_) => scenarios(cfg, &spec, exec)?,
        None => uz.build_scenarios(&spec, exec)?,
    };
    let dir = out_dir(cfg)?;
    let res = run_dadp_on(&spec, &info, &uz, set, exec, &mut |r| {
        let primal = r.primal.map(|p| format!(" primal {:.6} ± {:.3e}", p.mean, p.half_width)).unwrap_or_default();
        println!("k {:>3}  dual {:.6} ± {:.3e}{primal}  max|mean r| {:.3e}", r.iteration, r.dual.mean, r.dual.half_width, r.max_mean_residual());
    })?;
    let mut outputs = vec!["iterations.csv".to_string()];
    let mut w = create(&dir, "iterations.csv")?;
    write_iterations_csv(&res.reports, &mut w)?;
    w.flush().map_err(|e| Failure::Runtime(e.into()))?;
    let histogram_reports = if cfg.all_histograms == Some(true) { &res.reports[..] } else { &res.reports[res.reports.len() - 1..] };
    for r in histogram_reports {
        for t in 0..r.stages.len() {
            let name = format!("residuals_k{}_t{t}.csv", r.iteration);
            let mut w = create(&dir, &name)?;
            write_residual_histogram_csv(r, t, &mut w)?;
            w.flush().map_err(|e| Failure::Runtime(e.into()))?;
            outputs.push(name);
        }
    }
    let mut w = create(&dir, "trajectories.csv")?;
    write_trajectories_csv(res.recovered.as_ref().unwrap_or(&res.bundle), &mut w)?;
    w.flush().map_err(|e| Failure::Runtime(e.into()))?;
    outputs.push("trajectories.csv".into());
    for (i, p) in res.policies.iter().enumerate() {
        let name = format!("value_function_u{i}.csv");
        let mut w = create(&dir, &name)?;
        p.value_function().write_csv(&mut w)?;
        w.flush().map_err(|e| Failure::Runtime(e.into()))?;
        outputs.push(name);
    }
    let last = res.reports.last().expect("at least one iteration");
    println!("stopped after {} iterations ({:?})", res.reports.len(), res.stop);
    write_manifest(
        &dir,
        "solve-dadp",
        cfg,
        &outputs,
        json!({
            "stop": res.stop,
            "iterations": res.reports.len(),
            "step_check": res.step_check,
            "final_dual": last.dual,
            "final_primal": last.primal,
            "information": info,
            "estimator": uz.estimator,
            "scenario_source": res.scenarios.source,
        }),
    )
}

fn simulate(cfg: &RunConfig) -> Outcome {
    let exec = execution(cfg)?;
    let spec = load_problem(cfg)?;
    let grids = grids(cfg, &spec)?;
    let dir = out_dir(cfg)?;
    let sol = solve_global_dp(&spec, &grids, exec)?;
    let set = scenarios(cfg, &spec, exec)?;
    let bundle = simulate_policy(&spec, &sol.policy, &set, None, exec)?;
    let est = estimate_cost(&bundle)?;
    let mut w = create(&dir, "trajectories.csv")?;
    write_trajectories_csv(&bundle, &mut w)?;
    w.flush().map_err(|e| Failure::Runtime(e.into()))?;
    let mut w = create(&dir, "scenarios.csv")?;
    write_scenarios_csv(&set, &mut w)?;
    w.flush().map_err(|e| Failure::Runtime(e.into()))?;
    println!("cost {:.6} ± {:.3e} over {} scenarios ({} violated stages)", est.mean, est.half_width, est.count, bundle.violation_count());
    write_manifest(
        &dir,
        "simulate",
        cfg,
        &["trajectories.csv".into(), "scenarios.csv".into()],
        json!({ "cost": est, "dp_value": sol.initial_value, "violations": bundle.violation_count() }),
    )
}

fn default_strugarek() -> StrugarekParams {
    use dadp_core::bench::Marginal;
    StrugarekParams::proportional(
        vec![1.0, 2.0],
        0.5,
        3,
        vec![5.0, 5.0],
        Marginal::uniform(vec![1.0, 3.0]),
        vec![Marginal::uniform(vec![0.0, 2.0]), Marginal::uniform(vec![1.0, 2.0])],
    )
}

fn oracle(params: &Path, scenario: Option<&Path>, cfg: &RunConfig) -> Outcome {
    let params: StrugarekParams = read_json(params, "reservoir parameter")?;
    let spec = make_strugarek(&params)?;
    let set = match scenario {
        Some(p) => {
            let file = File::open(p).map_err(|e| Failure::Usage(format!("cannot read scenario file {}: {e}", p.display())))?;
            read_scenarios_csv(file, ScenarioSource::Exhaustive)?
        }
        None => enumerate_scenarios(&spec.noise, cfg.max_paths.unwrap_or(100_000))?,
    };
    let dir = out_dir(cfg)?;
    let mut w = create(&dir, "prices.csv")?;
    writeln!(w, "scenario_id,t,price").map_err(|e| Failure::Runtime(e.into()))?;
    for (s, sc) in set.scenarios.iter().enumerate() {
        for (t, p) in strugarek_price_oracle(&params, sc)?.iter().enumerate() {
            writeln!(w, "{s},{t},{p:?}").map_err(|e| Failure::Runtime(e.into()))?;
        }
    }
    w.flush().map_err(|e| Failure::Runtime(e.into()))?;
    println!("prices along {} scenarios", set.len());
    write_manifest(&dir, "oracle", cfg, &["prices.csv".into()], json!({ "params": params, "scenarios": set.len() }))
}

fn generate(
    kind: GenerateKind,
    units: usize,
    horizon: usize,
    shared: bool,
    params: Option<&Path>,
    output: Option<&Path>,
    seed: u64,
) -> Outcome {
    let spec = match kind {
        GenerateKind::Tiny => {
            let (spec, grids) = tiny_instance();
            ProblemSpec { discretization: Some(grids), ..spec }
        }
        GenerateKind::ThreeUnit => {
            let p = match params {
                Some(path) => read_json(path, "three-unit parameter")?,
                None => ThreeUnitParams::default(),
            };
            make_three_unit(&p)?
        }
        GenerateKind::Independent => {
            let spec = make_independent_suite(units, shared)?;
            ProblemSpec { discretization: Some(dadp_core::bench::independent_grids(units)), ..spec }
        }
        GenerateKind::Multistock => make_multistock(units, horizon, seed)?,
        GenerateKind::Strugarek => {
            let p = match params {
                Some(path) => read_json(path, "reservoir parameter")?,
                None => default_strugarek(),
            };
            make_strugarek(&p)?
        }
    };
    let text = serde_json::to_string_pretty(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    match output {
        Some(p) => fs::write(p, text + "\n").map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
