use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    storage_unit, BoxBounds, Cost, CostTerm, Coupling, CouplingSpec, Dynamics, GridConfig, Matrix, NoiseClass,
    NoiseModel, ProblemSpec, QuadraticForm, StageDistribution, StageSeq, SubsystemSpec, UnitGrid,
};

const STEP: f64 = 0.5;

fn half(x: f64) -> f64 {
    (x / STEP).round() * STEP
}

/// `n` aggregated stocks and a thermal unit whose cost `(2 − p̄_t) u²`
/// depends on a random availability `p̄_t ∈ {0.8, 1}`. Noise is
/// `w = (a¹..aⁿ, p̄, d)` with two-point inflows and a seasonal two-point
/// demand. Every bound, inflow and demand is a multiple of ½ so states and
/// thermal controls stay on the nodes of [`multistock_grids`].
pub fn make_multistock(n: usize, horizon: usize, seed: u64) -> Result<ProblemSpec> {
    if n == 0 || horizon < 2 {
        return Err(Error::InvalidArgument("multistock needs at least one stock and two stages".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = n + 2;
    struct Stock {
        cap: f64,
        umax: f64,
        inflow: (f64, f64),
        eps: f64,
        weight: f64,
    }
    let stocks: Vec<Stock> = (0..n)
        .map(|_| {
            let cap = rng.random_range(8..=14) as f64;
            let umax = rng.random_range(2..=3) as f64;
            let lo = half(rng.random_range(0.0..1.0));
            Stock { cap, umax, inflow: (lo, lo + 1.0), eps: rng.random_range(0.005..0.02), weight: rng.random_range(0.05..0.2) }
        })
        .collect();
    let mean_inflow: f64 = stocks.iter().map(|s| s.inflow.0 + 0.5).sum();
    let base = mean_inflow + 2.0;
    let thermal_upper = half(base * 1.3 + 1.0) + 1.0;
    let stages = (0..horizon)
        .map(|t| {
            let season = 1.0 + 0.3 * (2.0 * std::f64::consts::PI * t as f64 / 52.0).sin();
            let centre = half(base * season);
            let mut marginals: Vec<(Vec<f64>, Vec<f64>)> =
                stocks.iter().map(|s| (vec![s.inflow.0, s.inflow.1], vec![0.5, 0.5])).collect();
            marginals.push((vec![0.8, 1.0], vec![0.3, 0.7]));
            marginals.push((vec![(centre - 1.0).max(0.0), centre + 1.0], vec![0.5, 0.5]));
            StageDistribution::product(&marginals)
        })
        .collect();
    let mut partition: Vec<NoiseClass> = (0..n).map(NoiseClass::Local).collect();
    partition.extend([NoiseClass::Global, NoiseClass::Global]);
    let mut subsystems: Vec<SubsystemSpec> = stocks
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let x0 = half(s.cap / 2.0);
            storage_unit(&format!("stock{}", i + 1), Some(i), q, s.eps, s.weight, x0, x0, (0.0, s.cap), (0.0, s.umax))
        })
        .collect();
    let mut scale = vec![0.0; q];
    scale[n] = -1.0;
    let mut hess = Matrix::zeros(1 + q, 1 + q);
    hess.set(0, 0, 2.0);
    subsystems.push(SubsystemSpec {
        name: "thermal".into(),
        state_dim: 0,
        control_dim: 1,
        initial_state: vec![],
        dynamics: StageSeq::Constant(Dynamics::default()),
        stage_cost: StageSeq::Constant(Cost(vec![CostTerm::ScaledQuadratic {
            scale_constant: 2.0,
            scale_noise: scale,
            form: QuadraticForm { hessian: Some(hess), linear: None, constant: 0.0 },
        }])),
        final_cost: Cost::zero(),
        coupling: StageSeq::Constant(Coupling::Affine {
            gx: None,
            gu: Some(Matrix::identity(1)),
            gw: Some(Matrix::sparse(1, q, &[(0, n + 1, -1.0)])),
            c: None,
        }),
        state_bounds: BoxBounds::constant(&[], &[]),
        control_bounds: BoxBounds::constant(&[0.0], &[thermal_upper]),
    });
    let spec = ProblemSpec {
        name: Some(format!("multistock{n}x{horizon}")),
        horizon,
        noise: NoiseModel { stages, partition },
        subsystems,
        coupling: CouplingSpec { dimension: 1 },
        discretization: None,
    };
    Ok(ProblemSpec { discretization: Some(multistock_grids(&spec)), ..spec })
}

/// Step-½ grids on every state and control box.
pub fn multistock_grids(spec: &ProblemSpec) -> GridConfig {
    let nodes = |lo: &[f64], hi: &[f64]| -> Vec<usize> {
        lo.iter().zip(hi).map(|(l, h)| ((h - l) / STEP).round() as usize + 1).collect()
    };
    GridConfig::new(
        spec.subsystems
            .iter()
            .map(|s| {
                let (sl, sh) = s.state_box(0);
                let (cl, ch) = s.control_box(0);
                UnitGrid { state_nodes: nodes(&sl, &sh), control_nodes: nodes(&cl, &ch) }
            })
            .collect(),
    )
}
