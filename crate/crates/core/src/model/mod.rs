//! Decomposable stochastic optimal control problems with finite-support noise.

mod catalog;
mod info;
mod noise;
mod problem;
mod validate;

pub use catalog::{AffineMap, AffinePiece, Cost, CostTerm, Coupling, Dynamics, Matrix, QuadraticForm};
pub use info::{InfoGrid, InformationSpec};
pub use noise::{NoiseClass, NoiseModel, StageDistribution};
pub use problem::{
    Bound, BoundSeq, BoxBounds, CouplingSpec, GridConfig, ProblemSpec, StageSeq, SubsystemSpec, UnitGrid,
};
pub use validate::{parse_problem, validate_problem, ValidationReport, Violation};

/// `w ↦ ½ h u² + l u` style scalar quadratic helper over `z = [x; u; w]`:
/// puts `hess` on the diagonal slots listed and `lin` on the linear ones.
pub fn diagonal_quadratic(dim: usize, hess: &[(usize, f64)], lin: &[(usize, f64)], constant: f64) -> Cost {
    let mut h = Matrix::zeros(dim, dim);
    for &(i, v) in hess {
        h.set(i, i, v);
    }
    let mut l = vec![0.0; dim];
    for &(i, v) in lin {
        l[i] = v;
    }
    Cost::quadratic(QuadraticForm {
        hessian: if hess.is_empty() { None } else { Some(h) },
        linear: if lin.is_empty() { None } else { Some(l) },
        constant,
    })
}

/// Scalar storage unit `x' = x − u + w_j` with cost `eps·u²`, final cost
/// `k (x − target)²` and coupling `g = u`.
#[allow(clippy::too_many_arguments)]
pub fn storage_unit(
    name: &str,
    inflow_coord: Option<usize>,
    noise_dim: usize,
    eps: f64,
    final_weight: f64,
    target: f64,
    x0: f64,
    state_box: (f64, f64),
    control_box: (f64, f64),
) -> SubsystemSpec {
    let e = inflow_coord.map(|j| Matrix::sparse(1, noise_dim, &[(0, j, 1.0)]));
    SubsystemSpec {
        name: name.to_string(),
        state_dim: 1,
        control_dim: 1,
        initial_state: vec![x0],
        dynamics: StageSeq::Constant(Dynamics::Affine {
            a: Matrix::identity(1),
            b: Matrix::from_rows(&[vec![-1.0]]).expect("1x1"),
            e,
            c: None,
        }),
        stage_cost: StageSeq::Constant(diagonal_quadratic(2 + noise_dim, &[(1, 2.0 * eps)], &[], 0.0)),
        // k (x − a)² = ½ (2k) x² − 2 k a x + k a²
        final_cost: diagonal_quadratic(1, &[(0, 2.0 * final_weight)], &[(0, -2.0 * final_weight * target)], final_weight * target * target),
        coupling: StageSeq::Constant(Coupling::Affine {
            gx: None,
            gu: Some(Matrix::identity(1)),
            gw: None,
            c: None,
        }),
        state_bounds: BoxBounds::constant(&[state_box.0], &[state_box.1]),
        control_bounds: BoxBounds::constant(&[control_box.0], &[control_box.1]),
    }
}
