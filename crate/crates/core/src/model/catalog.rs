//! Closed catalog of evaluable mappings: affine dynamics, quadratic and
//! piecewise-linear costs, affine couplings and affine information maps.
//!
//! Every mapping serializes as a catalog name plus coefficient arrays, so a
//! problem can live in a plain JSON document.

use serde::{Deserialize, Serialize};

/// Dense row-major matrix. Serialized as a list of rows.
///
/// A matrix with zero rows has zero columns; products with it return an
/// empty vector whatever the input length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols: if rows == 0 { 0 } else { cols }, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, String> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err("matrix rows have unequal lengths".into());
        }
        Ok(Matrix { rows: r, cols: c, data: rows.iter().flatten().copied().collect() })
    }

    /// Builds a `rows x cols` matrix with `entries` given as `(row, col, value)`.
    pub fn sparse(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for &(i, j, v) in entries {
            m.set(i, j, v);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Matches an expected shape, treating any zero-row matrix as compatible
    /// with zero expected rows.
    pub fn has_shape(&self, rows: usize, cols: usize) -> bool {
        self.rows == rows && (rows == 0 || self.cols == cols)
    }

    /// `out += self * v`
    pub fn mul_add(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            let mut acc = 0.0;
            for (a, x) in self.row(i).iter().zip(v) {
                if *a != 0.0 {
                    acc += a * x;
                }
            }
            *o += acc;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = String;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        (0..m.rows).map(|i| m.row(i).to_vec()).collect()
    }
}

fn mul_add_opt(m: &Option<Matrix>, v: &[f64], out: &mut [f64]) {
    if let Some(m) = m {
        m.mul_add(v, out);
    }
}

fn shape_ok(m: &Option<Matrix>, rows: usize, cols: usize) -> bool {
    m.as_ref().is_none_or(|m| m.has_shape(rows, cols))
}

/// State transition `x' = A x + B u + E w + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    Affine {
        a: Matrix,
        b: Matrix,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        e: Option<Matrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<Vec<f64>>,
    },
}

impl Dynamics {
    pub fn eval(&self, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        match self {
            Dynamics::Affine { a, b, e, c } => {
                match c {
                    Some(c) => out.copy_from_slice(c),
                    None => out.fill(0.0),
                }
                a.mul_add(x, out);
                b.mul_add(u, out);
                mul_add_opt(e, w, out);
            }
        }
    }

    pub fn shape_errors(&self, n: usize, m: usize, q: usize) -> Vec<String> {
        let mut errs = Vec::new();
        match self {
            Dynamics::Affine { a, b, e, c } => {
                if !a.has_shape(n, n) {
                    errs.push(format!("dynamics matrix a must be {n}x{n}"));
                }
                if !b.has_shape(n, m) {
                    errs.push(format!("dynamics matrix b must be {n}x{m}"));
                }
                if !shape_ok(e, n, q) {
                    errs.push(format!("dynamics matrix e must be {n}x{q}"));
                }
                if c.as_ref().is_some_and(|c| c.len() != n) {
                    errs.push(format!("dynamics offset c must have length {n}"));
                }
            }
        }
        errs
    }

    /// Noise coordinates with a nonzero coefficient.
    pub fn noise_support(&self) -> Vec<usize> {
        match self {
            Dynamics::Affine { e: Some(e), .. } => nonzero_cols(e),
            _ => Vec::new(),
        }
    }
}

fn nonzero_cols(m: &Matrix) -> Vec<usize> {
    (0..m.cols()).filter(|&j| (0..m.rows()).any(|i| m.get(i, j) != 0.0)).collect()
}

/// `½ zᵀ H z + lᵀ z + c` over a stacked argument `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct QuadraticForm {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<f64>>,
    #[serde(default)]
    pub constant: f64,
}

impl QuadraticForm {
    pub fn eval(&self, z: &[f64]) -> f64 {
        let mut acc = self.constant;
        if let Some(l) = &self.linear {
            for (a, x) in l.iter().zip(z) {
                if *a != 0.0 {
                    acc += a * x;
                }
            }
        }
        if let Some(h) = &self.hessian {
            let mut quad = 0.0;
            for i in 0..h.rows() {
                for (j, hij) in h.row(i).iter().enumerate() {
                    if *hij != 0.0 {
                        quad += z[i] * hij * z[j];
                    }
                }
            }
            acc += 0.5 * quad;
        }
        acc
    }

    fn shape_errors(&self, dim: usize) -> Vec<String> {
        let mut errs = Vec::new();
        if !shape_ok(&self.hessian, dim, dim) && self.hessian.as_ref().is_some_and(|h| h.rows() != 0 || dim != 0) {
            errs.push(format!("quadratic hessian must be {dim}x{dim}"));
        }
        if self.linear.as_ref().is_some_and(|l| l.len() != dim) {
            errs.push(format!("quadratic linear term must have length {dim}"));
        }
        errs
    }

    fn touches(&self, idx: usize) -> bool {
        self.linear.as_ref().is_some_and(|l| l.get(idx).is_some_and(|v| *v != 0.0))
            || self.hessian.as_ref().is_some_and(|h| {
                idx < h.rows() && (0..h.cols()).any(|j| h.get(idx, j) != 0.0 || h.get(j, idx) != 0.0)
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub slope: Vec<f64>,
    #[serde(default)]
    pub intercept: f64,
}

/// One additive cost term. The argument is `z = [x; u; w]` for stage costs
/// and `z = x` for final costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostTerm {
    Quadratic(QuadraticForm),
    /// `(s0 + sᵀ w) · q(z)`: a quadratic whose weight is driven by noise.
    ScaledQuadratic {
        #[serde(default)]
        scale_constant: f64,
        scale_noise: Vec<f64>,
        form: QuadraticForm,
    },
    /// Convex maximum of affine pieces.
    PiecewiseLinear { pieces: Vec<AffinePiece> },
}

/// Sum of catalog terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Cost(pub Vec<CostTerm>);

impl Cost {
    pub fn zero() -> Self {
        Cost(Vec::new())
    }

    pub fn quadratic(form: QuadraticForm) -> Self {
        Cost(vec![CostTerm::Quadratic(form)])
    }

    /// `w` is the noise slice of `z` (empty for final costs).
    pub fn eval(&self, z: &[f64], w: &[f64]) -> f64 {
        let mut acc = 0.0;
        for term in &self.0 {
            acc += match term {
                CostTerm::Quadratic(q) => q.eval(z),
                CostTerm::ScaledQuadratic { scale_constant, scale_noise, form } => {
                    let s = scale_constant + scale_noise.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
                    s * form.eval(z)
                }
                CostTerm::PiecewiseLinear { pieces } => pieces
                    .iter()
                    .map(|p| p.intercept + p.slope.iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max),
            };
        }
        acc
    }

    pub fn shape_errors(&self, dim: usize, noise_dim: usize) -> Vec<String> {
        let mut errs = Vec::new();
        for term in &self.0 {
            match term {
                CostTerm::Quadratic(q) => errs.extend(q.shape_errors(dim)),
                CostTerm::ScaledQuadratic { scale_noise, form, .. } => {
                    if scale_noise.len() != noise_dim {
                        errs.push(format!("scale_noise must have length {noise_dim}"));
                    }
                    errs.extend(form.shape_errors(dim));
                }
                CostTerm::PiecewiseLinear { pieces } => {
                    if pieces.is_empty() {
                        errs.push("piecewise_linear cost needs at least one piece".into());
                    }
                    if pieces.iter().any(|p| p.slope.len() != dim) {
                        errs.push(format!("piecewise_linear slopes must have length {dim}"));
                    }
                }
            }
        }
        errs
    }

    /// Whether the cost touches argument slot `idx` of `z`.
    pub fn touches(&self, idx: usize, noise_offset: usize) -> bool {
        self.0.iter().any(|term| match term {
            CostTerm::Quadratic(q) => q.touches(idx),
            CostTerm::ScaledQuadratic { scale_noise, form, .. } => {
                form.touches(idx)
                    || (idx >= noise_offset
                        && scale_noise.get(idx - noise_offset).is_some_and(|v| *v != 0.0))
            }
            CostTerm::PiecewiseLinear { pieces } => pieces.iter().any(|p| p.slope.get(idx).is_some_and(|v| *v != 0.0)),
        })
    }

    /// Affine-quadratic data `(H, l, c)` in `z` when the cost has no
    /// piecewise-linear term; scaled terms are folded with the given noise.
    pub fn quadratic_data(&self, dim: usize, w: &[f64]) -> Option<(Matrix, Vec<f64>, f64)> {
        let mut h = Matrix::zeros(dim, dim);
        let mut l = vec![0.0; dim];
        let mut c = 0.0;
        for term in &self.0 {
            let (form, s) = match term {
                CostTerm::Quadratic(q) => (q, 1.0),
                CostTerm::ScaledQuadratic { scale_constant, scale_noise, form } => {
                    (form, scale_constant + scale_noise.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
                }
                CostTerm::PiecewiseLinear { .. } => return None,
            };
            if let Some(hm) = &form.hessian {
                for i in 0..hm.rows() {
                    for j in 0..hm.cols() {
                        // symmetrize: ½ zᵀ H z only sees (H + Hᵀ)/2
                        let v = 0.5 * (hm.get(i, j) + hm.get(j, i));
                        h.set(i, j, h.get(i, j) + s * v);
                    }
                }
            }
            if let Some(lin) = &form.linear {
                for (li, v) in l.iter_mut().zip(lin) {
                    *li += s * v;
                }
            }
            c += s * form.constant;
        }
        Some((h, l, c))
    }
}

/// Coupling contribution `g(x, u, w) ∈ R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coupling {
    /// Identically zero in every coupling coordinate.
    #[default]
    Zero,
    Affine {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gx: Option<Matrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gu: Option<Matrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gw: Option<Matrix>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<Vec<f64>>,
    },
}

impl Coupling {
    /// Output dimension, `None` for the zero map (it adapts to any `d`).
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Coupling::Zero => None,
            Coupling::Affine { gx, gu, gw, c } => gx
                .as_ref()
                .map(Matrix::rows)
                .or(gu.as_ref().map(Matrix::rows))
                .or(gw.as_ref().map(Matrix::rows))
                .or(c.as_ref().map(Vec::len)),
        }
    }

    /// Writes `g(x, u, w)` into `out` (length `d`).
    pub fn eval(&self, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        match self {
            Coupling::Zero => out.fill(0.0),
            Coupling::Affine { gx, gu, gw, c } => {
                match c {
                    Some(c) => out.copy_from_slice(c),
                    None => out.fill(0.0),
                }
                mul_add_opt(gx, x, out);
                mul_add_opt(gu, u, out);
                mul_add_opt(gw, w, out);
            }
        }
    }

    pub fn shape_errors(&self, d: usize, n: usize, m: usize, q: usize) -> Vec<String> {
        let mut errs = Vec::new();
        if let Coupling::Affine { gx, gu, gw, c } = self {
            let dims: Vec<usize> = [gx, gu, gw].iter().filter_map(|g| g.as_ref().map(Matrix::rows)).collect();
            if dims.iter().any(|r| *r != d) || c.as_ref().is_some_and(|c| c.len() != d) {
                errs.push("coupling dimension mismatch".into());
                return errs;
            }
            if !shape_ok(gx, d, n) {
                errs.push(format!("coupling gx must be {d}x{n}"));
            }
            if !shape_ok(gu, d, m) {
                errs.push(format!("coupling gu must be {d}x{m}"));
            }
            if !shape_ok(gw, d, q) {
                errs.push(format!("coupling gw must be {d}x{q}"));
            }
        }
        errs
    }

    /// Control coefficient matrix (`d x m`), zero when absent.
    pub fn control_matrix(&self, d: usize, m: usize) -> Matrix {
        match self {
            Coupling::Affine { gu: Some(gu), .. } => gu.clone(),
            _ => Matrix::zeros(d, m),
        }
    }

    pub fn state_matrix(&self, d: usize, n: usize) -> Matrix {
        match self {
            Coupling::Affine { gx: Some(gx), .. } => gx.clone(),
            _ => Matrix::zeros(d, n),
        }
    }

    pub fn noise_support(&self) -> Vec<usize> {
        match self {
            Coupling::Affine { gw: Some(gw), .. } => nonzero_cols(gw),
            _ => Vec::new(),
        }
    }
}

/// `y = A y_prev + B w + c`; `a` is absent for maps of the noise alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Matrix>,
    pub b: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
}

impl AffineMap {
    /// Selects the listed noise coordinates: `y = (w_i)_{i in coords}`.
    pub fn select(coords: &[usize], noise_dim: usize) -> Self {
        let entries: Vec<_> = coords.iter().enumerate().map(|(r, &c)| (r, c, 1.0)).collect();
        AffineMap { a: None, b: Matrix::sparse(coords.len(), noise_dim, &entries), c: None }
    }

    pub fn dim(&self) -> usize {
        self.b.rows()
    }

    pub fn eval(&self, prev: Option<&[f64]>, w: &[f64]) -> Vec<f64> {
        let mut out = match &self.c {
            Some(c) => c.clone(),
            None => vec![0.0; self.dim()],
        };
        if let (Some(a), Some(prev)) = (&self.a, prev) {
            a.mul_add(prev, &mut out);
        }
        self.b.mul_add(w, &mut out);
        out
    }

    pub fn noise_support(&self) -> Vec<usize> {
        nonzero_cols(&self.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_json_roundtrip_and_empty() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[1.0,2.0],[3.0,4.0]]");
        let back: Matrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let empty: Matrix = serde_json::from_str("[]").unwrap();
        assert!(empty.has_shape(0, 7));
        assert!(serde_json::from_str::<Matrix>("[[1.0],[1.0,2.0]]").is_err());
    }

    #[test]
    fn affine_dynamics_eval() {
        let dynamics = Dynamics::Affine {
            a: Matrix::identity(1),
            b: Matrix::from_rows(&[vec![-1.0]]).unwrap(),
            e: Some(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap()),
            c: None,
        };
        let mut out = [0.0];
        dynamics.eval(&[5.0], &[2.0], &[1.5, 9.0], &mut out);
        assert_eq!(out[0], 4.5);
        assert_eq!(dynamics.noise_support(), vec![0]);
    }

    #[test]
    fn quadratic_and_piecewise_costs() {
        // ½·2·u² + 3u + 1 with z = [u]
        let q = QuadraticForm {
            hessian: Some(Matrix::from_rows(&[vec![2.0]]).unwrap()),
            linear: Some(vec![3.0]),
            constant: 1.0,
        };
        let cost = Cost(vec![
            CostTerm::Quadratic(q.clone()),
            CostTerm::PiecewiseLinear {
                pieces: vec![
                    AffinePiece { slope: vec![1.0], intercept: 0.0 },
                    AffinePiece { slope: vec![-1.0], intercept: 0.0 },
                ],
            },
        ]);
        assert_eq!(cost.eval(&[2.0], &[]), 4.0 + 6.0 + 1.0 + 2.0);
        let scaled = Cost(vec![CostTerm::ScaledQuadratic { scale_constant: 1.0, scale_noise: vec![2.0], form: q }]);
        // scale = 1 + 2·0.5 = 2
        assert_eq!(scaled.eval(&[2.0, 0.5], &[0.5]), 2.0 * 11.0);
    }

    #[test]
    fn coupling_dimension_detection() {
        let g = Coupling::Affine { gx: None, gu: Some(Matrix::identity(2)), gw: None, c: None };
        assert_eq!(g.dimension(), Some(2));
        assert_eq!(g.shape_errors(1, 0, 2, 0), vec!["coupling dimension mismatch".to_string()]);
        assert_eq!(Coupling::Zero.dimension(), None);
    }
}
