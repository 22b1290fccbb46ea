use crate::error::{Error, Result};

pub(crate) const BOUND_TOL: f64 = 1e-9;

pub(crate) fn tol(v: f64) -> f64 {
    BOUND_TOL * v.abs().max(1.0)
}

/// Strictly increasing breakpoints along one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    points: Vec<f64>,
}

impl Axis {
    /// `nodes` evenly spaced points with exact endpoints. A degenerate box
    /// (`lower == upper`) gives a single node.
    pub fn uniform(lower: f64, upper: f64, nodes: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower > upper {
            return Err(Error::InvalidArgument(format!("cannot grid the interval [{lower}, {upper}]")));
        }
        if lower == upper {
            return Ok(Axis { points: vec![lower] });
        }
        if nodes < 2 {
            return Err(Error::InvalidArgument(format!("interval [{lower}, {upper}] needs at least 2 nodes")));
        }
        let span = upper - lower;
        let last = nodes - 1;
        let mut points: Vec<f64> = (0..nodes).map(|k| lower + span * k as f64 / last as f64).collect();
        points[last] = upper;
        Ok(Axis { points })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("breakpoints must be finite and strictly increasing".into()));
        }
        Ok(Axis { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.points[0]
    }

    pub fn upper(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Largest gap between consecutive breakpoints.
    pub fn resolution(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Cell `i` and weight `θ ∈ [0, 1)` with `x = (1 − θ) p_i + θ p_{i+1}`.
    fn locate(&self, dim: usize, x: f64) -> Result<(usize, f64)> {
        let (lo, hi) = (self.lower(), self.upper());
        if x.is_nan() || x < lo - tol(lo) || x > hi + tol(hi) {
            return Err(Error::OutsideGrid { dim, value: x, lower: lo, upper: hi });
        }
        let x = x.clamp(lo, hi);
        let i = self.points.partition_point(|p| *p <= x) - 1;
        if i + 1 == self.points.len() {
            return Ok((i, 0.0));
        }
        let (a, b) = (self.points[i], self.points[i + 1]);
        Ok((i, (x - a) / (b - a)))
    }

    /// Index of the breakpoint within `1e-9·max(1, |x|)` of `x`.
    pub fn snap(&self, x: f64) -> Option<usize> {
        let i = self.points.partition_point(|p| *p < x);
        let t = tol(x);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&k| k < self.points.len())
            .find(|&k| (self.points[k] - x).abs() <= t)
    }
}

/// Tensor-product grid; the last axis varies fastest in node numbering.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Self {
        let mut strides = vec![1; axes.len()];
        for j in (0..axes.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * axes[j + 1].len();
        }
        let len = axes.iter().map(Axis::len).product();
        Grid { axes, strides, len }
    }

    pub fn concat(grids: &[&Grid]) -> Self {
        Grid::new(grids.iter().flat_map(|g| g.axes.iter().cloned()).collect())
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Node count; a grid with no axes has a single node.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn point_into(&self, mut node: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.axes.len(), 0.0);
        for j in (0..self.axes.len()).rev() {
            let n = self.axes[j].len();
            out[j] = self.axes[j].points[node % n];
            node /= n;
        }
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.axes.len());
        self.point_into(node, &mut out);
        out
    }

    /// Node whose coordinates equal `x` within the snapping tolerance.
    pub fn node_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for (j, (a, v)) in self.axes.iter().zip(x).enumerate() {
            idx += a.snap(*v)? * self.strides[j];
        }
        Some(idx)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes.iter().zip(x).all(|(a, v)| *v >= a.lower() - tol(a.lower()) && *v <= a.upper() + tol(a.upper()))
    }

    /// Multilinear interpolation of `table` at `x`. Exact at nodes; a
    /// positive-weight `+∞` corner makes the result `+∞`.
    pub fn interpolate(&self, table: &[f64], x: &[f64]) -> Result<f64> {
        let mut base = 0;
        let mut active: [(usize, f64); 16] = [(0, 0.0); 16];
        let mut n_active = 0;
        for (j, a) in self.axes.iter().enumerate() {
            let (i, theta) = a.locate(j, x[j])?;
            base += i * self.strides[j];
            if theta > 0.0 {
                if n_active == active.len() {
                    return Err(Error::InvalidArgument("interpolation supports at most 16 active dimensions".into()));
                }
                active[n_active] = (self.strides[j], theta);
                n_active += 1;
            }
        }
        let mut acc = 0.0;
        for mask in 0..(1usize << n_active) {
            let mut weight = 1.0;
            let mut idx = base;
            for (b, &(stride, theta)) in active[..n_active].iter().enumerate() {
                if mask >> b & 1 == 1 {
                    weight *= theta;
                    idx += stride;
                } else {
                    weight *= 1.0 - theta;
                }
            }
            if weight == 0.0 {
                continue;
            }
            let v = table[idx];
            if v == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
            acc += weight * v;
        }
        Ok(acc)
    }
}
